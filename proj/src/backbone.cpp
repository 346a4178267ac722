#include "pcad/backbone.hpp"

#include <cmath>
#include <mutex>

#include "pcad/parallel.hpp"
#include "pcad/rng.hpp"

namespace pcad {

namespace {

constexpr float kBnEps = 1e-5f;

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

Linear make_linear(int in, int out, Rng& rng) {
    Linear l;
    l.w = Mat(in, out);
    const float limit = static_cast<float>(std::sqrt(6.0 / (in + out)));
    for (auto& x : l.w.v) x = rng.uniform_f(-limit, limit);
    l.b.assign(out, 0.0f);
    return l;
}

BatchNorm make_bn(int width) {
    BatchNorm bn;
    bn.gamma.assign(width, 1.0f);
    bn.beta.assign(width, 0.0f);
    bn.run_mean.assign(width, 0.0f);
    bn.run_var.assign(width, 1.0f);
    return bn;
}

PPLayer make_pp(int in, int out, Rng& rng) { return PPLayer{make_linear(in, out, rng), make_bn(out)}; }

AlignNet make_align(int k, const AlignWidths& w, Rng& rng) {
    AlignNet net;
    net.k = k;
    int in = k;
    for (int width : w.point) {
        net.point.push_back(make_pp(in, width, rng));
        in = width;
    }
    for (int width : w.dense) {
        net.dense.push_back(make_linear(in, width, rng));
        in = width;
    }
    net.final_fc.w = Mat(in, k * k);  // zero weights
    net.final_fc.b.assign(static_cast<size_t>(k) * k, 0.0f);
    for (int i = 0; i < k; ++i) net.final_fc.b[static_cast<size_t>(i) * k + i] = 1.0f;
    return net;
}

void check_finite_mat(const Mat& m, const std::string& layer) {
    for (float x : m.v)
        if (!std::isfinite(x)) throw std::runtime_error("non-finite activation in layer " + layer);
}

void add_bias(Mat& y, const std::vector<float>& b, int threads) {
    parallel_for(y.rows, threads, [&](int r) {
        float* row = y.row(r);
        for (int j = 0; j < y.cols; ++j) row[j] += b[j];
    });
}

// Linear -> BatchNorm -> ReLU on all N rows. Train mode normalizes with
// batch statistics over every row and folds them into the running averages
// (equal-weight cumulative mean); eval mode applies the stored averages.
void pp_forward(PPLayer& L, const Mat& x, Mode mode, ForwardTrace::PPCache& cache,
                const std::string& name, int threads) {
    const int n = x.rows, out = L.lin.w.cols;
    cache.y = Mat(n, out);
    gemm(false, false, 1.0f, x, L.lin.w, 0.0f, cache.y);
    add_bias(cache.y, L.lin.b, threads);

    if (mode == Mode::Train) {
        std::vector<double> sum(out, 0.0), sumsq(out, 0.0);
        for (int r = 0; r < n; ++r) {
            const float* row = cache.y.row(r);
            for (int j = 0; j < out; ++j) {
                sum[j] += row[j];
                sumsq[j] += static_cast<double>(row[j]) * row[j];
            }
        }
        std::vector<float> mean(out), inv_std(out);
        for (int j = 0; j < out; ++j) {
            double m = sum[j] / n;
            double var = std::max(0.0, sumsq[j] / n - m * m);
            mean[j] = static_cast<float>(m);
            inv_std[j] = static_cast<float>(1.0 / std::sqrt(var + kBnEps));
            auto& bn = L.bn;
            bn.run_mean[j] = static_cast<float>((static_cast<double>(bn.run_mean[j]) * bn.steps + m) /
                                                (bn.steps + 1));
            bn.run_var[j] = static_cast<float>(
                (static_cast<double>(bn.run_var[j]) * bn.steps + std::max(0.0, sumsq[j] / n - m * m)) /
                (bn.steps + 1));
        }
        L.bn.steps += 1;
        cache.inv_std = inv_std;
        cache.xhat = Mat(n, out);
        parallel_for(n, threads, [&](int r) {
            float* yr = cache.y.row(r);
            float* xh = cache.xhat.row(r);
            for (int j = 0; j < out; ++j) {
                float h = (yr[j] - mean[j]) * inv_std[j];
                xh[j] = h;
                float v = L.bn.gamma[j] * h + L.bn.beta[j];
                yr[j] = v > 0.0f ? v : 0.0f;
            }
        });
    } else {
        std::vector<float> scale(out), shift(out);
        for (int j = 0; j < out; ++j) {
            float s = L.bn.gamma[j] / std::sqrt(L.bn.run_var[j] + kBnEps);
            scale[j] = s;
            shift[j] = L.bn.beta[j] - s * L.bn.run_mean[j];
        }
        parallel_for(n, threads, [&](int r) {
            float* yr = cache.y.row(r);
            for (int j = 0; j < out; ++j) {
                float v = scale[j] * yr[j] + shift[j];
                yr[j] = v > 0.0f ? v : 0.0f;
            }
        });
    }
    check_finite_mat(cache.y, name);
}

// Coordinate-wise max over each cloud's rows; ties keep the lowest row so
// gradient routing is well defined.
void max_pool(const Mat& x, int B, int W, Mat& tap, std::vector<int>& arg) {
    const int d = x.cols;
    tap = Mat(B, d);
    arg.assign(static_cast<size_t>(B) * d, 0);
    for (int c = 0; c < B; ++c) {
        const int base = c * W;
        float* trow = tap.row(c);
        int* arow = arg.data() + static_cast<size_t>(c) * d;
        const float* first = x.row(base);
        for (int j = 0; j < d; ++j) {
            trow[j] = first[j];
            arow[j] = base;
        }
        for (int r = 1; r < W; ++r) {
            const float* row = x.row(base + r);
            for (int j = 0; j < d; ++j)
                if (row[j] > trow[j]) {
                    trow[j] = row[j];
                    arow[j] = base + r;
                }
        }
    }
}

void align_forward(AlignNet& net, const Mat& x, int B, int W, Mode mode,
                   ForwardTrace::AlignCache& cache, const std::string& name, int threads) {
    cache.point.resize(net.point.size());
    const Mat* cur = &x;
    for (size_t i = 0; i < net.point.size(); ++i) {
        pp_forward(net.point[i], *cur, mode, cache.point[i], name + ".point" + std::to_string(i),
                   threads);
        cur = &cache.point[i].y;
    }
    max_pool(*cur, B, W, cache.pooled, cache.argmax);

    cache.dense_y.resize(net.dense.size());
    const Mat* d = &cache.pooled;
    for (size_t i = 0; i < net.dense.size(); ++i) {
        Mat& y = cache.dense_y[i];
        y = Mat(B, net.dense[i].w.cols);
        gemm(false, false, 1.0f, *d, net.dense[i].w, 0.0f, y);
        add_bias(y, net.dense[i].b, threads);
        for (auto& v : y.v) v = v > 0.0f ? v : 0.0f;
        check_finite_mat(y, name + ".dense" + std::to_string(i));
        d = &y;
    }
    cache.transform = Mat(B, net.k * net.k);
    gemm(false, false, 1.0f, *d, net.final_fc.w, 0.0f, cache.transform);
    add_bias(cache.transform, net.final_fc.b, threads);
    check_finite_mat(cache.transform, name + ".final");
}

// Per cloud: rows [cW,(c+1)W) of x times that cloud's k x k transform.
Mat apply_transform(const Mat& x, const Mat& transforms, int B, int W, int k) {
    Mat y(x.rows, k);
    for (int c = 0; c < B; ++c)
        gemm_raw(false, false, W, k, k, 1.0f, x.row(c * W), k, transforms.row(c), k, 0.0f,
                 y.row(c * W), k);
    return y;
}

}  // namespace

void BackboneConfig::validate() const {
    require(!g1.empty(), "backbone config: g1 stack empty");
    for (int w : g1) require(w > 0, "backbone config: g1 width must be positive");
    require(mid >= 0, "backbone config: mid width must be >= 0 (0 drops the layer)");
    require(out > 0, "backbone config: out width must be positive");
    require(num_parts >= 0, "backbone config: num_parts must be >= 0");
    for (const AlignWidths* a : {&align1, &align2}) {
        require(!a->point.empty() && !a->dense.empty(), "backbone config: alignment stacks empty");
        for (int w : a->point) require(w > 0, "backbone config: alignment width must be positive");
        for (int w : a->dense) require(w > 0, "backbone config: alignment width must be positive");
    }
    if (num_parts > 0)
        for (int w : seg_hidden) require(w > 0, "backbone config: seg width must be positive");
}

BackboneParams init_params(const BackboneConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    BackboneParams p;
    p.config = config;
    p.align1 = make_align(3, config.align1, rng);
    int in = 3;
    for (int width : config.g1) {
        p.g1.push_back(make_pp(in, width, rng));
        in = width;
    }
    p.align2 = make_align(config.h1(), config.align2, rng);
    if (config.has_mid()) {
        p.mid = make_pp(config.h1(), config.mid, rng);
        in = config.mid;
    } else {
        in = config.h1();
    }
    p.out = make_pp(in, config.out, rng);
    if (config.has_seg()) {
        SegHead seg;
        int sin = config.h1() + config.h3();
        for (int width : config.seg_hidden) {
            seg.hidden.push_back(make_pp(sin, width, rng));
            sin = width;
        }
        seg.logits = make_linear(sin, config.num_parts, rng);
        p.seg = std::move(seg);
    }
    return p;
}

namespace {

void visit_linear(std::vector<TensorRef>& refs, const std::string& name, Linear& l) {
    refs.push_back({name + ".w", &l.w.v});
    refs.push_back({name + ".b", &l.b});
}

void visit_pp(std::vector<TensorRef>& refs, const std::string& name, PPLayer& L) {
    visit_linear(refs, name, L.lin);
    refs.push_back({name + ".gamma", &L.bn.gamma});
    refs.push_back({name + ".beta", &L.bn.beta});
}

void visit_align(std::vector<TensorRef>& refs, const std::string& name, AlignNet& a) {
    for (size_t i = 0; i < a.point.size(); ++i) visit_pp(refs, name + ".point" + std::to_string(i), a.point[i]);
    for (size_t i = 0; i < a.dense.size(); ++i)
        visit_linear(refs, name + ".dense" + std::to_string(i), a.dense[i]);
    visit_linear(refs, name + ".final", a.final_fc);
}

}  // namespace

std::vector<TensorRef> trainable_tensors(BackboneParams& p) {
    std::vector<TensorRef> refs;
    visit_align(refs, "align1", p.align1);
    for (size_t i = 0; i < p.g1.size(); ++i) visit_pp(refs, "g1." + std::to_string(i), p.g1[i]);
    visit_align(refs, "align2", p.align2);
    if (p.mid) visit_pp(refs, "mid", *p.mid);
    visit_pp(refs, "out", p.out);
    if (p.seg) {
        for (size_t i = 0; i < p.seg->hidden.size(); ++i)
            visit_pp(refs, "seg.hidden" + std::to_string(i), p.seg->hidden[i]);
        visit_linear(refs, "seg.logits", p.seg->logits);
    }
    return refs;
}

namespace {

void visit_bn_stats(std::vector<TensorRef>& refs, const std::string& name, BatchNorm& bn) {
    refs.push_back({name + ".run_mean", &bn.run_mean});
    refs.push_back({name + ".run_var", &bn.run_var});
}

}  // namespace

std::vector<TensorRef> stat_tensors(BackboneParams& p) {
    std::vector<TensorRef> refs;
    auto align_stats = [&](const std::string& name, AlignNet& a) {
        for (size_t i = 0; i < a.point.size(); ++i)
            visit_bn_stats(refs, name + ".point" + std::to_string(i), a.point[i].bn);
    };
    align_stats("align1", p.align1);
    for (size_t i = 0; i < p.g1.size(); ++i) visit_bn_stats(refs, "g1." + std::to_string(i), p.g1[i].bn);
    align_stats("align2", p.align2);
    if (p.mid) visit_bn_stats(refs, "mid", p.mid->bn);
    visit_bn_stats(refs, "out", p.out.bn);
    if (p.seg)
        for (size_t i = 0; i < p.seg->hidden.size(); ++i)
            visit_bn_stats(refs, "seg.hidden" + std::to_string(i), p.seg->hidden[i].bn);
    return refs;
}

std::vector<std::pair<std::string, int64_t*>> bn_step_refs(BackboneParams& p) {
    std::vector<std::pair<std::string, int64_t*>> refs;
    auto align_steps = [&](const std::string& name, AlignNet& a) {
        for (size_t i = 0; i < a.point.size(); ++i)
            refs.emplace_back(name + ".point" + std::to_string(i), &a.point[i].bn.steps);
    };
    align_steps("align1", p.align1);
    for (size_t i = 0; i < p.g1.size(); ++i) refs.emplace_back("g1." + std::to_string(i), &p.g1[i].bn.steps);
    align_steps("align2", p.align2);
    if (p.mid) refs.emplace_back("mid", &p.mid->bn.steps);
    refs.emplace_back("out", &p.out.bn.steps);
    if (p.seg)
        for (size_t i = 0; i < p.seg->hidden.size(); ++i)
            refs.emplace_back("seg.hidden" + std::to_string(i), &p.seg->hidden[i].bn.steps);
    return refs;
}

BackboneGrads make_grads(const BackboneParams& p) {
    BackboneGrads g;
    g.shadow = p;
    zero_grads(g);
    return g;
}

void zero_grads(BackboneGrads& g) {
    for (auto& ref : trainable_tensors(g.shadow)) std::fill(ref.data->begin(), ref.data->end(), 0.0f);
}

TapFeatures ForwardTrace::taps_of(int cloud) const {
    TapFeatures t;
    t.f1.assign(tap1.row(cloud), tap1.row(cloud) + tap1.cols);
    if (!tap2.empty()) t.f2.assign(tap2.row(cloud), tap2.row(cloud) + tap2.cols);
    t.f3.assign(tap3.row(cloud), tap3.row(cloud) + tap3.cols);
    return t;
}

std::vector<float> ForwardTrace::align2_of(int cloud) const {
    return {a2.transform.row(cloud), a2.transform.row(cloud) + a2.transform.cols};
}

ForwardTrace forward_batch(BackboneParams& params, const Mat& coords, int B, int W, Mode mode,
                           bool want_seg, int threads) {
    // Multi-threaded BLAS reduces in nondeterministic order; a single BLAS
    // thread keeps every GEMM bitwise reproducible. Our own parallelism is
    // restricted to elementwise loops, which are order-independent.
    static std::once_flag blas_pin;
    std::call_once(blas_pin, pin_blas_single_thread);

    const auto& cfg = params.config;
    require(B >= 1 && W >= 1, "forward: batch and cloud sizes must be positive");
    require(coords.rows == B * W && coords.cols == 3, "forward: coords must be (B*W) x 3");
    require(mode == Mode::Eval || W >= 2, "forward: train mode needs >= 2 points per cloud");
    require(!want_seg || cfg.has_seg(), "forward: segmentation head absent");
    const int t = resolve_threads(threads);

    ForwardTrace tr;
    tr.B = B;
    tr.W = W;
    tr.mode = mode;
    tr.want_seg = want_seg;
    tr.input = coords;

    align_forward(params.align1, tr.input, B, W, mode, tr.a1, "align1", t);
    tr.x_aligned = apply_transform(tr.input, tr.a1.transform, B, W, 3);

    tr.g1.resize(params.g1.size());
    const Mat* cur = &tr.x_aligned;
    for (size_t i = 0; i < params.g1.size(); ++i) {
        pp_forward(params.g1[i], *cur, mode, tr.g1[i], "g1." + std::to_string(i), t);
        cur = &tr.g1[i].y;
    }
    const Mat& f1 = *cur;
    max_pool(f1, B, W, tr.tap1, tr.arg1);

    align_forward(params.align2, f1, B, W, mode, tr.a2, "align2", t);
    tr.f1_aligned = apply_transform(f1, tr.a2.transform, B, W, cfg.h1());

    const Mat* pre_out = &tr.f1_aligned;
    if (params.mid) {
        pp_forward(*params.mid, tr.f1_aligned, mode, tr.mid, "mid", t);
        max_pool(tr.mid.y, B, W, tr.tap2, tr.arg2);
        pre_out = &tr.mid.y;
    }
    pp_forward(params.out, *pre_out, mode, tr.out, "out", t);
    max_pool(tr.out.y, B, W, tr.tap3, tr.arg3);

    if (want_seg) {
        const int h1 = cfg.h1(), h3 = cfg.h3(), n = B * W;
        Mat concat(n, h1 + h3);
        for (int c = 0; c < B; ++c) {
            const float* glob = tr.tap3.row(c);
            for (int r = 0; r < W; ++r) {
                float* dst = concat.row(c * W + r);
                const float* loc = tr.f1_aligned.row(c * W + r);
                std::copy(loc, loc + h1, dst);
                std::copy(glob, glob + h3, dst + h1);
            }
        }
        tr.seg_hidden.resize(params.seg->hidden.size());
        // The concat matrix is only needed as the first hidden layer's input
        // during backward; stash it in place of the layer input convention.
        tr.seg_concat = std::move(concat);
        const Mat* scur = &tr.seg_concat;
        for (size_t i = 0; i < params.seg->hidden.size(); ++i) {
            pp_forward(params.seg->hidden[i], *scur, mode, tr.seg_hidden[i],
                       "seg.hidden" + std::to_string(i), t);
            scur = &tr.seg_hidden[i].y;
        }
        tr.seg_logits = Mat(n, cfg.num_parts);
        gemm(false, false, 1.0f, *scur, params.seg->logits.w, 0.0f, tr.seg_logits);
        add_bias(tr.seg_logits, params.seg->logits.b, t);
        check_finite_mat(tr.seg_logits, "seg.logits");
    }
    return tr;
}

ForwardTrace forward(BackboneParams& params, const PointCloud& cloud, Mode mode, bool want_seg,
                     int threads) {
    return forward_batch(params, cloud.points, 1, cloud.size(), mode, want_seg, threads);
}

namespace {

void relu_mask(Mat& d, const Mat& y, int threads) {
    parallel_for(d.rows, threads, [&](int r) {
        float* dr = d.row(r);
        const float* yr = y.row(r);
        for (int j = 0; j < d.cols; ++j)
            if (yr[j] <= 0.0f) dr[j] = 0.0f;
    });
}

void colsum_into(const Mat& d, std::vector<float>& acc) {
    std::vector<double> s(d.cols, 0.0);
    for (int r = 0; r < d.rows; ++r) {
        const float* row = d.row(r);
        for (int j = 0; j < d.cols; ++j) s[j] += row[j];
    }
    for (int j = 0; j < d.cols; ++j) acc[j] += static_cast<float>(s[j]);
}

// Backward through Linear -> BN -> ReLU. `d` enters as the gradient at the
// layer output and leaves as scratch; gradients accumulate into `gs`.
void pp_backward(const PPLayer& L, const Mat& x, const ForwardTrace::PPCache& cache, Mat& d,
                 PPLayer& gs, Mat* dx, int threads) {
    const int n = d.rows, out = d.cols;
    relu_mask(d, cache.y, threads);

    std::vector<double> s1(out, 0.0), s2(out, 0.0);
    for (int r = 0; r < n; ++r) {
        const float* dr = d.row(r);
        const float* xh = cache.xhat.row(r);
        for (int j = 0; j < out; ++j) {
            s1[j] += dr[j];
            s2[j] += static_cast<double>(dr[j]) * xh[j];
        }
    }
    for (int j = 0; j < out; ++j) {
        gs.bn.beta[j] += static_cast<float>(s1[j]);
        gs.bn.gamma[j] += static_cast<float>(s2[j]);
    }
    std::vector<float> m1(out), m2(out), gscale(out);
    for (int j = 0; j < out; ++j) {
        m1[j] = static_cast<float>(s1[j] / n);
        m2[j] = static_cast<float>(s2[j] / n);
        gscale[j] = L.bn.gamma[j] * cache.inv_std[j];
    }
    parallel_for(n, threads, [&](int r) {
        float* dr = d.row(r);
        const float* xh = cache.xhat.row(r);
        for (int j = 0; j < out; ++j) dr[j] = gscale[j] * (dr[j] - m1[j] - xh[j] * m2[j]);
    });

    colsum_into(d, gs.lin.b);
    gemm(true, false, 1.0f, x, d, 1.0f, gs.lin.w);
    if (dx) {
        *dx = Mat(n, x.cols);
        gemm(false, true, 1.0f, d, L.lin.w, 0.0f, *dx);
    }
}

// Backward through Linear -> ReLU (alignment dense layers).
void dense_backward(const Linear& L, const Mat& x, const Mat& y, Mat& d, Linear& gs, Mat* dx) {
    relu_mask(d, y, 1);
    colsum_into(d, gs.b);
    gemm(true, false, 1.0f, x, d, 1.0f, gs.w);
    if (dx) {
        *dx = Mat(d.rows, x.cols);
        gemm(false, true, 1.0f, d, L.w, 0.0f, *dx);
    }
}

void linear_backward(const Linear& L, const Mat& x, Mat& d, Linear& gs, Mat* dx) {
    colsum_into(d, gs.b);
    gemm(true, false, 1.0f, x, d, 1.0f, gs.w);
    if (dx) {
        *dx = Mat(d.rows, x.cols);
        gemm(false, true, 1.0f, d, L.w, 0.0f, *dx);
    }
}

void max_pool_backward(const Mat& dtap, const std::vector<int>& arg, Mat& dpts) {
    for (int c = 0; c < dtap.rows; ++c) {
        const float* dr = dtap.row(c);
        const int* ar = arg.data() + static_cast<size_t>(c) * dtap.cols;
        for (int j = 0; j < dtap.cols; ++j) dpts.at(ar[j], j) += dr[j];
    }
}

// dX += dY * T^c; dT_c += X_seg^T * dY_seg, per cloud.
void transform_backward(const Mat& x, const Mat& transforms, const Mat& dy, int B, int W, int k,
                        Mat& dx_acc, Mat& dt_acc) {
    for (int c = 0; c < B; ++c) {
        gemm_raw(false, true, W, k, k, 1.0f, dy.row(c * W), k, transforms.row(c), k, 1.0f,
                 dx_acc.row(c * W), k);
        gemm_raw(true, false, k, k, W, 1.0f, x.row(c * W), k, dy.row(c * W), k, 1.0f, dt_acc.row(c),
                 k);
    }
}

void align_backward(const AlignNet& net, const ForwardTrace::AlignCache& cache, const Mat& x, int B,
                    int W, Mat& dt, AlignNet& gs, Mat* dinput_acc, int threads) {
    const Mat& dense_top = net.dense.empty() ? cache.pooled : cache.dense_y.back();
    colsum_into(dt, gs.final_fc.b);
    gemm(true, false, 1.0f, dense_top, dt, 1.0f, gs.final_fc.w);
    Mat d(B, dense_top.cols);
    gemm(false, true, 1.0f, dt, net.final_fc.w, 0.0f, d);

    for (int i = static_cast<int>(net.dense.size()) - 1; i >= 0; --i) {
        const Mat& in = i == 0 ? cache.pooled : cache.dense_y[i - 1];
        Mat dprev;
        dense_backward(net.dense[i], in, cache.dense_y[i], d, gs.dense[i], &dprev);
        d = std::move(dprev);
    }

    Mat dpts(B * W, cache.point.back().y.cols);
    max_pool_backward(d, cache.argmax, dpts);

    for (int i = static_cast<int>(net.point.size()) - 1; i >= 0; --i) {
        const Mat& in = i == 0 ? x : cache.point[i - 1].y;
        const bool need_dx = i > 0 || dinput_acc != nullptr;
        Mat dprev;
        pp_backward(net.point[i], in, cache.point[i], dpts, gs.point[i], need_dx ? &dprev : nullptr,
                    threads);
        dpts = std::move(dprev);
    }
    if (dinput_acc)
        for (size_t i = 0; i < dpts.v.size(); ++i) dinput_acc->v[i] += dpts.v[i];
}

}  // namespace

void backward_batch(const BackboneParams& params, const ForwardTrace& tr, const TraceGrads& up,
                    BackboneGrads& grads, int threads) {
    const auto& cfg = params.config;
    require(tr.mode == Mode::Train, "backward: trace must come from train mode");
    const int B = tr.B, W = tr.W, n = B * W;
    const int h1 = cfg.h1(), h3 = cfg.h3();
    const int t = resolve_threads(threads);

    auto check_dim = [&](const Mat& m, int r, int c, const char* what) {
        if (!m.empty() && (m.rows != r || m.cols != c))
            throw std::invalid_argument(std::string("backward: bad shape for ") + what);
    };
    check_dim(up.d_tap1, B, h1, "d_tap1");
    if (!cfg.has_mid() && !up.d_tap2.empty())
        throw std::invalid_argument("backward: d_tap2 supplied but mid layer absent");
    if (cfg.has_mid()) check_dim(up.d_tap2, B, cfg.h2(), "d_tap2");
    check_dim(up.d_tap3, B, h3, "d_tap3");
    check_dim(up.d_seg_logits, n, cfg.num_parts, "d_seg_logits");
    check_dim(up.d_align2, B, h1 * h1, "d_align2");

    Mat dtap3 = up.d_tap3.empty() ? Mat(B, h3) : up.d_tap3;
    Mat d_f1ali(n, h1);

    if (!up.d_seg_logits.empty()) {
        if (!tr.want_seg) throw std::invalid_argument("backward: trace lacks segmentation outputs");
        Mat d = up.d_seg_logits;
        const Mat& logits_in = params.seg->hidden.empty() ? tr.seg_concat : tr.seg_hidden.back().y;
        Mat dh;
        linear_backward(params.seg->logits, logits_in, d, grads.shadow.seg->logits, &dh);
        for (int i = static_cast<int>(params.seg->hidden.size()) - 1; i >= 0; --i) {
            const Mat& in = i == 0 ? tr.seg_concat : tr.seg_hidden[i - 1].y;
            Mat dprev;
            pp_backward(params.seg->hidden[i], in, tr.seg_hidden[i], dh,
                        grads.shadow.seg->hidden[i], &dprev, t);
            dh = std::move(dprev);
        }
        // Split the concat gradient: local features + broadcast global tap.
        for (int c = 0; c < B; ++c) {
            float* g3 = dtap3.row(c);
            for (int r = 0; r < W; ++r) {
                const float* src = dh.row(c * W + r);
                float* loc = d_f1ali.row(c * W + r);
                for (int j = 0; j < h1; ++j) loc[j] += src[j];
                for (int j = 0; j < h3; ++j) g3[j] += src[h1 + j];
            }
        }
    }

    Mat d_out_pts(n, h3);
    max_pool_backward(dtap3, tr.arg3, d_out_pts);
    const Mat& out_in = params.mid ? tr.mid.y : tr.f1_aligned;
    Mat d_pre_out;
    pp_backward(params.out, out_in, tr.out, d_out_pts, grads.shadow.out, &d_pre_out, t);

    if (params.mid) {
        if (!up.d_tap2.empty()) max_pool_backward(up.d_tap2, tr.arg2, d_pre_out);
        Mat d_mid_in;
        pp_backward(*params.mid, tr.f1_aligned, tr.mid, d_pre_out, *grads.shadow.mid, &d_mid_in, t);
        for (size_t i = 0; i < d_f1ali.v.size(); ++i) d_f1ali.v[i] += d_mid_in.v[i];
    } else {
        for (size_t i = 0; i < d_f1ali.v.size(); ++i) d_f1ali.v[i] += d_pre_out.v[i];
    }

    const Mat& f1 = tr.g1.back().y;
    Mat d_f1(n, h1);
    Mat dt2 = up.d_align2.empty() ? Mat(B, h1 * h1) : up.d_align2;
    transform_backward(f1, tr.a2.transform, d_f1ali, B, W, h1, d_f1, dt2);
    if (!up.d_tap1.empty()) max_pool_backward(up.d_tap1, tr.arg1, d_f1);
    align_backward(params.align2, tr.a2, f1, B, W, dt2, grads.shadow.align2, &d_f1, t);

    Mat d = std::move(d_f1);
    for (int i = static_cast<int>(params.g1.size()) - 1; i >= 0; --i) {
        const Mat& in = i == 0 ? tr.x_aligned : tr.g1[i - 1].y;
        Mat dprev;
        pp_backward(params.g1[i], in, tr.g1[i], d, grads.shadow.g1[i], &dprev, t);
        d = std::move(dprev);
    }

    Mat d_input_unused(n, 3);
    Mat dt1(B, 9);
    transform_backward(tr.input, tr.a1.transform, d, B, W, 3, d_input_unused, dt1);
    align_backward(params.align1, tr.a1, tr.input, B, W, dt1, grads.shadow.align1, nullptr, t);

    for (const auto& ref : trainable_tensors(grads.shadow))
        for (float v : *ref.data)
            if (!std::isfinite(v)) throw std::runtime_error("non-finite gradient in layer " + ref.name);
}

}  // namespace pcad
