#include "pcad/distill.hpp"

#include <algorithm>
#include <cmath>

#include "pcad/checkpoint.hpp"
#include "pcad/optim.hpp"
#include "pcad/rng.hpp"

namespace pcad {

void DistillConfig::validate() const {
    if (n_samples < 1) throw std::invalid_argument("distill: n_samples must be >= 1");
    if (epochs < 1) throw std::invalid_argument("distill: epochs must be >= 1");
    if (!(lr0 > 0)) throw std::invalid_argument("distill: lr0 must be > 0");
    if (!(decay > 0 && decay <= 1)) throw std::invalid_argument("distill: decay must be in (0,1]");
    if (!(eps > 0)) throw std::invalid_argument("distill: eps must be > 0");
    if (student_mid < -1) throw std::invalid_argument("distill: student_mid must be >= -1");
}

namespace {

template <class T>
double cosine_impl(const T* fs, const T* ft, size_t n, double eps, std::vector<T>* d_fs) {
    double dot = 0.0, ns2 = 0.0, nt2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        dot += static_cast<double>(fs[i]) * ft[i];
        ns2 += static_cast<double>(fs[i]) * fs[i];
        nt2 += static_cast<double>(ft[i]) * ft[i];
    }
    // sqrt of the product, not the product of sqrts: correctly rounded
    // sqrt(x*x) returns x exactly, so bitwise-identical vectors score 0
    // instead of picking up an ulp of norm noise.
    const double raw = std::sqrt(ns2 * nt2);
    const double denom = std::max(raw, eps);
    // Rounding can push |dot| past ns*nt by an ulp; clamp so the [0,2]
    // range bound holds for every finite input.
    const double loss = std::clamp(1.0 - dot / denom, 0.0, 2.0);
    if (d_fs) {
        d_fs->resize(n);
        if (raw > eps) {
            const double a = 1.0 / denom, b = dot / (ns2 * denom);
            for (size_t i = 0; i < n; ++i) (*d_fs)[i] = static_cast<T>(-a * ft[i] + b * fs[i]);
        } else {
            // Clamped denominator: d/dFs of (1 - Fs.Ft/eps).
            for (size_t i = 0; i < n; ++i) (*d_fs)[i] = static_cast<T>(-ft[i] / eps);
        }
    }
    return loss;
}

}  // namespace

double cosine_loss(std::span<const float> fs, std::span<const float> ft, double eps,
                   std::vector<float>* d_fs) {
    if (fs.size() != ft.size()) throw std::invalid_argument("cosine_loss: dimension mismatch");
    if (fs.empty()) throw std::invalid_argument("cosine_loss: empty vectors");
    return cosine_impl(fs.data(), ft.data(), fs.size(), eps, d_fs);
}

double cosine_loss_d(const std::vector<double>& fs, const std::vector<double>& ft, double eps,
                     std::vector<double>* d_fs) {
    if (fs.size() != ft.size()) throw std::invalid_argument("cosine_loss: dimension mismatch");
    if (fs.empty()) throw std::invalid_argument("cosine_loss: empty vectors");
    return cosine_impl(fs.data(), ft.data(), fs.size(), eps, d_fs);
}

double multiscale_loss(const TapFeatures& taps_s, const TapFeatures& taps_t, double eps,
                       TapGrads* grads) {
    struct Pair {
        const std::vector<float>*s, *t;
        std::vector<float>* d;
    };
    std::vector<Pair> pairs;
    TapGrads scratch;
    TapGrads* g = grads ? grads : &scratch;
    if (!taps_s.f1.empty() && taps_s.f1.size() == taps_t.f1.size())
        pairs.push_back({&taps_s.f1, &taps_t.f1, &g->d1});
    if (!taps_s.f2.empty() && taps_s.f2.size() == taps_t.f2.size())
        pairs.push_back({&taps_s.f2, &taps_t.f2, &g->d2});
    if (!taps_s.f3.empty() && taps_s.f3.size() == taps_t.f3.size())
        pairs.push_back({&taps_s.f3, &taps_t.f3, &g->d3});
    if (pairs.empty()) throw std::invalid_argument("multiscale_loss: no matching tap widths");

    const double inv_k = 1.0 / pairs.size();
    double total = 0.0;
    for (auto& p : pairs) {
        total += cosine_loss(*p.s, *p.t, eps, grads ? p.d : nullptr);
        if (grads)
            for (auto& v : *p.d) v = static_cast<float>(v * inv_k);
    }
    return total * inv_k;
}

uint64_t params_checksum(const BackboneParams& params) {
    auto& p = const_cast<BackboneParams&>(params);  // registry wants mutable refs; data untouched
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& ref : trainable_tensors(p))
        h = fnv1a64(ref.data->data(), ref.data->size() * sizeof(float), h);
    for (const auto& ref : stat_tensors(p))
        h = fnv1a64(ref.data->data(), ref.data->size() * sizeof(float), h);
    return h;
}

StudentResult train_student(const BackboneParams& teacher, const std::vector<PointCloud>& samples,
                            const DistillConfig& config) {
    config.validate();
    if (samples.empty()) throw std::invalid_argument("distill: empty sample list");
    const int n = static_cast<int>(samples.size());
    const int w = samples[0].size();
    for (const auto& s : samples)
        if (s.size() != w)
            throw std::invalid_argument("distill: samples differ in size; resample them to one width");
    if (w < 2) throw std::invalid_argument("distill: samples need >= 2 points");

    BackboneConfig student_cfg = teacher.config;
    student_cfg.num_parts = 0;  // the segmentation head never joins the distillation graph
    if (config.student_mid >= 0) student_cfg.mid = config.student_mid;
    student_cfg.validate();
    if (student_cfg.h1() != teacher.config.h1() || student_cfg.h3() != teacher.config.h3())
        throw std::invalid_argument("distill: student must keep the first and last tap widths");
    const bool match2 =
        student_cfg.has_mid() && teacher.config.has_mid() && student_cfg.h2() == teacher.config.h2();

    Mat coords(n * w, 3);
    for (int i = 0; i < n; ++i) {
        PointCloud prep = normalize_unit_sphere(samples[i]);
        std::copy(prep.points.v.begin(), prep.points.v.end(),
                  coords.v.begin() + static_cast<size_t>(i) * w * 3);
    }

    // The teacher is frozen: one eval-mode pass fixes the targets for good.
    auto& teacher_mut = const_cast<BackboneParams&>(teacher);  // eval forward never writes params
    ForwardTrace tt = forward_batch(teacher_mut, coords, n, w, Mode::Eval, false, config.threads);
    std::vector<TapFeatures> targets(n);
    for (int i = 0; i < n; ++i) targets[i] = tt.taps_of(i);

    StudentResult result;
    result.teacher_checksum = params_checksum(teacher);
    result.params = init_params(student_cfg, derive_seed(config.seed, salt("student-init")));
    Adam adam(result.params);
    BackboneGrads grads = make_grads(result.params);

    // One full-batch step per epoch at the intended 1-5 samples; larger sets
    // fall back to mini-batches of 8, keeping the plain-sum semantics.
    const int chunk = 8;
    const int h1 = student_cfg.h1(), h3 = student_cfg.h3();
    for (int e = 0; e < config.epochs; ++e) {
        const double lr = config.lr0 * std::pow(config.decay, e);
        double loss_sum = 0.0;
        for (int start = 0; start < n; start += chunk) {
            const int b = std::min(chunk, n - start);
            Mat ccoords(b * w, 3);
            std::copy(coords.v.begin() + static_cast<size_t>(start) * w * 3,
                      coords.v.begin() + static_cast<size_t>(start + b) * w * 3, ccoords.v.begin());
            ForwardTrace tr =
                forward_batch(result.params, ccoords, b, w, Mode::Train, false, config.threads);

            TraceGrads up;
            up.d_tap1 = Mat(b, h1);
            if (match2) up.d_tap2 = Mat(b, student_cfg.h2());
            up.d_tap3 = Mat(b, h3);
            for (int i = 0; i < b; ++i) {
                TapFeatures taps_s = tr.taps_of(i);
                if (!match2) taps_s.f2.clear();  // unmatched widths stay out of the loss
                TapGrads g;
                loss_sum += multiscale_loss(taps_s, targets[start + i], config.eps, &g);
                // Plain sum over samples: per-sample gradients land unscaled.
                std::copy(g.d1.begin(), g.d1.end(), up.d_tap1.row(i));
                if (match2) std::copy(g.d2.begin(), g.d2.end(), up.d_tap2.row(i));
                std::copy(g.d3.begin(), g.d3.end(), up.d_tap3.row(i));
            }

            zero_grads(grads);
            backward_batch(result.params, tr, up, grads, config.threads);
            adam.step(result.params, grads, lr);
        }
        result.log.push_back({e, loss_sum / n, std::nan(""), lr});
    }
    return result;
}

}  // namespace pcad
