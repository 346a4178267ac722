#include "pcad/pretrain.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "pcad/optim.hpp"
#include "pcad/rng.hpp"

namespace pcad {

void PretrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("pretrain: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("pretrain: batch_size must be >= 1");
    if (!(lr0 > 0)) throw std::invalid_argument("pretrain: lr0 must be > 0");
    if (!(decay > 0 && decay <= 1)) throw std::invalid_argument("pretrain: decay must be in (0,1]");
    if (ortho_weight < 0) throw std::invalid_argument("pretrain: ortho_weight must be >= 0");
    if (points < 0) throw std::invalid_argument("pretrain: points must be >= 0");
}

double segmentation_loss(const Mat& seg_logits, const std::vector<int>& labels,
                         const std::vector<float>& align_mat, int k, double ortho_weight,
                         Mat* d_logits, std::vector<float>* d_align) {
    const int w = seg_logits.rows, kk = seg_logits.cols;
    if (static_cast<int>(labels.size()) != w)
        throw std::invalid_argument("segmentation_loss: labels length mismatch");
    if (static_cast<int>(align_mat.size()) != k * k)
        throw std::invalid_argument("segmentation_loss: align matrix must be k*k");
    if (d_logits) *d_logits = Mat(w, kk);

    double ce = 0.0;
    for (int i = 0; i < w; ++i) {
        const int lab = labels[i];
        if (lab < 0 || lab >= kk)
            throw std::invalid_argument("segmentation_loss: label " + std::to_string(lab) +
                                        " out of range for K=" + std::to_string(kk));
        const float* row = seg_logits.row(i);
        double m = row[0];
        for (int j = 1; j < kk; ++j) m = std::max(m, static_cast<double>(row[j]));
        double z = 0.0;
        for (int j = 0; j < kk; ++j) z += std::exp(row[j] - m);
        const double lse = m + std::log(z);
        ce += lse - row[lab];
        if (d_logits) {
            float* drow = d_logits->row(i);
            for (int j = 0; j < kk; ++j)
                drow[j] = static_cast<float>((std::exp(row[j] - m) / z - (j == lab ? 1.0 : 0.0)) / w);
        }
    }
    ce /= w;

    // S = A^T A - I in double; reg = w_o * ||S||_F^2, dA = 4 * w_o * A * S.
    double reg = 0.0;
    std::vector<double> s(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            double acc = 0.0;
            for (int r = 0; r < k; ++r)
                acc += static_cast<double>(align_mat[r * k + i]) * align_mat[r * k + j];
            if (i == j) acc -= 1.0;
            s[static_cast<size_t>(i) * k + j] = acc;
            reg += acc * acc;
        }
    if (d_align) {
        d_align->assign(static_cast<size_t>(k) * k, 0.0f);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                double acc = 0.0;
                for (int r = 0; r < k; ++r)
                    acc += static_cast<double>(align_mat[i * k + r]) * s[static_cast<size_t>(r) * k + j];
                (*d_align)[static_cast<size_t>(i) * k + j] = static_cast<float>(4.0 * ortho_weight * acc);
            }
    }
    return ce + ortho_weight * reg;
}

namespace {

struct TrainItem {
    const PointCloud* cloud;
    int label_offset;
};

}  // namespace

PretrainResult pretrain_teacher(const LabeledDataset& dataset, const PretrainConfig& config) {
    config.validate();
    if (dataset.categories.empty()) throw std::invalid_argument("pretrain: empty dataset");

    std::vector<TrainItem> items;
    int offset = 0;
    for (const auto& cat : dataset.categories) {
        if (cat.train.empty())
            throw std::invalid_argument("pretrain: category " + cat.name + " has no training clouds");
        for (const auto& c : cat.train) {
            if (!c.has_labels())
                throw std::invalid_argument("pretrain: unlabeled training cloud in category " + cat.name);
            items.push_back({&c, offset});
        }
        offset += cat.num_parts;
    }
    const int K = dataset.total_parts();
    const int n_items = static_cast<int>(items.size());

    int fixed_w = config.points;
    if (fixed_w == 0) {
        fixed_w = items[0].cloud->size();
        for (const auto& it : items)
            if (it.cloud->size() != fixed_w)
                throw std::invalid_argument(
                    "pretrain: training clouds differ in size; set `points` to resample");
    }

    BackboneConfig arch;
    arch.num_parts = K;
    BackboneParams params = init_params(arch, derive_seed(config.seed, salt("init")));
    Adam adam(params);
    BackboneGrads grads = make_grads(params);
    const int h1 = arch.h1();

    // Per-epoch resampling is only exercised when `points` is set; otherwise
    // clouds are normalized once and reused as stored.
    std::vector<PointCloud> prepared(n_items);
    if (config.points == 0)
        for (int i = 0; i < n_items; ++i) prepared[i] = normalize_unit_sphere(*items[i].cloud);

    PretrainResult result{std::move(params), {}};
    std::vector<int> order(n_items);
    for (int i = 0; i < n_items; ++i) order[i] = i;

    for (int e = 0; e < config.epochs; ++e) {
        const double lr = config.lr0 * std::pow(config.decay, e);
        Rng shuffle_rng(derive_seed(config.seed, salt("order"), e));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int64_t correct = 0, total_pts = 0;

        for (int start = 0; start < n_items; start += config.batch_size) {
            const int b = std::min(config.batch_size, n_items - start);
            Mat coords(b * fixed_w, 3);
            std::vector<int> labels(static_cast<size_t>(b) * fixed_w);
            for (int ci = 0; ci < b; ++ci) {
                const int idx = order[start + ci];
                PointCloud prep;
                const PointCloud* src;
                if (config.points > 0) {
                    prep = normalize_unit_sphere(sample_points(
                        *items[idx].cloud, fixed_w, derive_seed(config.seed, salt("pts"), e, idx)));
                    src = &prep;
                } else {
                    src = &prepared[idx];
                }
                std::copy(src->points.v.begin(), src->points.v.end(),
                          coords.v.begin() + static_cast<size_t>(ci) * fixed_w * 3);
                for (int r = 0; r < fixed_w; ++r)
                    labels[static_cast<size_t>(ci) * fixed_w + r] = src->labels[r] + items[idx].label_offset;
            }

            ForwardTrace tr =
                forward_batch(result.params, coords, b, fixed_w, Mode::Train, true, config.threads);

            TraceGrads up;
            up.d_seg_logits = Mat(b * fixed_w, K);
            up.d_align2 = Mat(b, h1 * h1);
            for (int ci = 0; ci < b; ++ci) {
                Mat cloud_logits(fixed_w, K);
                std::copy(tr.seg_logits.row(ci * fixed_w), tr.seg_logits.row(ci * fixed_w) + fixed_w * K,
                          cloud_logits.v.begin());
                std::vector<int> cloud_labels(labels.begin() + static_cast<size_t>(ci) * fixed_w,
                                              labels.begin() + static_cast<size_t>(ci + 1) * fixed_w);
                Mat dl;
                std::vector<float> da;
                loss_sum += segmentation_loss(cloud_logits, cloud_labels, tr.align2_of(ci), h1,
                                              config.ortho_weight, &dl, &da);
                // Batch loss is the mean over its clouds.
                for (int r = 0; r < fixed_w; ++r) {
                    const float* srow = dl.row(r);
                    float* drow = up.d_seg_logits.row(ci * fixed_w + r);
                    for (int j = 0; j < K; ++j) drow[j] = srow[j] / b;
                }
                float* darow = up.d_align2.row(ci);
                for (int j = 0; j < h1 * h1; ++j) darow[j] = da[j] / b;

                for (int r = 0; r < fixed_w; ++r) {
                    const float* lrow = cloud_logits.row(r);
                    int best = 0;
                    for (int j = 1; j < K; ++j)
                        if (lrow[j] > lrow[best]) best = j;
                    if (best == cloud_labels[r]) ++correct;
                }
                total_pts += fixed_w;
            }

            zero_grads(grads);
            backward_batch(result.params, tr, up, grads, config.threads);
            adam.step(result.params, grads, lr);
        }

        result.log.push_back(
            {e, loss_sum / n_items, static_cast<double>(correct) / static_cast<double>(total_pts), lr});
    }
    return result;
}

void write_epoch_csv(const std::string& path, const std::vector<EpochLog>& log, bool with_accuracy) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write log: " + path);
    out << (with_accuracy ? "epoch,loss,accuracy,lr\n" : "epoch,loss,lr\n");
    char buf[160];
    for (const auto& row : log) {
        if (with_accuracy)
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", row.epoch, row.loss, row.accuracy,
                          row.lr);
        else
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", row.epoch, row.loss, row.lr);
        out << buf;
    }
}

}  // namespace pcad
