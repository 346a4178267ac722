#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcad/backbone.hpp"
#include "pcad/geometry.hpp"

namespace pcad {

struct PretrainConfig {
    int epochs = 251;
    int batch_size = 8;
    double lr0 = 1e-3;
    double decay = 0.98;        // per-epoch multiplicative learning-rate factor
    double ortho_weight = 1e-3; // orthogonality regularizer on the feature transform
    int points = 0;             // per-epoch resample size; 0 = use clouds as stored
    uint64_t seed = 0;
    int threads = 0;

    void validate() const;
};

struct EpochLog {
    int epoch;
    double loss;
    double accuracy;  // mean per-point accuracy (NaN where not applicable)
    double lr;
};

struct PretrainResult {
    BackboneParams params;
    std::vector<EpochLog> log;
};

// Mean per-point cross-entropy of one cloud's logits (W x K) against labels,
// plus ortho_weight * ||A^T A - I||_F^2 on the feature-alignment transform
// (k x k, row-major). Gradients are optional outputs; computed in 64-bit.
double segmentation_loss(const Mat& seg_logits, const std::vector<int>& labels,
                         const std::vector<float>& align_mat, int k, double ortho_weight,
                         Mat* d_logits = nullptr, std::vector<float>* d_align = nullptr);

// Teacher pretraining: per-point part segmentation over all categories with
// a global label space (each category's parts are offset so labels never
// collide). Clouds are unit-sphere normalized, optionally resampled each
// epoch, and batched; the learning rate at epoch e is lr0 * decay^e.
PretrainResult pretrain_teacher(const LabeledDataset& dataset, const PretrainConfig& config);

void write_epoch_csv(const std::string& path, const std::vector<EpochLog>& log, bool with_accuracy);

}  // namespace pcad
