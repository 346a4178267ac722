#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcad/backbone.hpp"
#include "pcad/geometry.hpp"
#include "pcad/pretrain.hpp"

namespace pcad {

struct DistillConfig {
    int normal_category = 0;  // category id c_n (bookkeeping; samples are passed in)
    int n_samples = 5;
    int epochs = 20;
    double lr0 = 1e-3;
    double decay = 0.98;
    double eps = 1e-8;      // cosine stability constant
    uint64_t seed = 0;
    int student_mid = -1;   // -1: same as teacher; 0: drop tap 2; >0: width override
    int threads = 0;

    void validate() const;
};

// 1 - (Fs.Ft) / max(||Fs|| * ||Ft||, eps), accumulated in 64-bit. In [0,2]
// whenever both norms are at least sqrt(eps). d_fs receives the gradient
// w.r.t. Fs when non-null.
double cosine_loss(std::span<const float> fs, std::span<const float> ft, double eps,
                   std::vector<float>* d_fs = nullptr);
double cosine_loss_d(const std::vector<double>& fs, const std::vector<double>& ft, double eps,
                     std::vector<double>* d_fs = nullptr);

struct TapGrads {
    std::vector<float> d1, d2, d3;
};

// Mean cosine loss over the tap positions whose widths match between student
// and teacher (all three for the canonical pair; reduced students contribute
// the matching subset, divisor = subset size). Throws if nothing matches.
double multiscale_loss(const TapFeatures& taps_s, const TapFeatures& taps_t, double eps,
                       TapGrads* grads = nullptr);

struct StudentResult {
    BackboneParams params;
    std::vector<EpochLog> log;       // accuracy column unused
    uint64_t teacher_checksum = 0;   // FNV-1a-64 over the teacher's tensor data
};

// Trains a fresh randomly initialized student (never a teacher copy; there
// is deliberately no copy-init option, which would zero every score) to
// match the frozen teacher's taps on the given normal samples. The per-epoch
// loss follows the plain sum over samples; the logged loss is the per-sample
// mean. The teacher is read-only throughout.
StudentResult train_student(const BackboneParams& teacher, const std::vector<PointCloud>& samples,
                            const DistillConfig& config);

// FNV-1a-64 over all tensor bytes (trainable + running stats) in registry
// order; the frozen-teacher digest recorded in student checkpoints.
uint64_t params_checksum(const BackboneParams& params);

}  // namespace pcad
