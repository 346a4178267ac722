#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcad/geometry.hpp"
#include "pcad/mat.hpp"

namespace pcad {

// Widths of the alignment mini-networks: a per-point stack, a max-pool, then
// dense layers feeding the final k*k transform predictor.
struct AlignWidths {
    std::vector<int> point{64, 128, 1024};
    std::vector<int> dense{512, 256};

    bool operator==(const AlignWidths&) const = default;
};

// Architecture of one network instance. The canonical configuration is
// input alignment (3x3) -> per-point 3->64->128->128 (tap 1 after max-pool)
// -> feature alignment (128x128) -> 128->512 (tap 2) -> 512->2048 (tap 3)
// -> optional per-point segmentation head. `mid = 0` drops tap 2 entirely;
// reduced students may shrink or drop mid but never the first or last tap.
struct BackboneConfig {
    std::vector<int> g1{64, 128, 128};
    int mid = 512;
    int out = 2048;
    AlignWidths align1, align2;
    int num_parts = 0;  // > 0: segmentation head present
    std::vector<int> seg_hidden{256, 128};

    int h1() const { return g1.back(); }
    int h2() const { return mid; }
    int h3() const { return out; }
    bool has_mid() const { return mid > 0; }
    bool has_seg() const { return num_parts > 0; }
    void validate() const;

    bool operator==(const BackboneConfig&) const = default;
};

struct Linear {
    Mat w;                 // in x out
    std::vector<float> b;  // out
};

// Per-feature batch statistics in train mode; cumulative running averages in
// eval mode. `steps` counts the batches folded into the running stats.
struct BatchNorm {
    std::vector<float> gamma, beta, run_mean, run_var;
    int64_t steps = 0;
};

// One shared per-point layer: Linear -> BatchNorm -> ReLU.
struct PPLayer {
    Linear lin;
    BatchNorm bn;
};

// Alignment module: per-point stack, max-pool, dense stack, then a final
// linear with zero weights and identity bias so the initial transform is I.
struct AlignNet {
    std::vector<PPLayer> point;
    std::vector<Linear> dense;  // Linear -> ReLU
    Linear final_fc;            // last dense width -> k*k
    int k = 0;
};

struct SegHead {
    std::vector<PPLayer> hidden;
    Linear logits;
};

struct BackboneParams {
    BackboneConfig config;
    AlignNet align1, align2;
    std::vector<PPLayer> g1;
    std::optional<PPLayer> mid;
    PPLayer out;
    std::optional<SegHead> seg;
};

enum class Mode { Train, Eval };

// Max-pooled feature vectors at the distillation positions. Position 2 is
// absent for reduced configurations without the mid layer.
struct TapFeatures {
    std::vector<float> f1, f2, f3;
};

// Everything forward computes plus the caches backward needs. Holds B clouds
// of W points each as (B*W)-row matrices; cloud c owns rows [c*W, (c+1)*W).
struct ForwardTrace {
    int B = 0, W = 0;
    Mode mode = Mode::Eval;
    bool want_seg = false;

    Mat input;  // (B*W) x 3, as given to forward

    struct PPCache {
        Mat y;                       // post-ReLU output
        Mat xhat;                    // normalized pre-affine activations (train only)
        std::vector<float> inv_std;  // per-feature 1/sqrt(var+eps) (train only)
    };
    struct AlignCache {
        std::vector<PPCache> point;
        Mat pooled;               // B x point.back()
        std::vector<int> argmax;  // B x point.back(): winning global row ids
        std::vector<Mat> dense_y; // post-ReLU dense outputs, each B x width
        Mat transform;            // B x (k*k)
    };

    AlignCache a1;
    Mat x_aligned;  // (B*W) x 3
    std::vector<PPCache> g1;
    Mat tap1;  // B x h1
    std::vector<int> arg1;
    AlignCache a2;
    Mat f1_aligned;  // (B*W) x h1
    PPCache mid;     // absent widths leave mats empty
    Mat tap2;        // B x h2 (empty when mid dropped)
    std::vector<int> arg2;
    PPCache out;
    Mat tap3;  // B x h3
    std::vector<int> arg3;

    Mat seg_concat;  // (B*W) x (h1+h3): per-point aligned features + global tap
    std::vector<PPCache> seg_hidden;
    Mat seg_logits;  // (B*W) x K (empty unless requested)

    TapFeatures taps_of(int cloud) const;
    std::vector<float> align2_of(int cloud) const;  // h1 x h1 transform, row-major
};

// Gradients of a loss w.r.t. trace outputs. Empty mats mean "no gradient".
// d_align2 lets regularizers on the feature transform feed the graph.
struct TraceGrads {
    Mat d_tap1, d_tap2, d_tap3;  // B x h
    Mat d_seg_logits;            // (B*W) x K
    Mat d_align2;                // B x (h1*h1)
};

// Same shape as the trainable parameters, zero-initialized.
struct BackboneGrads {
    BackboneParams shadow;
};

// Deterministic seeded init. Alignment finals are zero-weight/identity-bias
// so both transforms start as exact identities.
BackboneParams init_params(const BackboneConfig& config, uint64_t seed);

// Flat views over parameter tensors in a fixed declared order. `trainable`
// excludes running statistics; `stats` covers exactly those.
struct TensorRef {
    std::string name;
    std::vector<float>* data;
};
std::vector<TensorRef> trainable_tensors(BackboneParams& p);
std::vector<TensorRef> stat_tensors(BackboneParams& p);
std::vector<std::pair<std::string, int64_t*>> bn_step_refs(BackboneParams& p);

BackboneGrads make_grads(const BackboneParams& p);
void zero_grads(BackboneGrads& g);

// Runs B clouds of W points. `coords` is (B*W) x 3 with cloud c in rows
// [c*W,(c+1)*W). Train mode computes batch statistics over all points of the
// batch and folds them into the running averages; eval mode reads the stored
// running averages only. Throws on non-finite activations, naming the layer.
ForwardTrace forward_batch(BackboneParams& params, const Mat& coords, int B, int W, Mode mode,
                           bool want_seg, int threads = 0);

// Convenience wrapper for one cloud.
ForwardTrace forward(BackboneParams& params, const PointCloud& cloud, Mode mode,
                     bool want_seg = false, int threads = 0);

// Reverse-mode gradients for every trainable parameter, accumulated into
// `grads` (callers zero them between steps). Requires a train-mode trace.
void backward_batch(const BackboneParams& params, const ForwardTrace& trace, const TraceGrads& up,
                    BackboneGrads& grads, int threads = 0);

}  // namespace pcad
