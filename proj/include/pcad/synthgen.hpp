#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcad/geometry.hpp"

namespace pcad {

// Built-in shape kinds with their per-point part rules:
//   sphere   (2 parts): upper/lower hemisphere
//   box      (3 parts): top face / bottom face / sides
//   cylinder (3 parts): axial thirds of the lateral surface
//   torus    (2 parts): outer/inner half of the tube
//   cone     (2 parts): upper/lower half of the open lateral surface
//   cross    (2 parts): horizontal plane / vertical plane
struct ShapeSpec {
    std::string kind;
    double jitter_sigma = 0.01;
    double scale_lo = 0.9, scale_hi = 1.1;  // uniform size factor range
    bool rotate = true;                     // random rotation about the vertical axis

    int num_parts() const;
};

struct SynthConfig {
    std::vector<ShapeSpec> specs;  // empty = the default 6-category set
    int n_train = 20;
    int n_test = 30;
    int points = 512;
    uint64_t seed = 7;

    void validate() const;
};

std::vector<ShapeSpec> default_specs(int n_categories = 6, double jitter_sigma = 0.01);

// Writes <out_dir>/<category>/{train,test}_NNN.xyz plus manifest.json, then
// reloads through the manifest so the returned dataset is exactly what a
// consumer will read. Clouds are unit-sphere normalized before writing.
// Seed-deterministic down to the bytes on disk.
LabeledDataset generate_dataset(const SynthConfig& config, const std::string& out_dir);

// Geometric distinguishability check against canonical category prototypes
// (jitter-free, unrotated, unit-size clouds of each kind): intra spread is
// the largest train-cloud-to-own-prototype Chamfer distance at the cloud's
// best yaw alignment, inter distance the smallest prototype-to-prototype
// Chamfer distance. Requires built-in kinds as category names; the default
// set must clear ratio 2.0.
struct SelfTestResult {
    double min_inter = 0.0;
    double max_intra = 0.0;
    double ratio = 0.0;
};
SelfTestResult synth_self_test(const LabeledDataset& dataset, uint64_t seed);

}  // namespace pcad
