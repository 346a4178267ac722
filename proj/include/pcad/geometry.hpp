#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcad/mat.hpp"

namespace pcad {

// A set of W points in 3D, optionally with per-point part labels.
struct PointCloud {
    Mat points;               // W x 3
    std::vector<int> labels;  // empty, or one label per point

    int size() const { return points.rows; }
    bool has_labels() const { return !labels.empty(); }
};

struct Category {
    std::string name;
    int num_parts = 0;
    std::vector<PointCloud> train;
    std::vector<PointCloud> test;
};

// Categorized clouds with train/test splits. Category id = index.
struct LabeledDataset {
    std::vector<Category> categories;

    int num_categories() const { return static_cast<int>(categories.size()); }
    int total_parts() const;  // sum of num_parts over categories
};

// Text format: one `x y z` or `x y z label` line per point, `#` comment lines
// and blank lines skipped. The label column must be all-or-nothing.
PointCloud load_cloud(const std::string& path);
void save_cloud(const PointCloud& cloud, const std::string& path);

// Exactly w points: without replacement when w <= W, with replacement when
// w > W. Labels travel with their points. Deterministic in seed.
PointCloud sample_points(const PointCloud& cloud, int w, uint64_t seed);

// Center on the centroid and scale so the farthest point has norm 1.
// A cloud whose points all coincide maps to the origin.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

// Manifest: JSON with `categories: [{name, num_parts, train: [paths], test:
// [paths]}]`, paths relative to the manifest's directory.
LabeledDataset load_dataset(const std::string& manifest_path);

// Symmetric Chamfer distance (mean squared nearest-neighbor distance,
// averaged over both directions).
double chamfer_distance(const PointCloud& a, const PointCloud& b);

}  // namespace pcad
