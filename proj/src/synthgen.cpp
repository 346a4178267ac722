#include "pcad/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "json.hpp"
#include "pcad/rng.hpp"

namespace pcad {

namespace fs = std::filesystem;
using nlohmann::json;

int ShapeSpec::num_parts() const {
    if (kind == "sphere" || kind == "torus" || kind == "cone" || kind == "cross") return 2;
    if (kind == "box" || kind == "cylinder") return 3;
    throw std::invalid_argument("unknown shape kind: " + kind);
}

void SynthConfig::validate() const {
    if (points < 16) throw std::invalid_argument("synthgen: points must be >= 16");
    if (n_train < 5) throw std::invalid_argument("synthgen: n_train must be >= 5");
    if (n_test < 1) throw std::invalid_argument("synthgen: n_test must be >= 1");
    for (const auto& s : specs) {
        s.num_parts();  // validates the kind
        if (s.jitter_sigma < 0) throw std::invalid_argument("synthgen: jitter_sigma must be >= 0");
        if (!(s.scale_lo > 0 && s.scale_hi >= s.scale_lo))
            throw std::invalid_argument("synthgen: bad scale range");
    }
}

std::vector<ShapeSpec> default_specs(int n_categories, double jitter_sigma) {
    const char* kinds[] = {"sphere", "box", "cylinder", "torus", "cone", "cross"};
    if (n_categories < 1 || n_categories > 6)
        throw std::invalid_argument("synthgen: default set supports 1..6 categories");
    std::vector<ShapeSpec> specs;
    for (int i = 0; i < n_categories; ++i) {
        ShapeSpec s;
        s.kind = kinds[i];
        s.jitter_sigma = jitter_sigma;
        specs.push_back(s);
    }
    return specs;
}

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// One surface point of the unit-size base shape, with its part label.
void base_point(const std::string& kind, Rng& rng, float p[3], int& label) {
    if (kind == "sphere") {
        const double z = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0.0, kTau);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        p[0] = static_cast<float>(r * std::cos(phi));
        p[1] = static_cast<float>(r * std::sin(phi));
        p[2] = static_cast<float>(z);
        label = z >= 0.0 ? 0 : 1;
    } else if (kind == "box") {
        // Flat slab; the unequal sides keep it apart from sphere and cross.
        const double bx = 1.0, by = 0.7, bz = 0.45;
        const int face = static_cast<int>(rng.below(6));
        const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
        switch (face) {
            case 0: p[0] = static_cast<float>(u * bx); p[1] = static_cast<float>(v * by); p[2] = static_cast<float>(bz); label = 0; break;
            case 1: p[0] = static_cast<float>(u * bx); p[1] = static_cast<float>(v * by); p[2] = static_cast<float>(-bz); label = 1; break;
            case 2: p[0] = static_cast<float>(bx); p[1] = static_cast<float>(u * by); p[2] = static_cast<float>(v * bz); label = 2; break;
            case 3: p[0] = static_cast<float>(-bx); p[1] = static_cast<float>(u * by); p[2] = static_cast<float>(v * bz); label = 2; break;
            case 4: p[0] = static_cast<float>(u * bx); p[1] = static_cast<float>(by); p[2] = static_cast<float>(v * bz); label = 2; break;
            default: p[0] = static_cast<float>(u * bx); p[1] = static_cast<float>(-by); p[2] = static_cast<float>(v * bz); label = 2; break;
        }
    } else if (kind == "cylinder") {
        // Thin rod; the narrow radius keeps it well separated from the box.
        const double z = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0.0, kTau);
        p[0] = static_cast<float>(0.35 * std::cos(phi));
        p[1] = static_cast<float>(0.35 * std::sin(phi));
        p[2] = static_cast<float>(z);
        label = z < -1.0 / 3.0 ? 0 : (z < 1.0 / 3.0 ? 1 : 2);
    } else if (kind == "torus") {
        const double R = 0.85, r = 0.15;
        const double theta = rng.uniform(0.0, kTau);
        double psi;
        do {
            psi = rng.uniform(0.0, kTau);
        } while (rng.uniform() * (R + r) > R + r * std::cos(psi));  // area-uniform on the tube
        const double ring = R + r * std::cos(psi);
        p[0] = static_cast<float>(ring * std::cos(theta));
        p[1] = static_cast<float>(ring * std::sin(theta));
        p[2] = static_cast<float>(r * std::sin(psi));
        label = std::cos(psi) >= 0.0 ? 0 : 1;
    } else if (kind == "cone") {
        // Open funnel, wide and short: apex (0,0,0.6), rim radius 1 at
        // z = -0.6, no base disk. The slant is its signature; a disk would
        // sit right under the box's bottom face.
        const double br = 1.0, h = 1.2;
        const double t = std::sqrt(rng.uniform());  // area-uniform from apex
        const double phi = rng.uniform(0.0, kTau);
        p[0] = static_cast<float>(br * t * std::cos(phi));
        p[1] = static_cast<float>(br * t * std::sin(phi));
        p[2] = static_cast<float>(h / 2.0 - h * t);
        label = t * t >= 0.5 ? 1 : 0;  // equal-area split along the slant
    } else {  // cross
        const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
        if (rng.below(2) == 0) {
            p[0] = static_cast<float>(u);
            p[1] = static_cast<float>(v);
            p[2] = 0.0f;
            label = 0;
        } else {
            p[0] = static_cast<float>(u);
            p[1] = 0.0f;
            p[2] = static_cast<float>(v);
            label = 1;
        }
    }
}

PointCloud make_cloud(const ShapeSpec& spec, int w, uint64_t seed) {
    Rng rng(seed);
    const int parts = spec.num_parts();
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double size = rng.uniform(spec.scale_lo, spec.scale_hi);
        const double theta = spec.rotate ? rng.uniform(0.0, kTau) : 0.0;
        const double c = std::cos(theta), s = std::sin(theta);

        PointCloud cloud;
        cloud.points = Mat(w, 3);
        cloud.labels.resize(w);
        std::vector<int> part_count(parts, 0);
        for (int i = 0; i < w; ++i) {
            float p[3];
            int label;
            base_point(spec.kind, rng, p, label);
            const double x = p[0] * size, y = p[1] * size, z = p[2] * size;
            float* dst = cloud.points.row(i);
            dst[0] = static_cast<float>(c * x - s * y + spec.jitter_sigma * rng.normal());
            dst[1] = static_cast<float>(s * x + c * y + spec.jitter_sigma * rng.normal());
            dst[2] = static_cast<float>(z + spec.jitter_sigma * rng.normal());
            cloud.labels[i] = label;
            part_count[label]++;
        }
        bool complete = true;
        for (int n : part_count) complete = complete && n > 0;
        if (complete) return normalize_unit_sphere(cloud);
    }
    throw std::runtime_error("synthgen: failed to cover all parts of " + spec.kind +
                             " (w too small?)");
}

}  // namespace

LabeledDataset generate_dataset(const SynthConfig& config_in, const std::string& out_dir) {
    SynthConfig config = config_in;
    if (config.specs.empty()) config.specs = default_specs();
    config.validate();

    json manifest;
    manifest["categories"] = json::array();
    for (size_t ci = 0; ci < config.specs.size(); ++ci) {
        const auto& spec = config.specs[ci];
        fs::create_directories(fs::path(out_dir) / spec.kind);
        json jc{{"name", spec.kind}, {"num_parts", spec.num_parts()}};
        for (const char* split : {"train", "test"}) {
            const bool is_train = std::string(split) == "train";
            const int n = is_train ? config.n_train : config.n_test;
            json files = json::array();
            for (int i = 0; i < n; ++i) {
                PointCloud cloud = make_cloud(
                    spec, config.points, derive_seed(config.seed, salt(spec.kind), salt(split), i));
                char name[64];
                std::snprintf(name, sizeof name, "%s_%03d.xyz", split, i);
                const std::string rel = spec.kind + "/" + name;
                save_cloud(cloud, (fs::path(out_dir) / rel).string());
                files.push_back(rel);
            }
            jc[split] = files;
        }
        manifest["categories"].push_back(jc);
    }
    const std::string mpath = (fs::path(out_dir) / "manifest.json").string();
    std::ofstream out(mpath);
    if (!out) throw std::runtime_error("cannot write manifest: " + mpath);
    out << manifest.dump(2) << "\n";
    out.close();
    return load_dataset(mpath);
}

namespace {

// Smallest Chamfer distance over a yaw grid: train clouds carry a random
// yaw, so aligning pose first lets Chamfer measure shape identity rather
// than pose scatter.
double pose_aligned_chamfer(const PointCloud& a, const PointCloud& b) {
    const int steps = 16;
    double best = std::numeric_limits<double>::infinity();
    PointCloud rotated = b;
    for (int k = 0; k < steps; ++k) {
        const double theta = kTau * k / steps;
        const double c = std::cos(theta), s = std::sin(theta);
        for (int i = 0; i < b.points.rows; ++i) {
            const float* src = b.points.row(i);
            float* dst = rotated.points.row(i);
            dst[0] = static_cast<float>(c * src[0] - s * src[1]);
            dst[1] = static_cast<float>(s * src[0] + c * src[1]);
        }
        best = std::min(best, chamfer_distance(a, rotated));
    }
    return best;
}

}  // namespace

SelfTestResult synth_self_test(const LabeledDataset& dataset, uint64_t seed) {
    // Subsampling keeps this O(seconds) at default sizes; prototypes and
    // clouds are compared at the same resolution so the nearest-neighbor
    // noise floor is uniform across categories.
    const int max_clouds = 8, max_pts = 384;

    std::vector<PointCloud> proto(dataset.categories.size());
    std::vector<std::vector<PointCloud>> sub(dataset.categories.size());
    for (size_t c = 0; c < dataset.categories.size(); ++c) {
        const auto& cat = dataset.categories[c];
        ShapeSpec canon;
        canon.kind = cat.name;
        canon.jitter_sigma = 0.0;
        canon.scale_lo = canon.scale_hi = 1.0;
        canon.rotate = false;
        const int w = std::min<int>(max_pts, static_cast<int>(cat.train.front().size()));
        proto[c] = make_cloud(canon, w, derive_seed(seed, salt("proto"), c));

        const int n = std::min<int>(max_clouds, static_cast<int>(cat.train.size()));
        for (int i = 0; i < n; ++i)
            sub[c].push_back(normalize_unit_sphere(
                cat.train[i].size() > max_pts
                    ? sample_points(cat.train[i], max_pts, derive_seed(seed, salt("selftest"), c, i))
                    : cat.train[i]));
    }

    SelfTestResult res;
    res.min_inter = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < sub.size(); ++c) {
        for (const auto& cloud : sub[c])
            res.max_intra = std::max(res.max_intra, pose_aligned_chamfer(proto[c], cloud));
        for (size_t d = c + 1; d < sub.size(); ++d)
            res.min_inter = std::min(res.min_inter, chamfer_distance(proto[c], proto[d]));
    }
    res.ratio = res.max_intra > 0 ? res.min_inter / res.max_intra
                                  : std::numeric_limits<double>::infinity();
    return res;
}

}  // namespace pcad
