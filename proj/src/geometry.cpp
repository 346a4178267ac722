#include "pcad/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "pcad/rng.hpp"

namespace pcad {

namespace fs = std::filesystem;
using nlohmann::json;

int LabeledDataset::total_parts() const {
    int k = 0;
    for (const auto& c : categories) k += c.num_parts;
    return k;
}

PointCloud load_cloud(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cloud file: " + path);

    std::vector<float> coords;
    std::vector<int> labels;
    int ncols = 0;  // 3 or 4 once known
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;

        // strtod (unlike stream extraction) parses "inf"/"nan" tokens, so
        // non-finite input reaches the dedicated check below.
        const char* p = line.c_str();
        char* end = nullptr;
        double xyz[3];
        for (double& v : xyz) {
            v = std::strtod(p, &end);
            if (end == p)
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed line");
            p = end;
        }
        int cols = 3;
        const long lab = std::strtol(p, &end, 10);
        if (end != p) {
            cols = 4;
            p = end;
        }
        while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
        if (*p)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed line");
        const double x = xyz[0], y = xyz[1], z = xyz[2];
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-finite coordinate");
        if (ncols == 0) ncols = cols;
        if (cols != ncols) throw std::runtime_error(path + ": inconsistent label column");
        coords.push_back(static_cast<float>(x));
        coords.push_back(static_cast<float>(y));
        coords.push_back(static_cast<float>(z));
        if (cols == 4) {
            if (lab < 0) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": negative label");
            labels.push_back(static_cast<int>(lab));
        }
    }
    if (coords.empty()) throw std::runtime_error(path + ": empty cloud");

    PointCloud cloud;
    cloud.points = Mat(static_cast<int>(coords.size() / 3), 3);
    cloud.points.v = std::move(coords);
    cloud.labels = std::move(labels);
    return cloud;
}

void save_cloud(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write cloud file: " + path);
    char buf[128];
    for (int i = 0; i < cloud.size(); ++i) {
        const float* p = cloud.points.row(i);
        // 9 significant digits round-trip float32 exactly.
        if (cloud.has_labels())
            std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %d\n", p[0], p[1], p[2], cloud.labels[i]);
        else
            std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

PointCloud sample_points(const PointCloud& cloud, int w, uint64_t seed) {
    if (w < 1) throw std::invalid_argument("sample_points: w must be >= 1");
    const int n = cloud.size();
    Rng rng(seed);
    std::vector<int> idx;
    if (w <= n) {
        idx = rng.choose(n, w);
    } else {
        idx.resize(w);
        for (int i = 0; i < w; ++i) idx[i] = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    }
    PointCloud out;
    out.points = Mat(w, 3);
    if (cloud.has_labels()) out.labels.resize(w);
    for (int i = 0; i < w; ++i) {
        const float* src = cloud.points.row(idx[i]);
        float* dst = out.points.row(i);
        dst[0] = src[0];
        dst[1] = src[1];
        dst[2] = src[2];
        if (cloud.has_labels()) out.labels[i] = cloud.labels[idx[i]];
    }
    return out;
}

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
    const int n = cloud.size();
    if (n < 1) throw std::invalid_argument("normalize_unit_sphere: empty cloud");
    double cx = 0, cy = 0, cz = 0;
    for (int i = 0; i < n; ++i) {
        const float* p = cloud.points.row(i);
        cx += p[0];
        cy += p[1];
        cz += p[2];
    }
    cx /= n;
    cy /= n;
    cz /= n;
    double max_norm = 0;
    for (int i = 0; i < n; ++i) {
        const float* p = cloud.points.row(i);
        double dx = p[0] - cx, dy = p[1] - cy, dz = p[2] - cz;
        max_norm = std::max(max_norm, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    PointCloud out;
    out.points = Mat(n, 3);
    out.labels = cloud.labels;
    const double inv = max_norm > 1e-12 ? 1.0 / max_norm : 0.0;
    for (int i = 0; i < n; ++i) {
        const float* p = cloud.points.row(i);
        float* q = out.points.row(i);
        q[0] = static_cast<float>((p[0] - cx) * inv);
        q[1] = static_cast<float>((p[1] - cy) * inv);
        q[2] = static_cast<float>((p[2] - cz) * inv);
    }
    return out;
}

LabeledDataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error(manifest_path + ": invalid JSON (" + e.what() + ")");
    }
    if (!doc.contains("categories") || !doc["categories"].is_array())
        throw std::runtime_error(manifest_path + ": missing `categories` array");

    const fs::path root = fs::path(manifest_path).parent_path();
    LabeledDataset ds;
    for (const auto& jc : doc["categories"]) {
        Category cat;
        cat.name = jc.at("name").get<std::string>();
        cat.num_parts = jc.at("num_parts").get<int>();
        if (cat.num_parts < 1)
            throw std::runtime_error(manifest_path + ": category " + cat.name + ": num_parts < 1");
        for (const char* split : {"train", "test"}) {
            if (!jc.contains(split)) continue;
            auto& dst = std::string(split) == "train" ? cat.train : cat.test;
            for (const auto& jp : jc.at(split)) {
                auto rel = jp.get<std::string>();
                PointCloud c = load_cloud((root / rel).string());
                if (c.has_labels())
                    for (int lab : c.labels)
                        if (lab >= cat.num_parts)
                            throw std::runtime_error(rel + ": label " + std::to_string(lab) +
                                                     " out of range for category " + cat.name);
                dst.push_back(std::move(c));
            }
        }
        ds.categories.push_back(std::move(cat));
    }
    if (ds.categories.empty()) throw std::runtime_error(manifest_path + ": no categories");
    return ds;
}

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
    auto one_way = [](const PointCloud& u, const PointCloud& v) {
        double total = 0;
        for (int i = 0; i < u.size(); ++i) {
            const float* p = u.points.row(i);
            double best = std::numeric_limits<double>::max();
            for (int j = 0; j < v.size(); ++j) {
                const float* q = v.points.row(j);
                double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
                best = std::min(best, dx * dx + dy * dy + dz * dz);
            }
            total += best;
        }
        return total / u.size();
    };
    return 0.5 * (one_way(a, b) + one_way(b, a));
}

}  // namespace pcad
