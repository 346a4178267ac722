#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "pcad/checkpoint.hpp"
#include "pcad/synthgen.hpp"

using namespace pcad;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("pcad_synth_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
    }
    ~TempDir() { fs::remove_all(path); }
    static int counter;
};
int TempDir::counter = 0;

SynthConfig tiny_config() {
    SynthConfig cfg;
    cfg.specs = default_specs(3);
    cfg.n_train = 5;
    cfg.n_test = 2;
    cfg.points = 96;
    cfg.seed = 41;
    return cfg;
}

uint64_t tree_checksum(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& f : files) {
        const std::string rel = fs::relative(f, root).string();
        h = fnv1a64(rel.data(), rel.size(), h);
        const uint64_t fh = fnv1a64_file(f.string());
        h = fnv1a64(&fh, sizeof fh, h);
    }
    return h;
}

}  // namespace

TEST_CASE("the default set has six distinguishable kinds totalling 14 parts") {
    auto specs = default_specs();
    REQUIRE(specs.size() == 6);
    std::set<std::string> kinds;
    int parts = 0;
    for (const auto& s : specs) {
        kinds.insert(s.kind);
        CHECK(s.num_parts() >= 2);
        parts += s.num_parts();
    }
    CHECK(kinds.size() == 6);
    CHECK(parts == 14);
}

TEST_CASE("generation writes the manifest tree and loads back consistently") {
    TempDir dir;
    SynthConfig cfg = tiny_config();
    LabeledDataset ds = generate_dataset(cfg, dir.path.string());
    REQUIRE(ds.num_categories() == 3);
    for (int c = 0; c < 3; ++c) {
        const Category& cat = ds.categories[c];
        CHECK(cat.train.size() == 5);
        CHECK(cat.test.size() == 2);
        CHECK(cat.num_parts >= 2);
        std::set<int> seen;
        for (const auto& cloud : cat.train) {
            REQUIRE(cloud.size() == 96);
            REQUIRE(cloud.has_labels());
            for (int l : cloud.labels) {
                CHECK(l >= 0);
                CHECK(l < cat.num_parts);
                seen.insert(l);
            }
            double maxn = 0.0;
            for (int i = 0; i < cloud.size(); ++i) {
                double n2 = 0.0;
                for (int j = 0; j < 3; ++j)
                    n2 += static_cast<double>(cloud.points.at(i, j)) * cloud.points.at(i, j);
                maxn = std::max(maxn, std::sqrt(n2));
            }
            CHECK(maxn <= 1.0 + 1e-5);  // written pre-normalized
        }
        CHECK(static_cast<int>(seen.size()) == cat.num_parts);  // every part sampled
    }
    CHECK(fs::exists(dir.path / "manifest.json"));
}

TEST_CASE("the same seed regenerates bitwise-identical files") {
    TempDir a, b, c;
    SynthConfig cfg = tiny_config();
    generate_dataset(cfg, a.path.string());
    generate_dataset(cfg, b.path.string());
    CHECK(tree_checksum(a.path) == tree_checksum(b.path));
    cfg.seed += 1;
    generate_dataset(cfg, c.path.string());
    CHECK(tree_checksum(a.path) != tree_checksum(c.path));
}

TEST_CASE("config validation rejects unusable sizes") {
    SynthConfig cfg = tiny_config();
    cfg.points = 8;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.n_train = 4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.specs[0].kind = "dodecahedron";
    CHECK_THROWS_AS(generate_dataset(cfg, "/tmp/pcad_never_written"), std::invalid_argument);
}

TEST_CASE("categories separate: inter-category distance dominates intra-category spread") {
    TempDir dir;
    LabeledDataset ds = generate_dataset(tiny_config(), dir.path.string());
    SelfTestResult st = synth_self_test(ds, 1);
    CHECK(st.min_inter > 0.0);
    CHECK(st.max_intra > 0.0);
    CHECK(st.ratio > 1.0);
}
