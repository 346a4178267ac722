#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "pcad/geometry.hpp"
#include "pcad/rng.hpp"

using namespace pcad;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("pcad_geo_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int counter;
};
int TempDir::counter = 0;

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

PointCloud make_cloud(int w, uint64_t seed, int parts = 0) {
    Rng rng(seed);
    PointCloud c;
    c.points = Mat(w, 3);
    for (auto& x : c.points.v) x = rng.uniform_f(-1.0f, 1.0f);
    if (parts > 0)
        for (int i = 0; i < w; ++i) c.labels.push_back(static_cast<int>(rng.below(parts)));
    return c;
}

}  // namespace

TEST_CASE("cloud save/load round-trips points and labels") {
    TempDir dir;
    PointCloud c = make_cloud(37, 3, 4);
    save_cloud(c, dir.file("a.xyz"));
    PointCloud back = load_cloud(dir.file("a.xyz"));
    REQUIRE(back.size() == 37);
    REQUIRE(back.has_labels());
    CHECK(back.labels == c.labels);
    for (size_t i = 0; i < c.points.size(); ++i)
        CHECK(back.points.v[i] == doctest::Approx(c.points.v[i]).epsilon(1e-6));
}

TEST_CASE("loader skips comments and blank lines") {
    TempDir dir;
    write_text(dir.file("c.xyz"), "# header\n\n1 2 3\n# mid\n4 5 6\n");
    PointCloud c = load_cloud(dir.file("c.xyz"));
    CHECK(c.size() == 2);
    CHECK_FALSE(c.has_labels());
    CHECK(c.points.at(1, 2) == 6.0f);
}

TEST_CASE("loader rejects malformed input") {
    TempDir dir;
    write_text(dir.file("short.xyz"), "1 2\n");
    CHECK_THROWS_WITH_AS(load_cloud(dir.file("short.xyz")), doctest::Contains("malformed"),
                         std::runtime_error);
    write_text(dir.file("mixed.xyz"), "1 2 3 0\n4 5 6\n");
    CHECK_THROWS_WITH_AS(load_cloud(dir.file("mixed.xyz")), doctest::Contains("label"),
                         std::runtime_error);
    write_text(dir.file("empty.xyz"), "# nothing\n");
    CHECK_THROWS_WITH_AS(load_cloud(dir.file("empty.xyz")), doctest::Contains("empty"),
                         std::runtime_error);
    write_text(dir.file("inf.xyz"), "1 2 inf\n");
    CHECK_THROWS_WITH_AS(load_cloud(dir.file("inf.xyz")), doctest::Contains("finite"),
                         std::runtime_error);
    write_text(dir.file("neg.xyz"), "1 2 3 -1\n");
    CHECK_THROWS_WITH_AS(load_cloud(dir.file("neg.xyz")), doctest::Contains("label"),
                         std::runtime_error);
    CHECK_THROWS_AS(load_cloud(dir.file("missing.xyz")), std::runtime_error);
}

TEST_CASE("sample_points draws without replacement when w <= W") {
    PointCloud c = make_cloud(50, 4, 3);
    PointCloud s = sample_points(c, 20, 99);
    REQUIRE(s.size() == 20);
    REQUIRE(s.labels.size() == 20);
    // Every sampled row must be one of the source rows, each at most once.
    std::set<int> used;
    for (int i = 0; i < 20; ++i) {
        int found = -1;
        for (int j = 0; j < 50; ++j) {
            if (s.points.at(i, 0) == c.points.at(j, 0) && s.points.at(i, 1) == c.points.at(j, 1) &&
                s.points.at(i, 2) == c.points.at(j, 2) && used.count(j) == 0) {
                found = j;
                break;
            }
        }
        REQUIRE(found >= 0);
        used.insert(found);
        CHECK(s.labels[i] == c.labels[found]);
    }
    CHECK(sample_points(c, 20, 99).points.v == s.points.v);  // seed-deterministic
}

TEST_CASE("sample_points draws with replacement when w > W") {
    PointCloud c = make_cloud(5, 4);
    PointCloud s = sample_points(c, 40, 7);
    CHECK(s.size() == 40);
}

TEST_CASE("normalize_unit_sphere centers and scales to the unit ball") {
    PointCloud c = make_cloud(64, 8);
    for (auto& x : c.points.v) x = x * 5.0f + 2.0f;
    PointCloud n = normalize_unit_sphere(c);
    double cx = 0, cy = 0, cz = 0, maxn = 0;
    for (int i = 0; i < n.size(); ++i) {
        cx += n.points.at(i, 0);
        cy += n.points.at(i, 1);
        cz += n.points.at(i, 2);
        maxn = std::max(maxn, std::sqrt(static_cast<double>(n.points.at(i, 0)) * n.points.at(i, 0) +
                                        static_cast<double>(n.points.at(i, 1)) * n.points.at(i, 1) +
                                        static_cast<double>(n.points.at(i, 2)) * n.points.at(i, 2)));
    }
    CHECK(std::fabs(cx / n.size()) < 1e-5);
    CHECK(std::fabs(cy / n.size()) < 1e-5);
    CHECK(std::fabs(cz / n.size()) < 1e-5);
    CHECK(maxn == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("normalize_unit_sphere maps a degenerate cloud to the origin") {
    PointCloud c;
    c.points = Mat(4, 3);
    for (auto& x : c.points.v) x = 3.25f;
    PointCloud n = normalize_unit_sphere(c);
    for (float x : n.points.v) CHECK(x == 0.0f);
}

TEST_CASE("chamfer distance is zero on identical clouds and exact on a shifted pair") {
    PointCloud a = make_cloud(30, 5);
    CHECK(chamfer_distance(a, a) == doctest::Approx(0.0));
    PointCloud p, q;
    p.points = Mat(1, 3);
    q.points = Mat(1, 3);
    q.points.at(0, 0) = 3.0f;
    q.points.at(0, 1) = 4.0f;
    // single points 5 apart, squared metric
    CHECK(chamfer_distance(p, q) == doctest::Approx(25.0));
}

TEST_CASE("dataset manifest loads categories with relative paths") {
    TempDir dir;
    fs::create_directories(dir.path / "cat0");
    PointCloud c = make_cloud(16, 6, 2);
    save_cloud(c, dir.file("cat0/t0.xyz"));
    save_cloud(c, dir.file("cat0/e0.xyz"));
    write_text(dir.file("manifest.json"),
               R"({"categories":[{"name":"cat0","num_parts":2,)"
               R"("train":["cat0/t0.xyz"],"test":["cat0/e0.xyz"]}]})");
    LabeledDataset ds = load_dataset(dir.file("manifest.json"));
    REQUIRE(ds.num_categories() == 1);
    CHECK(ds.categories[0].name == "cat0");
    CHECK(ds.categories[0].num_parts == 2);
    CHECK(ds.categories[0].train.size() == 1);
    CHECK(ds.categories[0].test.size() == 1);
    CHECK(ds.total_parts() == 2);
}

TEST_CASE("dataset manifest rejects labels outside num_parts") {
    TempDir dir;
    fs::create_directories(dir.path / "c");
    PointCloud c = make_cloud(8, 7, 5);  // labels in [0,5)
    save_cloud(c, dir.file("c/t.xyz"));
    write_text(dir.file("manifest.json"),
               R"({"categories":[{"name":"c","num_parts":2,"train":["c/t.xyz"],"test":[]}]})");
    CHECK_THROWS_AS(load_dataset(dir.file("manifest.json")), std::runtime_error);
}
