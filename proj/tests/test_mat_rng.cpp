#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "pcad/mat.hpp"
#include "pcad/parallel.hpp"
#include "pcad/rng.hpp"

using namespace pcad;

namespace {

Mat naive_gemm(bool ta, bool tb, float alpha, const Mat& a, const Mat& b, float beta, Mat c) {
    const int m = ta ? a.cols : a.rows;
    const int k = ta ? a.rows : a.cols;
    const int n = tb ? b.rows : b.cols;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                const float av = ta ? a.at(p, i) : a.at(i, p);
                const float bv = tb ? b.at(j, p) : b.at(p, j);
                acc += static_cast<double>(av) * bv;
            }
            c.at(i, j) = static_cast<float>(alpha * acc + beta * c.at(i, j));
        }
    return c;
}

Mat random_mat(int r, int c, Rng& rng) {
    Mat m(r, c);
    for (auto& x : m.v) x = rng.uniform_f(-1.0f, 1.0f);
    return m;
}

}  // namespace

TEST_CASE("gemm matches a naive triple loop for all transpose combinations") {
    pin_blas_single_thread();
    Rng rng(11);
    for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb) {
            const int m = 5, k = 7, n = 4;
            Mat a = ta ? random_mat(k, m, rng) : random_mat(m, k, rng);
            Mat b = tb ? random_mat(n, k, rng) : random_mat(k, n, rng);
            Mat c = random_mat(m, n, rng);
            Mat want = naive_gemm(ta, tb, 0.5f, a, b, 0.25f, c);
            gemm(ta, tb, 0.5f, a, b, 0.25f, c);
            for (size_t i = 0; i < c.size(); ++i)
                CHECK(c.v[i] == doctest::Approx(want.v[i]).epsilon(1e-5));
        }
}

TEST_CASE("gemm rejects mismatched shapes") {
    Mat a(3, 4), b(5, 2), c(3, 2);
    CHECK_THROWS_AS(gemm(false, false, 1.0f, a, b, 0.0f, c), std::invalid_argument);
}

TEST_CASE("gemm_raw multiplies a strided view identically to a packed copy") {
    pin_blas_single_thread();
    Rng rng(12);
    Mat big = random_mat(6, 10, rng);  // view: rows 2..4, cols 3..6
    Mat packed(3, 4);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) packed.at(i, j) = big.at(2 + i, 3 + j);
    Mat b = random_mat(4, 2, rng);
    Mat want(3, 2), got(3, 2);
    gemm(false, false, 1.0f, packed, b, 0.0f, want);
    gemm_raw(false, false, 3, 2, 4, 1.0f, big.row(2) + 3, 10, b.v.data(), 2, 0.0f, got.v.data(), 2);
    for (size_t i = 0; i < got.size(); ++i) CHECK(got.v[i] == want.v[i]);
}

TEST_CASE("check_finite names the offending tensor") {
    std::vector<float> ok{1.0f, -2.0f};
    CHECK_NOTHROW(check_finite(ok, "ok"));
    std::vector<float> bad{1.0f, std::nanf("")};
    CHECK_THROWS_WITH_AS(check_finite(bad, "g1.0.w"), doctest::Contains("g1.0.w"),
                         std::runtime_error);
}

TEST_CASE("parallel_for covers every index once for any thread count") {
    for (int threads : {1, 2, 5}) {
        std::vector<int> hits(1000, 0);
        parallel_for(1000, threads, [&](int i) { hits[i]++; });
        CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
}

TEST_CASE("derived seeds are stable and decorrelated") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, salt("a")) != derive_seed(1, salt("b")));
    CHECK(salt("") == 0xcbf29ce484222325ULL);
    CHECK(salt("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("uniform stays in [0,1) and below() stays in range") {
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 10000; ++i) CHECK(rng.below(7) < 7);
    CHECK_THROWS_AS(rng.below(0), std::invalid_argument);
}

TEST_CASE("normal() produces roughly standard moments") {
    Rng rng(6);
    const int n = 50000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::fabs(sum / n) < 0.02);
    CHECK(std::fabs(sq / n - 1.0) < 0.05);
}

TEST_CASE("choose returns k distinct indices and identical streams repeat") {
    Rng a(9), b(9);
    auto pick_a = a.choose(50, 12);
    auto pick_b = b.choose(50, 12);
    CHECK(pick_a == pick_b);
    CHECK(pick_a.size() == 12);
    std::set<int> uniq(pick_a.begin(), pick_a.end());
    CHECK(uniq.size() == 12);
    for (int i : pick_a) {
        CHECK(i >= 0);
        CHECK(i < 50);
    }
    CHECK_THROWS_AS(a.choose(3, 4), std::invalid_argument);
}

TEST_CASE("shuffle permutes without loss") {
    Rng rng(10);
    std::vector<int> v(64);
    for (int i = 0; i < 64; ++i) v[i] = i;
    auto orig = v;
    rng.shuffle(v);
    CHECK(v != orig);  // 64! leaves no realistic chance of identity
    std::sort(v.begin(), v.end());
    CHECK(v == orig);
}
