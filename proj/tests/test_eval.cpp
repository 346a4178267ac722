#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "pcad/detect.hpp"
#include "pcad/eval.hpp"
#include "pcad/rng.hpp"

using namespace pcad;

TEST_CASE("perfect, all-tied, and inverted scores give AUC 1.0, 0.5, 0.0 exactly") {
    std::vector<double> hi{0.9, 0.8, 0.7}, lo{0.2, 0.1, 0.3};
    std::vector<double> scores;
    std::vector<int> labels;
    for (double s : hi) {
        scores.push_back(s);
        labels.push_back(1);
    }
    for (double s : lo) {
        scores.push_back(s);
        labels.push_back(0);
    }
    CHECK(auc(roc_curve(scores, labels)) == 1.0);

    std::vector<double> tied(6, 0.5);
    CHECK(auc(roc_curve(tied, labels)) == 0.5);

    for (auto& l : labels) l = 1 - l;  // anomalies now score lowest
    CHECK(auc(roc_curve(scores, labels)) == 0.0);
}

TEST_CASE("the curve starts at a (0,0) sentinel and groups tied scores") {
    std::vector<double> scores{0.9, 0.9, 0.1, 0.1};
    std::vector<int> labels{1, 0, 1, 0};
    auto curve = roc_curve(scores, labels);
    REQUIRE(curve.size() == 3);  // sentinel + two distinct scores
    CHECK(curve[0].fpr == 0.0);
    CHECK(curve[0].tpr == 0.0);
    CHECK(std::isinf(curve[0].threshold));
    CHECK(curve[1].threshold == 0.9);
    CHECK(curve[1].fpr == doctest::Approx(0.5));
    CHECK(curve[1].tpr == doctest::Approx(0.5));
    CHECK(curve[2].fpr == 1.0);
    CHECK(curve[2].tpr == 1.0);
    CHECK(auc(curve) == doctest::Approx(0.5));
}

TEST_CASE("roc_curve validates its inputs") {
    std::vector<double> s{0.1, 0.2};
    std::vector<int> one_class{1, 1};
    CHECK_THROWS_AS(roc_curve(s, one_class), std::invalid_argument);
    std::vector<int> bad_label{0, 7};
    CHECK_THROWS_AS(roc_curve(s, bad_label), std::invalid_argument);
    std::vector<int> short_labels{0};
    CHECK_THROWS_AS(roc_curve(s, short_labels), std::invalid_argument);
}

TEST_CASE("trapezoidal AUC equals the pairwise statistic on tie-heavy random sets") {
    Rng rng(17);
    for (int it = 0; it < 50; ++it) {
        const int n = 2 + static_cast<int>(rng.below(199));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        const bool discrete = it % 2 == 0;  // half the sets force heavy ties
        for (int i = 0; i < n; ++i) {
            scores[i] = discrete ? static_cast<double>(rng.below(5)) * 0.25 : rng.uniform();
            labels[i] = static_cast<int>(rng.below(2));
        }
        labels[0] = 0;  // both classes guaranteed
        labels[n - 1] = 1;
        const double got = auc(roc_curve(scores, labels));
        const double want = oracles::pairwise_auc(scores, labels);
        CHECK(std::fabs(got - want) < 1e-12);
    }
}

TEST_CASE("AUC ignores strictly increasing transforms and label-swap/negation") {
    Rng rng(18);
    const int n = 60;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        scores[i] = rng.uniform(-1.0, 3.0);
        labels[i] = static_cast<int>(rng.below(2));
    }
    labels[0] = 0;
    labels[1] = 1;
    const double base = auc(roc_curve(scores, labels));

    std::vector<double> mono = scores;
    for (auto& s : mono) s = std::exp(0.7 * s) + 2.0;
    CHECK(auc(roc_curve(mono, labels)) == doctest::Approx(base).epsilon(1e-12));

    std::vector<double> neg = scores;
    for (auto& s : neg) s = -s;
    std::vector<int> swapped = labels;
    for (auto& l : swapped) l = 1 - l;
    CHECK(auc(roc_curve(neg, swapped)) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("youden threshold separates a cleanly split set and prefers the largest tie") {
    std::vector<double> scores{0.1, 0.2, 0.8, 0.9};
    std::vector<int> labels{0, 0, 1, 1};
    // Any tau in (0.2, 0.8] yields J = 1; candidates are observed scores, so
    // 0.8 is optimal and ties at J = 1 resolve to the largest candidate.
    CHECK(youden_tau(scores, labels) == 0.8);

    std::vector<double> flat(4, 0.3);
    CHECK(youden_tau(flat, labels) == 0.3);

    std::vector<int> single(4, 1);
    CHECK_THROWS_AS(youden_tau(scores, single), std::invalid_argument);
}
