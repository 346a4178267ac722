#include "pcad/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pcad {

ScaleMode scale_mode_from_string(const std::string& s) {
    if (s == "final") return ScaleMode::Final;
    if (s == "multi" || s == "multiscale") return ScaleMode::Multi;
    throw std::invalid_argument("unknown scale mode: " + s + " (want final|multi)");
}

Metric metric_from_string(const std::string& s) {
    if (s == "cos" || s == "cosine") return Metric::Cosine;
    if (s == "l2") return Metric::L2;
    throw std::invalid_argument("unknown metric: " + s + " (want cos|l2)");
}

namespace {

double l2_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

AnomalyScore score_from_taps(const TapFeatures& student, const TapFeatures& teacher, ScaleMode scale,
                             Metric metric, double eps) {
    AnomalyScore s;
    s.scale_mode = scale;
    s.metric = metric;
    if (student.f3.size() != teacher.f3.size() || student.f3.empty())
        throw std::invalid_argument("score: final tap widths do not match");

    if (scale == ScaleMode::Final) {
        s.value = metric == Metric::Cosine ? cosine_loss(student.f3, teacher.f3, eps)
                                           : l2_distance(student.f3, teacher.f3);
        return s;
    }
    double total = 0.0;
    int k = 0;
    auto add = [&](const std::vector<float>& a, const std::vector<float>& b) {
        if (a.empty() || a.size() != b.size()) return;
        total += metric == Metric::Cosine ? cosine_loss(a, b, eps) : l2_distance(a, b);
        ++k;
    };
    add(student.f1, teacher.f1);
    add(student.f2, teacher.f2);
    add(student.f3, teacher.f3);
    s.value = total / k;
    return s;
}

AnomalyScore anomaly_score(const BackboneParams& teacher, const BackboneParams& student,
                           const PointCloud& cloud, ScaleMode scale, Metric metric, double eps,
                           int threads) {
    PointCloud prep = normalize_unit_sphere(cloud);
    auto& t = const_cast<BackboneParams&>(teacher);  // eval forward never writes params
    auto& s = const_cast<BackboneParams&>(student);
    ForwardTrace tt = forward(t, prep, Mode::Eval, false, threads);
    ForwardTrace ts = forward(s, prep, Mode::Eval, false, threads);
    return score_from_taps(ts.taps_of(0), tt.taps_of(0), scale, metric, eps);
}

int classify(const AnomalyScore& score, double tau) { return score.value < tau ? 0 : 1; }

double youden_tau(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("youden_tau: scores and labels must align and be nonempty");
    int pos = 0, neg = 0;
    for (int l : labels) (l == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw std::invalid_argument("youden_tau: need both classes");

    std::vector<double> taus = scores;
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

    double best_j = -2.0, best_tau = taus.front();
    for (double tau : taus) {  // ascending, so >= lets the largest tied tau win
        int tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i)
            if (scores[i] >= tau) (labels[i] == 1 ? tp : fp)++;
        double j = static_cast<double>(tp) / pos - static_cast<double>(fp) / neg;
        if (j >= best_j) {
            best_j = j;
            best_tau = tau;
        }
    }
    return best_tau;
}

}  // namespace pcad
