// Independent reference implementations the tests compare the library
// against. Everything here is deliberately brute-force.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracles {

// Mann-Whitney pair statistic: fraction of (positive, negative) pairs the
// positive outranks, with half credit for ties.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double credit = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                credit += 1.0;
            else if (scores[i] == scores[j])
                credit += 0.5;
        }
    }
    return credit / static_cast<double>(pairs);
}

// Scalar restatement of the distillation objective: mean of per-position
// cosine distances over positions whose widths match.
inline double multiscale_reference(const std::vector<std::vector<float>>& fs,
                                   const std::vector<std::vector<float>>& ft, double eps) {
    double total = 0.0;
    int k = 0;
    for (size_t p = 0; p < fs.size(); ++p) {
        if (fs[p].empty() || fs[p].size() != ft[p].size()) continue;
        double dot = 0.0, a = 0.0, b = 0.0;
        for (size_t i = 0; i < fs[p].size(); ++i) {
            dot += static_cast<double>(fs[p][i]) * ft[p][i];
            a += static_cast<double>(fs[p][i]) * fs[p][i];
            b += static_cast<double>(ft[p][i]) * ft[p][i];
        }
        total += 1.0 - dot / std::max(std::sqrt(a) * std::sqrt(b), eps);
        ++k;
    }
    return total / k;
}

// Relative agreement for gradient checks: |a-n| measured against the larger
// magnitude, with a floor so near-zero gradients are judged absolutely.
inline double grad_rel_err(double analytic, double numeric, double floor_mag) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor_mag});
    return std::fabs(analytic - numeric) / denom;
}

// Central finite difference through a float parameter. The perturbed values
// round to float, so the step is measured after rounding; the evaluation
// itself may carry double accumulators and stays exact at those points.
template <class F>
double fd_through_float(float& slot, double step, F eval) {
    const float saved = slot;
    const float hi = static_cast<float>(static_cast<double>(saved) + step);
    const float lo = static_cast<float>(static_cast<double>(saved) - step);
    slot = hi;
    const double f_hi = eval();
    slot = lo;
    const double f_lo = eval();
    slot = saved;
    return (f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
}

}  // namespace oracles
