#pragma once

#include <string>
#include <vector>

#include "pcad/backbone.hpp"
#include "pcad/distill.hpp"
#include "pcad/geometry.hpp"

namespace pcad {

enum class ScaleMode { Final, Multi };
enum class Metric { Cosine, L2 };

ScaleMode scale_mode_from_string(const std::string& s);
Metric metric_from_string(const std::string& s);

struct AnomalyScore {
    double value = 0.0;
    ScaleMode scale_mode = ScaleMode::Final;
    Metric metric = Metric::Cosine;
};

// Score from already computed tap features. cosine/final: the cosine loss on
// the last tap pair; cosine/multi: mean cosine loss over matching taps;
// l2/final: Euclidean distance of the last tap pair (unbounded above);
// l2/multi: mean Euclidean distance over matching taps.
AnomalyScore score_from_taps(const TapFeatures& student, const TapFeatures& teacher, ScaleMode scale,
                             Metric metric, double eps = 1e-8);

// Runs both networks in eval mode on the (normalized) cloud and scores the
// resulting taps. Higher = more anomalous.
AnomalyScore anomaly_score(const BackboneParams& teacher, const BackboneParams& student,
                           const PointCloud& cloud, ScaleMode scale = ScaleMode::Final,
                           Metric metric = Metric::Cosine, double eps = 1e-8, int threads = 0);

// 0 (normal) iff s < tau; s = tau classifies as anomalous.
int classify(const AnomalyScore& score, double tau);

// Threshold maximizing Youden's J = TPR - FPR over the given validation
// scores (labels: 1 = anomalous). Ties prefer the largest threshold. An
// operator convenience beyond the core scoring rule.
double youden_tau(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace pcad
