#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/backbone.hpp"
#include "pcad/detect.hpp"
#include "pcad/distill.hpp"
#include "pcad/geometry.hpp"

namespace pcad {

struct RocPoint {
    double fpr, tpr, threshold;
};

// One point per distinct score (ties grouped), preceded by a (0,0) sentinel
// at threshold +inf. Labels: 1 = anomalous = positive; higher score = more
// anomalous. Requires both classes present.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

// Trapezoidal area; equals the Mann-Whitney pairwise statistic with ties
// credited 0.5 under the grouped-threshold convention above.
double auc(const std::vector<RocPoint>& curve);

// Category-rotation protocol: for each requested category and each run,
// pick n_samples training clouds by seed, distill a student, score every
// test cloud of every category (label 0 iff it belongs to the category under
// test), and compute AUC.
struct EvalProtocol {
    std::vector<int> categories;  // empty = all
    int n_samples = 5;
    int n_runs = 10;
    uint64_t base_seed = 0;
    ScaleMode scale_mode = ScaleMode::Final;
    Metric metric = Metric::Cosine;
    int points_per_cloud = 0;  // 0 = score clouds as stored
    DistillConfig distill;     // epochs/lr0/decay/eps/student_mid template
    int threads = 0;
    bool keep_roc = true;
};

struct RunResult {
    int category = 0;
    int run = 0;
    uint64_t seed = 0;
    std::vector<int> sample_indices;
    double auc_value = 0.0;    // at the protocol's scale/metric
    double aux_auc[2][2]{};    // [ScaleMode][Metric], all four combos
    std::vector<RocPoint> roc; // at the protocol's scale/metric
};

struct CategoryReport {
    int category = 0;
    std::string name;
    std::vector<RunResult> runs;
    double mean_auc = 0.0;
    double std_auc = 0.0;  // sample std, divisor n-1 (0 when n_runs == 1)
};

struct EvalReport {
    std::vector<CategoryReport> per_category;
    double overall_mean = 0.0;
    nlohmann::json config_echo;
};

EvalReport run_experiment(const LabeledDataset& dataset, const BackboneParams& teacher,
                          const EvalProtocol& protocol);

// Writes auc.csv, roc_<category>_<run>.csv (when kept), and summary.md.
void write_report(const EvalReport& report, const EvalProtocol& protocol, const std::string& out_dir);

}  // namespace pcad
