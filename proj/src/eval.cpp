#include "pcad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "pcad/rng.hpp"

namespace pcad {

namespace fs = std::filesystem;

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("roc_curve: scores and labels must align and be nonempty");
    size_t pos = 0, neg = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("roc_curve: labels must be 0 or 1");
        (l == 1 ? pos : neg)++;
    }
    if (pos == 0 || neg == 0) throw std::invalid_argument("roc_curve: single-class input");

    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    std::vector<RocPoint> curve;
    curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    size_t tp = 0, fp = 0, i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == s) {
            (labels[idx[i]] == 1 ? tp : fp)++;
            ++i;
        }
        curve.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, s});
    }
    return curve;
}

double auc(const std::vector<RocPoint>& curve) {
    if (curve.size() < 2) throw std::invalid_argument("auc: degenerate curve");
    double area = 0.0;
    for (size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
    return area;
}

namespace {

struct TestCloud {
    int category;
    PointCloud prepared;  // sampled (optionally) and normalized
};

// Eval-mode taps for every cloud, batched over runs of equal point count.
std::vector<TapFeatures> taps_for_all(const BackboneParams& net, const std::vector<TestCloud>& clouds,
                                      int threads) {
    auto& mut = const_cast<BackboneParams&>(net);  // eval forward never writes params
    std::vector<TapFeatures> taps(clouds.size());
    size_t i = 0;
    while (i < clouds.size()) {
        const int w = clouds[i].prepared.size();
        size_t j = i;
        while (j < clouds.size() && j - i < 8 && clouds[j].prepared.size() == w) ++j;
        const int b = static_cast<int>(j - i);
        Mat coords(b * w, 3);
        for (int c = 0; c < b; ++c)
            std::copy(clouds[i + c].prepared.points.v.begin(), clouds[i + c].prepared.points.v.end(),
                      coords.v.begin() + static_cast<size_t>(c) * w * 3);
        ForwardTrace tr = forward_batch(mut, coords, b, w, Mode::Eval, false, threads);
        for (int c = 0; c < b; ++c) taps[i + c] = tr.taps_of(c);
        i = j;
    }
    return taps;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

EvalReport run_experiment(const LabeledDataset& dataset, const BackboneParams& teacher,
                          const EvalProtocol& protocol) {
    if (protocol.n_runs < 1) throw std::invalid_argument("eval: n_runs must be >= 1");
    if (protocol.n_samples < 1) throw std::invalid_argument("eval: n_samples must be >= 1");
    std::vector<int> cats = protocol.categories;
    if (cats.empty())
        for (int c = 0; c < dataset.num_categories(); ++c) cats.push_back(c);
    for (int c : cats) {
        if (c < 0 || c >= dataset.num_categories())
            throw std::invalid_argument("eval: unknown category id " + std::to_string(c));
        const auto& cat = dataset.categories[c];
        if (static_cast<int>(cat.train.size()) < protocol.n_samples)
            throw std::invalid_argument("eval: category " + cat.name + " has only " +
                                        std::to_string(cat.train.size()) + " training clouds, need " +
                                        std::to_string(protocol.n_samples));
    }

    // Test clouds (and the frozen teacher's taps on them) are shared by
    // every run: preprocessing seeds depend only on the base seed.
    std::vector<TestCloud> tests;
    for (int c = 0; c < dataset.num_categories(); ++c)
        for (const auto& cloud : dataset.categories[c].test) {
            PointCloud prep =
                protocol.points_per_cloud > 0
                    ? sample_points(cloud, protocol.points_per_cloud,
                                    derive_seed(protocol.base_seed, salt("testpts"), tests.size()))
                    : cloud;
            tests.push_back({c, normalize_unit_sphere(prep)});
        }
    if (tests.empty()) throw std::invalid_argument("eval: dataset has no test clouds");
    const std::vector<TapFeatures> teacher_taps = taps_for_all(teacher, tests, protocol.threads);

    EvalReport report;
    for (int c : cats) {
        CategoryReport cr;
        cr.category = c;
        cr.name = dataset.categories[c].name;
        for (int r = 0; r < protocol.n_runs; ++r) {
            RunResult run;
            run.category = c;
            run.run = r;
            run.seed = derive_seed(protocol.base_seed, salt("run"), c, r);

            Rng pick(run.seed);
            run.sample_indices =
                pick.choose(static_cast<int>(dataset.categories[c].train.size()), protocol.n_samples);
            std::vector<PointCloud> samples;
            for (size_t i = 0; i < run.sample_indices.size(); ++i) {
                const auto& src = dataset.categories[c].train[run.sample_indices[i]];
                samples.push_back(protocol.points_per_cloud > 0
                                      ? sample_points(src, protocol.points_per_cloud,
                                                      derive_seed(run.seed, salt("trainpts"), i))
                                      : src);
            }

            DistillConfig dcfg = protocol.distill;
            dcfg.normal_category = c;
            dcfg.n_samples = protocol.n_samples;
            dcfg.seed = run.seed;
            dcfg.threads = protocol.threads;
            StudentResult student = train_student(teacher, samples, dcfg);

            const std::vector<TapFeatures> student_taps =
                taps_for_all(student.params, tests, protocol.threads);

            std::vector<int> labels(tests.size());
            for (size_t i = 0; i < tests.size(); ++i) labels[i] = tests[i].category == c ? 0 : 1;

            for (ScaleMode sm : {ScaleMode::Final, ScaleMode::Multi})
                for (Metric me : {Metric::Cosine, Metric::L2}) {
                    std::vector<double> scores(tests.size());
                    for (size_t i = 0; i < tests.size(); ++i)
                        scores[i] =
                            score_from_taps(student_taps[i], teacher_taps[i], sm, me, dcfg.eps).value;
                    auto curve = roc_curve(scores, labels);
                    const double a = auc(curve);
                    run.aux_auc[static_cast<int>(sm)][static_cast<int>(me)] = a;
                    if (sm == protocol.scale_mode && me == protocol.metric) {
                        run.auc_value = a;
                        if (protocol.keep_roc) run.roc = std::move(curve);
                    }
                }
            cr.runs.push_back(std::move(run));
        }
        std::vector<double> aucs;
        for (const auto& run : cr.runs) aucs.push_back(run.auc_value);
        cr.mean_auc = mean_of(aucs);
        cr.std_auc = sample_std(aucs, cr.mean_auc);
        report.per_category.push_back(std::move(cr));
    }

    double total = 0.0;
    for (const auto& cr : report.per_category) total += cr.mean_auc;
    report.overall_mean = total / static_cast<double>(report.per_category.size());
    return report;
}

void write_report(const EvalReport& report, const EvalProtocol& protocol, const std::string& out_dir) {
    fs::create_directories(out_dir);
    char buf[256];

    {
        std::ofstream out(fs::path(out_dir) / "auc.csv");
        if (!out) throw std::runtime_error("cannot write auc.csv");
        out << "category,run,seed,n_samples,auc\n";
        for (const auto& cr : report.per_category)
            for (const auto& run : cr.runs) {
                std::snprintf(buf, sizeof buf, "%s,%d,%llu,%d,%.9g\n", cr.name.c_str(), run.run,
                              static_cast<unsigned long long>(run.seed), protocol.n_samples,
                              run.auc_value);
                out << buf;
            }
    }

    if (protocol.keep_roc)
        for (const auto& cr : report.per_category)
            for (const auto& run : cr.runs) {
                std::ofstream out(fs::path(out_dir) /
                                  ("roc_" + cr.name + "_" + std::to_string(run.run) + ".csv"));
                if (!out) throw std::runtime_error("cannot write roc csv");
                out << "fpr,tpr,threshold\n";
                for (const auto& p : run.roc) {
                    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.fpr, p.tpr, p.threshold);
                    out << buf;
                }
            }

    std::ofstream out(fs::path(out_dir) / "summary.md");
    if (!out) throw std::runtime_error("cannot write summary.md");
    out << "# Anomaly-detection report\n\n";
    out << "Protocol: n_samples=" << protocol.n_samples << ", n_runs=" << protocol.n_runs
        << ", scale=" << (protocol.scale_mode == ScaleMode::Final ? "final" : "multi")
        << ", metric=" << (protocol.metric == Metric::Cosine ? "cosine" : "l2")
        << ", points=" << protocol.points_per_cloud << ", base_seed=" << protocol.base_seed << "\n\n";
    out << "| Category | mean AUC | std (n-1) | runs |\n|---|---|---|---|\n";
    for (const auto& cr : report.per_category) {
        std::snprintf(buf, sizeof buf, "| %s | %.4f | %.4f | %zu |\n", cr.name.c_str(), cr.mean_auc,
                      cr.std_auc, cr.runs.size());
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "\nOverall average AUC: %.4f\n", report.overall_mean);
    out << buf;
    out << "\nStd uses the sample convention (divisor n-1); single-run categories report 0.\n";
}

}  // namespace pcad
