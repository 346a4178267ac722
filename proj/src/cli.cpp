#include "pcad/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pcad/checkpoint.hpp"
#include "pcad/detect.hpp"
#include "pcad/distill.hpp"
#include "pcad/eval.hpp"
#include "pcad/pretrain.hpp"
#include "pcad/rng.hpp"
#include "pcad/synthgen.hpp"

namespace pcad {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// One configurable value: a flag bound to a variable plus its dotted config
// key. Flags beat config-file values beat defaults; the resolved value is
// echoed into run.json.
struct KV {
    std::string key;
    CLI::Option* opt;
    std::function<void(const json&)> set;
    std::function<json()> get;
};

template <class T>
void reg(std::vector<KV>& kvs, CLI::Option* opt, const std::string& key, T& var) {
    kvs.push_back({key, opt, [&var](const json& j) { var = j.get<T>(); },
                   [&var]() { return json(var); }});
}

void apply_config(const std::string& path, const std::string& subcommand, std::vector<KV>& kvs) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": invalid JSON (" + std::string(e.what()) + ")");
    }
    if (cfg.contains("subcommand") && cfg["subcommand"].get<std::string>() != subcommand)
        throw std::runtime_error(path + ": config is for subcommand `" +
                                 cfg["subcommand"].get<std::string>() + "`, not `" + subcommand + "`");
    for (auto& kv : kvs)
        if (kv.opt->count() == 0 && cfg.contains(kv.key) && !cfg.at(kv.key).is_null())
            kv.set(cfg.at(kv.key));
}

void write_run_json(const std::string& dir, const std::string& subcommand,
                    const std::vector<KV>& kvs) {
    json echo{{"subcommand", subcommand}};
    for (const auto& kv : kvs) {
        json v = kv.get();
        // Unset floating defaults (NaN) would serialize as null; leave them out.
        if (v.is_number_float() && !std::isfinite(v.get<double>())) continue;
        echo[kv.key] = v;
    }
    fs::create_directories(dir.empty() ? "." : dir);
    const fs::path path = fs::path(dir.empty() ? "." : dir) / "run.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << echo.dump(2) << "\n";
}

void need(bool present, const std::string& what) {
    if (!present) throw std::runtime_error("missing required option " + what);
}

void ensure_parent(const std::string& file) {
    const fs::path dir = fs::path(file).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
}

int category_id(const LabeledDataset& ds, const std::string& name) {
    for (int c = 0; c < ds.num_categories(); ++c)
        if (ds.categories[c].name == name) return c;
    throw std::runtime_error("unknown category: " + name);
}

std::vector<int> parse_categories(const LabeledDataset& ds, const std::string& arg) {
    std::vector<int> out;
    if (arg.empty() || arg == "all") return out;  // empty = all
    std::string token;
    std::istringstream ss(arg);
    while (std::getline(ss, token, ',')) out.push_back(category_id(ds, token));
    return out;
}

// Relative cloud paths per (category, split) in manifest order, for CSVs
// that report per-file scores.
std::vector<std::vector<std::string>> manifest_paths(const std::string& manifest, const char* split) {
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest);
    json doc;
    in >> doc;
    std::vector<std::vector<std::string>> out;
    for (const auto& jc : doc.at("categories")) {
        std::vector<std::string> files;
        if (jc.contains(split))
            for (const auto& f : jc.at(split)) files.push_back(f.get<std::string>());
        out.push_back(std::move(files));
    }
    return out;
}

struct GenArgs {
    std::string out, config;
    uint64_t seed = 7;
    int categories = 6, train = 20, test = 30, points = 512;
    double jitter = 0.01, scale_lo = 0.9, scale_hi = 1.1;
    bool no_rotate = false, skip_self_test = false;
};

int cmd_gen(GenArgs& a, std::vector<KV>& kvs) {
    apply_config(a.config, "gen", kvs);
    need(!a.out.empty(), "--out");
    SynthConfig cfg;
    cfg.specs = default_specs(a.categories, a.jitter);
    for (auto& s : cfg.specs) {
        s.rotate = !a.no_rotate;
        s.scale_lo = a.scale_lo;
        s.scale_hi = a.scale_hi;
    }
    cfg.n_train = a.train;
    cfg.n_test = a.test;
    cfg.points = a.points;
    cfg.seed = a.seed;
    LabeledDataset ds = generate_dataset(cfg, a.out);
    std::cerr << "generated " << ds.num_categories() << " categories under " << a.out << "\n";
    if (!a.skip_self_test && ds.num_categories() > 1) {
        SelfTestResult st = synth_self_test(ds, cfg.seed);
        std::cerr << "self-test: min inter-category Chamfer " << st.min_inter
                  << ", max intra-category spread " << st.max_intra << ", ratio " << st.ratio << "\n";
        if (st.ratio < 2.0)
            throw std::runtime_error("self-test failed: category separation ratio " +
                                     std::to_string(st.ratio) + " < 2.0");
    }
    write_run_json(a.out, "gen", kvs);
    return 0;
}

struct PretrainArgs {
    std::string manifest, out, log, config;
    int epochs = 60, batch_size = 8, points = 0, threads = 0;
    double lr0 = 1e-3, decay = 0.98, ortho_weight = 1e-3;
    uint64_t seed = 0;
};

int cmd_pretrain(PretrainArgs& a, std::vector<KV>& kvs) {
    apply_config(a.config, "pretrain", kvs);
    need(!a.manifest.empty(), "--manifest");
    need(!a.out.empty(), "--out");
    LabeledDataset ds = load_dataset(a.manifest);
    PretrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.lr0 = a.lr0;
    cfg.decay = a.decay;
    cfg.ortho_weight = a.ortho_weight;
    cfg.points = a.points;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    std::cerr << "pretraining on " << ds.num_categories() << " categories, " << cfg.epochs
              << " epochs\n";
    PretrainResult res = pretrain_teacher(ds, cfg);
    const auto& first = res.log.front();
    const auto& last = res.log.back();
    std::cerr << "epoch " << first.epoch << ": loss " << first.loss << " -> epoch " << last.epoch
              << ": loss " << last.loss << ", accuracy " << last.accuracy << "\n";
    if (last.loss > first.loss)
        std::cerr << "warning: final-epoch loss exceeds first-epoch loss; training diverged?\n";

    json meta{{"pretrain",
               {{"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"lr0", cfg.lr0},
                {"decay", cfg.decay},
                {"ortho_weight", cfg.ortho_weight},
                {"points", cfg.points},
                {"seed", cfg.seed}}}};
    ensure_parent(a.out);
    save_checkpoint(a.out, res.params, "teacher", meta);
    const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
    ensure_parent(log_path);
    write_epoch_csv(log_path, res.log, true);
    write_run_json(fs::path(a.out).parent_path().string(), "pretrain", kvs);
    return 0;
}

struct DistillArgs {
    std::string teacher, manifest, category, out, log, config;
    int n_samples = 5, epochs = 20, student_mid = -1, points = 0, threads = 0;
    double lr0 = 1e-3, decay = 0.98, eps = 1e-8;
    uint64_t seed = 0;
};

int cmd_distill(DistillArgs& a, std::vector<KV>& kvs) {
    apply_config(a.config, "distill", kvs);
    need(!a.teacher.empty(), "--teacher");
    need(!a.manifest.empty(), "--manifest");
    need(!a.category.empty(), "--category");
    need(!a.out.empty(), "--out");
    Checkpoint teacher = load_checkpoint(a.teacher);
    if (teacher.kind != "teacher") throw std::runtime_error(a.teacher + ": not a teacher checkpoint");
    LabeledDataset ds = load_dataset(a.manifest);
    const int cat = category_id(ds, a.category);
    const auto& train = ds.categories[cat].train;
    if (static_cast<int>(train.size()) < a.n_samples)
        throw std::runtime_error("category " + a.category + " has only " +
                                 std::to_string(train.size()) + " training clouds");

    Rng pick(derive_seed(a.seed, salt("pick")));
    std::vector<int> indices = pick.choose(static_cast<int>(train.size()), a.n_samples);
    std::vector<PointCloud> samples;
    for (size_t i = 0; i < indices.size(); ++i) {
        const auto& src = train[indices[i]];
        samples.push_back(a.points > 0
                              ? sample_points(src, a.points, derive_seed(a.seed, salt("trainpts"), i))
                              : src);
    }

    DistillConfig cfg;
    cfg.normal_category = cat;
    cfg.n_samples = a.n_samples;
    cfg.epochs = a.epochs;
    cfg.lr0 = a.lr0;
    cfg.decay = a.decay;
    cfg.eps = a.eps;
    cfg.seed = a.seed;
    cfg.student_mid = a.student_mid;
    cfg.threads = a.threads;
    std::cerr << "distilling student for " << a.category << " from " << a.n_samples << " samples\n";
    StudentResult res = train_student(teacher.params, samples, cfg);
    std::cerr << "final mean loss " << res.log.back().loss << "\n";

    json meta{{"teacher_fnv1a64", res.teacher_checksum},
              {"sample_indices", indices},
              {"distill",
               {{"category", a.category},
                {"n_samples", cfg.n_samples},
                {"epochs", cfg.epochs},
                {"lr0", cfg.lr0},
                {"decay", cfg.decay},
                {"eps", cfg.eps},
                {"seed", cfg.seed},
                {"student_mid", cfg.student_mid}}}};
    ensure_parent(a.out);
    save_checkpoint(a.out, res.params, "student", meta);
    const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
    ensure_parent(log_path);
    write_epoch_csv(log_path, res.log, false);
    write_run_json(fs::path(a.out).parent_path().string(), "distill", kvs);
    return 0;
}

struct ScoreArgs {
    std::string teacher, student, input, manifest, out, scale = "final", metric = "cos", config;
    std::string split = "test", normal_category;
    int points = 0, threads = 0;
    double tau = std::numeric_limits<double>::quiet_NaN();
    uint64_t seed = 0;
    bool youden = false;
};

int cmd_score(ScoreArgs& a, std::vector<KV>& kvs) {
    apply_config(a.config, "score", kvs);
    need(!a.teacher.empty(), "--teacher");
    need(!a.student.empty(), "--student");
    if (a.input.empty() == a.manifest.empty())
        throw std::runtime_error("score: pass exactly one of --input or --manifest");
    Checkpoint teacher = load_checkpoint(a.teacher);
    Checkpoint student = load_checkpoint(a.student);
    const ScaleMode scale = scale_mode_from_string(a.scale);
    const Metric metric = metric_from_string(a.metric);

    if (!a.input.empty()) {
        PointCloud cloud = load_cloud(a.input);
        if (a.points > 0) cloud = sample_points(cloud, a.points, derive_seed(a.seed, salt("pts")));
        AnomalyScore s =
            anomaly_score(teacher.params, student.params, cloud, scale, metric, 1e-8, a.threads);
        char buf[64];
        std::snprintf(buf, sizeof buf, "score=%.9g", s.value);
        std::cout << buf;
        if (!std::isnan(a.tau)) std::cout << " label=" << classify(s, a.tau);
        std::cout << "\n";
        return 0;
    }

    need(!a.out.empty(), "--out");
    LabeledDataset ds = load_dataset(a.manifest);
    auto paths = manifest_paths(a.manifest, a.split == "train" ? "train" : "test");
    if (a.split != "train" && a.split != "test")
        throw std::runtime_error("score: --split must be train or test");

    ensure_parent(a.out);
    std::ofstream csv(a.out);
    if (!csv) throw std::runtime_error("cannot write " + a.out);
    csv << "path,category,score\n";
    std::vector<double> values;
    std::vector<int> labels;
    const int normal_cat = a.normal_category.empty() ? -1 : category_id(ds, a.normal_category);
    char buf[512];
    size_t idx = 0;
    for (int c = 0; c < ds.num_categories(); ++c) {
        const auto& clouds = a.split == "train" ? ds.categories[c].train : ds.categories[c].test;
        for (size_t i = 0; i < clouds.size(); ++i, ++idx) {
            PointCloud cloud = clouds[i];
            if (a.points > 0)
                cloud = sample_points(cloud, a.points, derive_seed(a.seed, salt("pts"), idx));
            AnomalyScore s =
                anomaly_score(teacher.params, student.params, cloud, scale, metric, 1e-8, a.threads);
            std::snprintf(buf, sizeof buf, "%s,%s,%.9g\n", paths[c][i].c_str(),
                          ds.categories[c].name.c_str(), s.value);
            csv << buf;
            values.push_back(s.value);
            if (normal_cat >= 0) labels.push_back(c == normal_cat ? 0 : 1);
        }
    }
    if (a.youden) {
        if (normal_cat < 0) throw std::runtime_error("score: --youden needs --normal-category");
        char tbuf[64];
        std::snprintf(tbuf, sizeof tbuf, "youden_tau=%.9g", youden_tau(values, labels));
        std::cout << tbuf << "\n";
    }
    write_run_json(fs::path(a.out).parent_path().string(), "score", kvs);
    return 0;
}

struct EvalArgs {
    std::string manifest, teacher, out, categories = "all", scale = "final", metric = "cos", config;
    int n_samples = 5, n_runs = 10, points = 0, epochs = 20, student_mid = -1, threads = 0;
    double lr0 = 1e-3, decay = 0.98, eps = 1e-8;
    uint64_t seed = 0;
    bool no_roc = false;
};

EvalProtocol protocol_from(const EvalArgs& a, const LabeledDataset& ds) {
    EvalProtocol proto;
    proto.categories = parse_categories(ds, a.categories);
    proto.n_samples = a.n_samples;
    proto.n_runs = a.n_runs;
    proto.base_seed = a.seed;
    proto.scale_mode = scale_mode_from_string(a.scale);
    proto.metric = metric_from_string(a.metric);
    proto.points_per_cloud = a.points;
    proto.distill.epochs = a.epochs;
    proto.distill.lr0 = a.lr0;
    proto.distill.decay = a.decay;
    proto.distill.eps = a.eps;
    proto.distill.student_mid = a.student_mid;
    proto.threads = a.threads;
    proto.keep_roc = !a.no_roc;
    return proto;
}

int cmd_eval(EvalArgs& a, std::vector<KV>& kvs) {
    apply_config(a.config, "eval", kvs);
    need(!a.manifest.empty(), "--manifest");
    need(!a.teacher.empty(), "--teacher");
    need(!a.out.empty(), "--out");
    Checkpoint teacher = load_checkpoint(a.teacher);
    if (teacher.kind != "teacher") throw std::runtime_error(a.teacher + ": not a teacher checkpoint");
    LabeledDataset ds = load_dataset(a.manifest);
    EvalProtocol proto = protocol_from(a, ds);
    std::cerr << "evaluating " << (proto.categories.empty() ? ds.num_categories()
                                                            : static_cast<int>(proto.categories.size()))
              << " categories x " << proto.n_runs << " runs\n";
    EvalReport report = run_experiment(ds, teacher.params, proto);
    write_report(report, proto, a.out);
    for (const auto& cr : report.per_category)
        std::cerr << cr.name << ": mean AUC " << cr.mean_auc << " +- " << cr.std_auc << "\n";
    std::cerr << "overall average AUC " << report.overall_mean << "\n";
    write_run_json(a.out, "eval", kvs);
    return 0;
}

struct AblateArgs {
    std::string manifest, teacher, out, axes = "scale,metric,points,width", config;
    int n_samples = 5, n_runs = 3, epochs = 20, threads = 0;
    std::string points_sweep = "512,1024,2048", width_sweep = "0,32,64,256,512";
    double lr0 = 1e-3, decay = 0.98, eps = 1e-8;
    uint64_t seed = 0;
};

int cmd_ablate(AblateArgs& a, std::vector<KV>& kvs) {
    apply_config(a.config, "ablate", kvs);
    need(!a.manifest.empty(), "--manifest");
    need(!a.teacher.empty(), "--teacher");
    need(!a.out.empty(), "--out");
    Checkpoint teacher = load_checkpoint(a.teacher);
    LabeledDataset ds = load_dataset(a.manifest);
    fs::create_directories(a.out);

    auto has_axis = [&](const std::string& name) {
        return ("," + a.axes + ",").find("," + name + ",") != std::string::npos;
    };
    auto parse_ints = [](const std::string& s) {
        std::vector<int> out;
        std::string tok;
        std::istringstream ss(s);
        while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
        return out;
    };

    EvalArgs base;
    base.n_samples = a.n_samples;
    base.n_runs = a.n_runs;
    base.epochs = a.epochs;
    base.lr0 = a.lr0;
    base.decay = a.decay;
    base.eps = a.eps;
    base.seed = a.seed;
    base.threads = a.threads;
    base.no_roc = true;

    char buf[256];
    // scale and metric fall out of one experiment: every run records the
    // AUC of all four scale x metric combinations.
    if (has_axis("scale") || has_axis("metric")) {
        EvalProtocol proto = protocol_from(base, ds);
        EvalReport rep = run_experiment(ds, teacher.params, proto);
        for (const char* axis : {"scale", "metric"}) {
            if (!has_axis(axis)) continue;
            std::ofstream csv(fs::path(a.out) / (std::string("ablate_") + axis + ".csv"));
            csv << axis << ",category,mean_auc\n";
            const bool is_scale = std::string(axis) == "scale";
            for (int v = 0; v < 2; ++v) {
                const char* name = is_scale ? (v == 0 ? "final" : "multi") : (v == 0 ? "cos" : "l2");
                for (const auto& cr : rep.per_category) {
                    double mean = 0;
                    for (const auto& run : cr.runs)
                        mean += is_scale ? run.aux_auc[v][0] : run.aux_auc[0][v];
                    mean /= static_cast<double>(cr.runs.size());
                    std::snprintf(buf, sizeof buf, "%s,%s,%.9g\n", name, cr.name.c_str(), mean);
                    csv << buf;
                }
            }
            std::cerr << "wrote ablate_" << axis << ".csv\n";
        }
    }
    if (has_axis("points")) {
        std::ofstream csv(fs::path(a.out) / "ablate_points.csv");
        csv << "points,category,mean_auc,std_auc\n";
        for (int pts : parse_ints(a.points_sweep)) {
            EvalArgs cur = base;
            cur.points = pts;
            EvalReport rep = run_experiment(ds, teacher.params, protocol_from(cur, ds));
            for (const auto& cr : rep.per_category) {
                std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g\n", pts, cr.name.c_str(), cr.mean_auc,
                              cr.std_auc);
                csv << buf;
            }
            std::cerr << "points=" << pts << ": overall " << rep.overall_mean << "\n";
        }
    }
    if (has_axis("width")) {
        std::ofstream csv(fs::path(a.out) / "ablate_width.csv");
        csv << "student_mid,category,mean_auc,std_auc\n";
        for (int mid : parse_ints(a.width_sweep)) {
            EvalArgs cur = base;
            cur.student_mid = mid;
            EvalReport rep = run_experiment(ds, teacher.params, protocol_from(cur, ds));
            for (const auto& cr : rep.per_category) {
                std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g\n", mid, cr.name.c_str(), cr.mean_auc,
                              cr.std_auc);
                csv << buf;
            }
            std::cerr << "student_mid=" << mid << ": overall " << rep.overall_mean << "\n";
        }
    }
    write_run_json(a.out, "ablate", kvs);
    return 0;
}

}  // namespace

int dispatch(int argc, char** argv) {
    CLI::App app{"Teacher-student point-cloud anomaly detection"};
    app.require_subcommand(1);
    int rc = 0;
    auto guard = [&rc](auto fn) {
        try {
            rc = fn();
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            rc = 1;
        }
    };

    GenArgs g;
    std::vector<KV> gkv;
    auto* gen = app.add_subcommand("gen", "Generate the synthetic labeled benchmark");
    reg(gkv, gen->add_option("--out", g.out, "output dataset directory"), "gen.out", g.out);
    reg(gkv, gen->add_option("--seed", g.seed, "generation seed"), "gen.seed", g.seed);
    reg(gkv, gen->add_option("--categories", g.categories, "number of categories (1..6)"),
        "gen.categories", g.categories);
    reg(gkv, gen->add_option("--train", g.train, "training clouds per category"), "gen.train", g.train);
    reg(gkv, gen->add_option("--test", g.test, "test clouds per category"), "gen.test", g.test);
    reg(gkv, gen->add_option("--points", g.points, "points per cloud"), "gen.points", g.points);
    reg(gkv, gen->add_option("--jitter", g.jitter, "per-point Gaussian noise sigma"), "gen.jitter",
        g.jitter);
    reg(gkv, gen->add_option("--scale-lo", g.scale_lo, "size factor lower bound"),
        "gen.scale_lo", g.scale_lo);
    reg(gkv, gen->add_option("--scale-hi", g.scale_hi, "size factor upper bound"),
        "gen.scale_hi", g.scale_hi);
    reg(gkv, gen->add_flag("--no-rotate", g.no_rotate, "disable random vertical-axis rotation"),
        "gen.no_rotate", g.no_rotate);
    reg(gkv, gen->add_flag("--skip-self-test", g.skip_self_test, "skip the separation self-test"),
        "gen.skip_self_test", g.skip_self_test);
    gen->add_option("--config", g.config, "JSON config file (flat dotted keys)");
    gen->callback([&] { guard([&] { return cmd_gen(g, gkv); }); });

    PretrainArgs p;
    std::vector<KV> pkv;
    auto* pre = app.add_subcommand("pretrain", "Pretrain the teacher on part segmentation");
    reg(pkv, pre->add_option("--manifest", p.manifest, "dataset manifest"), "pretrain.manifest",
        p.manifest);
    reg(pkv, pre->add_option("--out", p.out, "output teacher checkpoint"), "pretrain.out", p.out);
    reg(pkv, pre->add_option("--log", p.log, "epoch CSV log path (default <out>.log.csv)"),
        "pretrain.log", p.log);
    reg(pkv, pre->add_option("--epochs", p.epochs, "training epochs (full-scale recipe: 251)"),
        "pretrain.epochs", p.epochs);
    reg(pkv, pre->add_option("--batch-size", p.batch_size, "clouds per batch"), "pretrain.batch_size",
        p.batch_size);
    reg(pkv, pre->add_option("--lr0", p.lr0, "initial learning rate"), "pretrain.lr0", p.lr0);
    reg(pkv, pre->add_option("--decay", p.decay, "per-epoch learning-rate factor"), "pretrain.decay",
        p.decay);
    reg(pkv, pre->add_option("--ortho-weight", p.ortho_weight, "feature-transform orthogonality weight"),
        "pretrain.ortho_weight", p.ortho_weight);
    reg(pkv, pre->add_option("--points", p.points, "resample clouds per epoch (0 = as stored)"),
        "pretrain.points", p.points);
    reg(pkv, pre->add_option("--seed", p.seed, "training seed"), "pretrain.seed", p.seed);
    reg(pkv, pre->add_option("--threads", p.threads, "worker threads (0 = PCAD_THREADS or hardware)"),
        "pretrain.threads", p.threads);
    pre->add_option("--config", p.config, "JSON config file (flat dotted keys)");
    pre->callback([&] { guard([&] { return cmd_pretrain(p, pkv); }); });

    DistillArgs d;
    std::vector<KV> dkv;
    auto* dis = app.add_subcommand("distill", "Distill a student for one normal category");
    reg(dkv, dis->add_option("--teacher", d.teacher, "teacher checkpoint"), "distill.teacher",
        d.teacher);
    reg(dkv, dis->add_option("--manifest", d.manifest, "dataset manifest"), "distill.manifest",
        d.manifest);
    reg(dkv, dis->add_option("--category", d.category, "normal category name"), "distill.category",
        d.category);
    reg(dkv, dis->add_option("--n-samples", d.n_samples, "training samples (intended range 1..5)"),
        "distill.n_samples", d.n_samples);
    reg(dkv, dis->add_option("--epochs", d.epochs, "distillation epochs"), "distill.epochs", d.epochs);
    reg(dkv, dis->add_option("--lr0", d.lr0, "initial learning rate"), "distill.lr0", d.lr0);
    reg(dkv, dis->add_option("--decay", d.decay, "per-epoch learning-rate factor"), "distill.decay",
        d.decay);
    reg(dkv, dis->add_option("--eps", d.eps, "cosine stability constant"), "distill.eps", d.eps);
    reg(dkv, dis->add_option("--student-mid", d.student_mid,
                             "student mid width (-1 teacher, 0 drop, >0 override)"),
        "distill.student_mid", d.student_mid);
    reg(dkv, dis->add_option("--points", d.points, "resample training clouds (0 = as stored)"),
        "distill.points", d.points);
    reg(dkv, dis->add_option("--seed", d.seed, "sample-choice and init seed"), "distill.seed", d.seed);
    reg(dkv, dis->add_option("--threads", d.threads, "worker threads"), "distill.threads", d.threads);
    reg(dkv, dis->add_option("--out", d.out, "output student checkpoint"), "distill.out", d.out);
    reg(dkv, dis->add_option("--log", d.log, "epoch CSV log path (default <out>.log.csv)"),
        "distill.log", d.log);
    dis->add_option("--config", d.config, "JSON config file (flat dotted keys)");
    dis->callback([&] { guard([&] { return cmd_distill(d, dkv); }); });

    ScoreArgs s;
    std::vector<KV> skv;
    auto* sc = app.add_subcommand("score", "Score clouds with a teacher-student pair");
    reg(skv, sc->add_option("--teacher", s.teacher, "teacher checkpoint"), "score.teacher", s.teacher);
    reg(skv, sc->add_option("--student", s.student, "student checkpoint"), "score.student", s.student);
    reg(skv, sc->add_option("--input", s.input, "single cloud file (prints score=...)"), "score.input",
        s.input);
    reg(skv, sc->add_option("--manifest", s.manifest, "dataset manifest (batch mode)"),
        "score.manifest", s.manifest);
    reg(skv, sc->add_option("--split", s.split, "batch split: train|test"), "score.split", s.split);
    reg(skv, sc->add_option("--out", s.out, "batch CSV output path"), "score.out", s.out);
    reg(skv, sc->add_option("--scale", s.scale, "final|multi"), "score.scale", s.scale);
    reg(skv, sc->add_option("--metric", s.metric, "cos|l2"), "score.metric", s.metric);
    reg(skv, sc->add_option("--points", s.points, "resample clouds (0 = as stored)"), "score.points",
        s.points);
    reg(skv, sc->add_option("--seed", s.seed, "resampling seed"), "score.seed", s.seed);
    reg(skv, sc->add_option("--tau", s.tau, "threshold; prints label=0|1 with --input"), "score.tau",
        s.tau);
    reg(skv, sc->add_option("--normal-category", s.normal_category, "normal category for --youden"),
        "score.normal_category", s.normal_category);
    reg(skv, sc->add_flag("--youden", s.youden, "print the Youden-J threshold over batch scores"),
        "score.youden", s.youden);
    reg(skv, sc->add_option("--threads", s.threads, "worker threads"), "score.threads", s.threads);
    sc->add_option("--config", s.config, "JSON config file (flat dotted keys)");
    sc->callback([&] { guard([&] { return cmd_score(s, skv); }); });

    EvalArgs e;
    std::vector<KV> ekv;
    auto* ev = app.add_subcommand("eval", "Category-rotation AUC experiment");
    reg(ekv, ev->add_option("--manifest", e.manifest, "dataset manifest"), "eval.manifest", e.manifest);
    reg(ekv, ev->add_option("--teacher", e.teacher, "teacher checkpoint"), "eval.teacher", e.teacher);
    reg(ekv, ev->add_option("--out", e.out, "report output directory"), "eval.out", e.out);
    reg(ekv, ev->add_option("--categories", e.categories, "all or comma-separated names"),
        "eval.categories", e.categories);
    reg(ekv, ev->add_option("--n-samples", e.n_samples, "training samples per student"),
        "eval.n_samples", e.n_samples);
    reg(ekv, ev->add_option("--n-runs", e.n_runs, "repeated runs per category"), "eval.n_runs",
        e.n_runs);
    reg(ekv, ev->add_option("--seed", e.seed, "base seed"), "eval.seed", e.seed);
    reg(ekv, ev->add_option("--scale", e.scale, "final|multi"), "eval.scale", e.scale);
    reg(ekv, ev->add_option("--metric", e.metric, "cos|l2"), "eval.metric", e.metric);
    reg(ekv, ev->add_option("--points", e.points, "resample clouds (0 = as stored)"), "eval.points",
        e.points);
    reg(ekv, ev->add_option("--epochs", e.epochs, "distillation epochs"), "eval.epochs", e.epochs);
    reg(ekv, ev->add_option("--lr0", e.lr0, "distillation learning rate"), "eval.lr0", e.lr0);
    reg(ekv, ev->add_option("--decay", e.decay, "distillation lr decay"), "eval.decay", e.decay);
    reg(ekv, ev->add_option("--eps", e.eps, "cosine stability constant"), "eval.eps", e.eps);
    reg(ekv, ev->add_option("--student-mid", e.student_mid, "student mid width"), "eval.student_mid",
        e.student_mid);
    reg(ekv, ev->add_flag("--no-roc", e.no_roc, "skip per-run ROC CSVs"), "eval.no_roc", e.no_roc);
    reg(ekv, ev->add_option("--threads", e.threads, "worker threads"), "eval.threads", e.threads);
    ev->add_option("--config", e.config, "JSON config file (flat dotted keys)");
    ev->callback([&] { guard([&] { return cmd_eval(e, ekv); }); });

    AblateArgs b;
    std::vector<KV> bkv;
    auto* ab = app.add_subcommand("ablate", "Scale/metric/points/width ablation sweeps");
    reg(bkv, ab->add_option("--manifest", b.manifest, "dataset manifest"), "ablate.manifest",
        b.manifest);
    reg(bkv, ab->add_option("--teacher", b.teacher, "teacher checkpoint"), "ablate.teacher", b.teacher);
    reg(bkv, ab->add_option("--out", b.out, "output directory"), "ablate.out", b.out);
    reg(bkv, ab->add_option("--axes", b.axes, "comma subset of scale,metric,points,width"),
        "ablate.axes", b.axes);
    reg(bkv, ab->add_option("--n-samples", b.n_samples, "training samples per student"),
        "ablate.n_samples", b.n_samples);
    reg(bkv, ab->add_option("--n-runs", b.n_runs, "runs per category"), "ablate.n_runs", b.n_runs);
    reg(bkv, ab->add_option("--epochs", b.epochs, "distillation epochs"), "ablate.epochs", b.epochs);
    reg(bkv, ab->add_option("--points-sweep", b.points_sweep, "points list"), "ablate.points_sweep",
        b.points_sweep);
    reg(bkv, ab->add_option("--width-sweep", b.width_sweep, "student mid widths (0 = dropped)"),
        "ablate.width_sweep", b.width_sweep);
    reg(bkv, ab->add_option("--lr0", b.lr0, "distillation learning rate"), "ablate.lr0", b.lr0);
    reg(bkv, ab->add_option("--decay", b.decay, "distillation lr decay"), "ablate.decay", b.decay);
    reg(bkv, ab->add_option("--eps", b.eps, "cosine stability constant"), "ablate.eps", b.eps);
    reg(bkv, ab->add_option("--seed", b.seed, "base seed"), "ablate.seed", b.seed);
    reg(bkv, ab->add_option("--threads", b.threads, "worker threads"), "ablate.threads", b.threads);
    ab->add_option("--config", b.config, "JSON config file (flat dotted keys)");
    ab->callback([&] { guard([&] { return cmd_ablate(b, bkv); }); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }
    return rc;
}

}  // namespace pcad
