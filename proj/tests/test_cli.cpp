#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pcad/checkpoint.hpp"
#include "pcad/geometry.hpp"

using namespace pcad;
namespace fs = std::filesystem;

namespace {

struct RunOut {
    int code = -1;
    std::string out;
};

RunOut run_cli(const std::string& args) {
    RunOut r;
    const std::string cmd = std::string(PCAD_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (fgets(buf, sizeof buf, pipe)) r.out += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string capture_stderr(const std::string& args) {
    const std::string tmp =
        (fs::temp_directory_path() / ("pcad_cli_err_" + std::to_string(::getpid()))).string();
    const std::string cmd = std::string(PCAD_CLI_PATH) + " " + args + " 2>" + tmp + " >/dev/null";
    std::system(cmd.c_str());
    std::ifstream in(tmp);
    std::string body((std::istreambuf_iterator<char>(in)), {});
    fs::remove(tmp);
    return body;
}

std::string first_line(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return line;
}

// Full desk-scale pipeline, executed once for the whole binary.
struct Pipeline {
    fs::path root;
    std::string manifest, teacher, student, cat0;

    Pipeline() {
        root = fs::temp_directory_path() / ("pcad_cli_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
        const std::string data = (root / "data").string();

        RunOut gen = run_cli("gen --out " + data +
                             " --seed 13 --categories 2 --train 6 --test 3 --points 48"
                             " --skip-self-test");
        REQUIRE(gen.code == 0);
        manifest = data + "/manifest.json";
        REQUIRE(fs::exists(manifest));
        cat0 = load_dataset(manifest).categories[0].name;

        teacher = (root / "teacher.ckpt").string();
        RunOut pre = run_cli("pretrain --manifest " + manifest + " --out " + teacher +
                             " --epochs 3 --batch-size 4 --seed 1");
        REQUIRE(pre.code == 0);
        REQUIRE(fs::exists(teacher));

        student = (root / "student.ckpt").string();
        RunOut dis = run_cli("distill --teacher " + teacher + " --manifest " + manifest +
                             " --category " + cat0 + " --n-samples 3 --epochs 3 --seed 2 --out " +
                             student);
        REQUIRE(dis.code == 0);
        REQUIRE(fs::exists(student));
    }
    ~Pipeline() { fs::remove_all(root); }
};

Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

}  // namespace

TEST_CASE("gen writes a dataset, its manifest, and a run echo") {
    Pipeline& p = pipeline();
    CHECK(fs::exists(p.root / "data" / "run.json"));
    LabeledDataset ds = load_dataset(p.manifest);
    CHECK(ds.num_categories() == 2);
    CHECK(ds.categories[0].train.size() == 6);
    CHECK(ds.categories[0].test.size() == 3);
}

TEST_CASE("pretrain and distill leave checkpoints, logs, and run echoes") {
    Pipeline& p = pipeline();
    CHECK(first_line(p.teacher + ".log.csv") == "epoch,loss,accuracy,lr");
    CHECK(first_line(p.student + ".log.csv") == "epoch,loss,lr");
    CHECK(fs::exists(p.root / "run.json"));
    Checkpoint t = load_checkpoint(p.teacher);
    CHECK(t.kind == "teacher");
    CHECK(t.meta.contains("pretrain"));
    Checkpoint s = load_checkpoint(p.student);
    CHECK(s.kind == "student");
    CHECK(s.meta.at("teacher_fnv1a64").get<uint64_t>() != 0);
    CHECK(s.meta.at("sample_indices").size() == 3);
}

TEST_CASE("score prints score= for one cloud and labels it against a threshold") {
    Pipeline& p = pipeline();
    const std::string input = (p.root / "data" / p.cat0 / "test_000.xyz").string();
    RunOut r = run_cli("score --teacher " + p.teacher + " --student " + p.student + " --input " +
                       input);
    CHECK(r.code == 0);
    CHECK(r.out.find("score=") == 0);

    RunOut labeled = run_cli("score --teacher " + p.teacher + " --student " + p.student +
                             " --input " + input + " --tau 10");
    CHECK(labeled.out.find("label=0") != std::string::npos);  // any cosine score is below 10
}

TEST_CASE("batch scoring emits the documented CSV and a Youden threshold on request") {
    Pipeline& p = pipeline();
    const std::string csv = (p.root / "scores.csv").string();
    RunOut r = run_cli("score --teacher " + p.teacher + " --student " + p.student + " --manifest " +
                       p.manifest + " --out " + csv + " --youden --normal-category " + p.cat0);
    CHECK(r.code == 0);
    CHECK(first_line(csv) == "path,category,score");
    CHECK(r.out.find("youden_tau=") == 0);
    // 2 categories x 3 test clouds + header
    std::ifstream in(csv);
    int lines = 0;
    std::string line;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 7);
}

TEST_CASE("eval produces the report tree and reruns bitwise from its own echo") {
    Pipeline& p = pipeline();
    const std::string report = (p.root / "report").string();
    RunOut r = run_cli("eval --manifest " + p.manifest + " --teacher " + p.teacher + " --out " +
                       report + " --n-samples 2 --n-runs 1 --epochs 2 --seed 3");
    REQUIRE(r.code == 0);
    CHECK(first_line(report + "/auc.csv") == "category,run,seed,n_samples,auc");
    CHECK(fs::exists(report + "/summary.md"));
    CHECK(fs::exists(report + "/roc_" + p.cat0 + "_0.csv"));
    REQUIRE(fs::exists(report + "/run.json"));

    const uint64_t auc_before = fnv1a64_file(report + "/auc.csv");
    const uint64_t summary_before = fnv1a64_file(report + "/summary.md");
    RunOut rerun = run_cli("eval --config " + report + "/run.json");
    REQUIRE(rerun.code == 0);
    CHECK(fnv1a64_file(report + "/auc.csv") == auc_before);
    CHECK(fnv1a64_file(report + "/summary.md") == summary_before);
}

TEST_CASE("gen reruns bitwise from its own echo") {
    Pipeline& p = pipeline();
    const std::string data = (p.root / "data").string();
    const uint64_t manifest_before = fnv1a64_file(p.manifest);
    const uint64_t cloud_before = fnv1a64_file(data + "/" + p.cat0 + "/train_000.xyz");
    RunOut rerun = run_cli("gen --config " + data + "/run.json");
    REQUIRE(rerun.code == 0);
    CHECK(fnv1a64_file(p.manifest) == manifest_before);
    CHECK(fnv1a64_file(data + "/" + p.cat0 + "/train_000.xyz") == cloud_before);
}

TEST_CASE("config files below flags in precedence") {
    Pipeline& p = pipeline();
    // The gen echo pins seed 13; an explicit flag must win over it.
    const std::string alt = (p.root / "alt").string();
    RunOut r = run_cli("gen --config " + p.root.string() + "/data/run.json --out " + alt +
                       " --seed 14");
    REQUIRE(r.code == 0);
    std::ifstream in(alt + "/run.json");
    nlohmann::json echo;
    in >> echo;
    CHECK(echo.at("gen.seed").get<uint64_t>() == 14);
    CHECK(echo.at("gen.points").get<int>() == 48);  // inherited from the config
    CHECK(fnv1a64_file(alt + "/manifest.json") == fnv1a64_file(p.manifest));  // same layout
    fs::remove_all(alt);
}

TEST_CASE("missing required options and unknown subcommands fail loudly") {
    Pipeline& p = pipeline();
    RunOut r = run_cli("distill --manifest " + p.manifest + " --category x --out /tmp/x.ckpt");
    CHECK(r.code != 0);
    const std::string err =
        capture_stderr("distill --manifest " + p.manifest + " --category x --out /tmp/nope.ckpt");
    CHECK(err.find("--teacher") != std::string::npos);

    CHECK(run_cli("frobnicate").code != 0);
    CHECK(run_cli("score --teacher " + p.teacher + " --student " + p.student).code != 0);
}

TEST_CASE("a config written for one subcommand is rejected by another") {
    Pipeline& p = pipeline();
    RunOut r = run_cli("pretrain --config " + p.root.string() + "/data/run.json");
    CHECK(r.code != 0);
}
