#include <gtest/gtest.h>

#include <array>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "surrogate/hash.hpp"
#include "surrogate/pipeline.hpp"

#include <httplib.h>

namespace fs = std::filesystem;
using namespace surrogate;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(SURROGATE_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("surrogate_cli_" + std::to_string(::getpid()) + "_" +
               ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string at(const std::string& name) const { return (dir / name).string(); }
    fs::path dir;
};

}  // namespace

TEST_F(Cli, GenerateWritesHeaderPlusRowsAndSidecar) {
    auto r = run("generate --n 100 --seed 1 --out " + at("d.csv"));
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(count_lines(dir / "d.csv"), 101u);
    const auto meta = pipeline::read_json(dir / "d.meta.json");
    EXPECT_EQ(meta["seed"], 1);
    EXPECT_EQ(meta["n_samples"], 100);
    EXPECT_EQ(meta["design_space"]["parameters"].size(), 10u);
}

TEST_F(Cli, GenerateIsSeedDeterministic) {
    ASSERT_EQ(run("generate --n 20 --seed 7 --out " + at("a.csv")).code, 0);
    ASSERT_EQ(run("generate --n 20 --seed 7 --out " + at("b.csv")).code, 0);
    ASSERT_EQ(run("generate --n 20 --seed 8 --out " + at("c.csv")).code, 0);
    EXPECT_EQ(sha256_file(dir / "a.csv"), sha256_file(dir / "b.csv"));
    EXPECT_NE(sha256_file(dir / "a.csv"), sha256_file(dir / "c.csv"));
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("generate --n 10").code, 2);
    EXPECT_EQ(run("generate --n ten --out " + at("x.csv")).code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("train").code, 2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, RuntimeErrorsAreOneMachineReadableLine) {
    auto r = run("evaluate --model " + at("missing.json") + " --test " + at("missing.csv"));
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.output.rfind("error: io-error: ", 0), 0u) << r.output;
    EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1);
}

TEST_F(Cli, EvaluateRejectsMismatchedDimensions) {
    ASSERT_EQ(run("generate --n 120 --seed 2 --out " + at("train.csv")).code, 0);
    ASSERT_EQ(run("train bnn --data " + at("train.csv") + " --out " + at("m.json") + " --epochs 2 --hidden 8").code,
              0);
    {
        std::ofstream csv(dir / "narrow.csv");
        csv << "u_wall,ach,heating_demand,cooling_demand,heating_gas,heating_elec,fans,pv_generation\n";
        csv << "0.5,0.7,80,60,0,26,2.8,27\n0.3,0.9,70,50,10,20,2.5,20\n";
        pipeline::write_json(dir / "narrow.meta.json",
                             {{"design_space",
                               {{"parameters",
                                 {{{"name", "u_wall"}, {"lower", 0.1}, {"upper", 1.0}, {"unit", "W/m2K"}},
                                  {{"name", "ach"}, {"lower", 0.1}, {"upper", 1.5}, {"unit", "1/h"}}}}}}});
    }
    auto r = run("evaluate --model " + at("m.json") + " --test " + at("narrow.csv"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("error: dimension-mismatch"), std::string::npos) << r.output;
}

TEST_F(Cli, TrainEvaluateRouteRoundTrip) {
    ASSERT_EQ(run("generate --n 300 --seed 3 --out " + at("train.csv")).code, 0);
    ASSERT_EQ(run("generate --n 80 --seed 4 --out " + at("test.csv")).code, 0);
    auto t = run("train bnn --data " + at("train.csv") + " --out " + at("bnn.json") + " --epochs 3 --hidden 32 --seed 1");
    ASSERT_EQ(t.code, 0) << t.output;
    t = run("train svgp --data " + at("train.csv") + " --out " + at("svgp.json") + " --steps 30 --inducing 20");
    ASSERT_EQ(t.code, 0) << t.output;

    auto e = run("evaluate --model " + at("svgp.json") + " --test " + at("test.csv") + " --report " + at("rep/s.json"));
    ASSERT_EQ(e.code, 0) << e.output;
    EXPECT_TRUE(fs::exists(dir / "rep" / "s.json"));
    EXPECT_TRUE(fs::exists(dir / "rep" / "s_calibration_pooled.csv"));

    auto er = run("evaluate-routing --model " + at("bnn.json") + " --test " + at("test.csv") +
                  " --percentiles 90,80 --policy-out " + at("policy.json") + " --report " + at("routing.json"));
    ASSERT_EQ(er.code, 0) << er.output;
    const auto reports = pipeline::read_json(dir / "routing.json");
    ASSERT_EQ(reports.size(), 2u);
    EXPECT_LE(reports[0]["routed"].get<int>(), reports[1]["routed"].get<int>());
    EXPECT_TRUE(fs::exists(dir / "policy.json"));

    auto zero = pipeline::read_json(dir / "policy.json");
    for (auto& v : zero["thresholds"]) v = 0.0;
    pipeline::write_json(dir / "zero.json", zero);
    const std::string input =
        R"('{"inputs":{"u_wall":0.5,"u_roof":0.3,"u_win":1.9,"wwr":0.5,"ach":0.8,"gains":15,"hrv":0.45,"shgc":0.5,"pv_frac":0.25,"fuel_mix":0.5}}')";
    auto rt = run("route --model " + at("bnn.json") + " --policy " + at("zero.json") + " --simulate --input " + input);
    ASSERT_EQ(rt.code, 0) << rt.output;
    const auto decision = nlohmann::json::parse(rt.output);
    EXPECT_TRUE(decision["routed"].get<bool>());
    EXPECT_EQ(decision["simulation"]["status"], "done");
    EXPECT_EQ(decision["simulation"]["outputs"].size(), 6u);
}

TEST_F(Cli, CrossvalWritesTable) {
    ASSERT_EQ(run("generate --n 120 --seed 5 --out " + at("train.csv")).code, 0);
    auto r = run("crossval bnn --data " + at("train.csv") +
                 " --hidden 16 --dropout 0.05,0.1 --folds 2 --epochs 2 --mc-samples 5 --out " + at("cv.json"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto table = pipeline::read_json(dir / "cv.json");
    EXPECT_EQ(table["table"].size(), 2u);
}

TEST_F(Cli, BenchmarkManifestIsCompleteAndReproducible) {
    const std::string small = " --n-train 200 --n-test 100 --epochs 3 --svgp-steps 20 --mc-samples 10";
    ASSERT_EQ(run("benchmark --seed 1 --out " + at("a") + small).code, 0);
    ASSERT_EQ(run("benchmark --seed 1 --out " + at("b") + small).code, 0);

    const auto ma = pipeline::RunManifest::from_json(pipeline::read_json(dir / "a" / "manifest.json"));
    const auto mb = pipeline::RunManifest::from_json(pipeline::read_json(dir / "b" / "manifest.json"));
    EXPECT_TRUE(pipeline::verify_manifest(ma, dir / "a").empty());

    std::set<std::string> on_disk, listed;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") {
            on_disk.insert(fs::relative(e.path(), dir / "a").generic_string());
        }
    }
    for (const auto& f : ma.files) listed.insert(f.path);
    EXPECT_EQ(on_disk, listed);

    ASSERT_EQ(ma.files.size(), mb.files.size());
    for (std::size_t i = 0; i < ma.files.size(); ++i) {
        EXPECT_EQ(ma.files[i].path, mb.files[i].path);
        EXPECT_EQ(ma.files[i].sha256, mb.files[i].sha256) << ma.files[i].path;
    }
    EXPECT_EQ(ma.seeds.master, 1u);
    EXPECT_EQ(ma.config["bnn"]["epochs"], 3);
}

TEST_F(Cli, ServeAnswersHealthOnAFreePort) {
    int fds[2];
    ASSERT_EQ(pipe(fds), 0);
    const pid_t pid = fork();
    ASSERT_GE(pid, 0);
    if (pid == 0) {
        dup2(fds[1], STDOUT_FILENO);
        close(fds[0]);
        execl(SURROGATE_CLI, SURROGATE_CLI, "serve", "--addr", "127.0.0.1:0", static_cast<char*>(nullptr));
        _exit(127);
    }
    close(fds[1]);
    FILE* out = fdopen(fds[0], "r");
    std::array<char, 256> line{};
    ASSERT_NE(std::fgets(line.data(), line.size(), out), nullptr);
    const std::string text = line.data();
    const auto colon = text.rfind(':');
    const int port = std::stoi(text.substr(colon + 1));

    httplib::Client client("127.0.0.1", port);
    auto health = client.Get("/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_FALSE(nlohmann::json::parse(health->body)["model_loaded"].get<bool>());
    auto predict = client.Post("/predict", "{}", "application/json");
    ASSERT_TRUE(predict);
    EXPECT_EQ(predict->status, 503);

    kill(pid, SIGTERM);
    int status = 0;
    waitpid(pid, &status, 0);
    fclose(out);
}
