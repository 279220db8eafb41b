#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"

namespace fs = std::filesystem;
using entpick::cli::Options;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("entpick_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // Exit status of the tool; stderr goes to err.txt.
    int run(const std::string& args, const std::string& env = "ENTPICK_LOG=off") const {
        const std::string cmd = env + " " + ENTPICK_CLI_PATH + " " + args + " >" + path("out.txt") + " 2>" + path("err.txt");
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string slurp(const std::string& p) const {
        std::ifstream in(p, std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    }

    void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

    // Model config small enough to train in well under a second.
    std::string tiny_model() const {
        write("tiny_model.json", R"({"K": 2, "conv_channels": 0, "hidden_sizes": [6], "epochs": 3, "batch_size": 8})");
        return path("tiny_model.json");
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("collect --n 1 --out " + path("d.jsonl")), 2);
    EXPECT_EQ(run("collect --n abc"), 2);
    EXPECT_EQ(run("train --dataset " + path("missing.jsonl")), 2);
    EXPECT_EQ(run("train"), 2);
    EXPECT_EQ(run("experiment TABLE9"), 2);
    EXPECT_EQ(run("replay " + path("nope.manifest.json")), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
    write("broken.json", "{ not json");
    EXPECT_EQ(run("collect --n 4 --config " + path("broken.json") + " --out " + path("d.jsonl")), 1);
    write("bad.jsonl", "{\"patch\": [[1]], \"z_cm\": 1, \"mass_g\": 1, \"split\": \"nope\"}\n");
    EXPECT_EQ(run("train --dataset " + path("bad.jsonl") + " --out " + path("m.json")), 1);
}

TEST_F(CliTest, LogLevelFromEnvironment) {
    EXPECT_EQ(run("train --dataset " + path("missing.jsonl"), "ENTPICK_LOG=off"), 2);
    EXPECT_TRUE(slurp(path("err.txt")).empty());
    EXPECT_EQ(run("train --dataset " + path("missing.jsonl"), "ENTPICK_LOG=info"), 2);
    EXPECT_NE(slurp(path("err.txt")).find("does not exist"), std::string::npos);
}

TEST_F(CliTest, CollectWritesDatasetAndManifest) {
    ASSERT_EQ(run("collect --n 12 --seed 3 --depths 2,3 --out " + path("d.jsonl")), 0);
    std::ifstream in(path("d.jsonl"));
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        const double z = j.at("z_cm");
        EXPECT_TRUE(z == 2.0 || z == 3.0);
        ++rows;
    }
    EXPECT_EQ(rows, 12);
    const auto m = nlohmann::json::parse(slurp(path("d.jsonl.manifest.json")));
    EXPECT_EQ(m.at("command"), "collect");
    EXPECT_EQ(m.at("options").at("seed"), 3);
    ASSERT_EQ(m.at("artifacts").size(), 1u);
    EXPECT_EQ(m.at("artifacts")[0].at("sha256"), entpick::cli::sha256_file(path("d.jsonl")));
}

TEST_F(CliTest, ReplayReproducesBytes) {
    ASSERT_EQ(run("collect --n 10 --seed 4 --out " + path("d.jsonl")), 0);
    ASSERT_EQ(run("train --dataset " + path("d.jsonl") + " --config " + tiny_model() + " --out " + path("m.json")), 0);
    ASSERT_EQ(run("run --model " + path("m.json") + " --target 15 --episodes 2 --out " + path("r.json")), 0);
    for (const char* a : {"d.jsonl", "m.json", "r.json"}) {
        const std::string artifact = path(a);
        const std::string before = slurp(artifact);
        fs::remove(artifact);
        EXPECT_EQ(run("replay " + artifact + ".manifest.json"), 0) << a;
        EXPECT_EQ(slurp(artifact), before) << a;
    }
    EXPECT_EQ(slurp(path("r.json.events.jsonl")).empty(), false);
    EXPECT_EQ(run("replay " + path("d.jsonl.manifest.json") + " --out " + path("copy.jsonl")), 0);
    EXPECT_EQ(slurp(path("copy.jsonl")), slurp(path("d.jsonl")));
}

TEST_F(CliTest, ReplayNoticesChangedInput) {
    ASSERT_EQ(run("collect --n 6 --out " + path("d.jsonl")), 0);
    ASSERT_EQ(run("train --dataset " + path("d.jsonl") + " --config " + tiny_model() + " --out " + path("m.json")), 0);
    ASSERT_EQ(run("collect --n 6 --seed 99 --out " + path("d.jsonl")), 0);
    EXPECT_EQ(run("replay " + path("m.json.manifest.json")), 1);
}

TEST_F(CliTest, InspectReportsCandidates) {
    ASSERT_EQ(run("collect --n 8 --out " + path("d.jsonl")), 0);
    ASSERT_EQ(run("train --dataset " + path("d.jsonl") + " --config " + tiny_model() + " --out " + path("m.json")), 0);
    EXPECT_EQ(run("inspect --model " + path("m.json") + " --out " + path("s.json")), 2);
    ASSERT_EQ(run("inspect --model " + path("m.json") + " --target 12 --alpha 0.5 --out " + path("s.json")), 0);
    const auto s = nlohmann::json::parse(slurp(path("s.json")));
    EXPECT_FALSE(s.at("candidates").empty());
    EXPECT_TRUE(s.contains("winner"));
}

TEST(CliOptions, JsonRoundTrip) {
    Options o;
    o.command = "run";
    o.model = "m.json";
    o.seed = 11;
    o.seed_given = true;
    o.depths_cm = {2.0, 2.5};
    o.target_g = 17.5;
    o.target_given = true;
    o.workers = 2;
    o.out = "r.json";
    EXPECT_EQ(entpick::cli::to_json(entpick::cli::options_from_json(entpick::cli::to_json(o))),
              entpick::cli::to_json(o));
    EXPECT_EQ(entpick::cli::manifest_path_for("x/y.json"), "x/y.json.manifest.json");
}

TEST(CliApi, UnknownCommandIsUsageError) {
    Options o;
    o.command = "nope";
    EXPECT_THROW(entpick::cli::run_command(o), entpick::cli::UsageError);
}
