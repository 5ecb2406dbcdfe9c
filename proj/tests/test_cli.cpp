#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "hydronet/dataset.hpp"
#include "hydronet/harness.hpp"

namespace fs = std::filesystem;
using hydronet::read_file;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(HYDRONET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / ("hydronet_cli_" + std::to_string(::getpid()));
        fs::remove_all(root_);
        fs::create_directories(root_);
        ASSERT_EQ(run("gen-data --desk --seed 42 --out " + (root_ / "desk").string()), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static std::string data() { return (root_ / "desk").string(); }
    static fs::path path(const std::string& name) { return root_ / name; }

    static inline fs::path root_;
};

}  // namespace

TEST_F(Cli, GenDataIsReproducible) {
    ASSERT_EQ(run("gen-data --desk --seed 42 --out " + path("desk_again").string()), 0);
    EXPECT_EQ(hydronet::dataset_checksum(data()), hydronet::dataset_checksum(path("desk_again")));
    EXPECT_EQ(read_file(path("desk") / "manifest.json"), read_file(path("desk_again") / "manifest.json"));
    const auto ds = hydronet::load(data());
    EXPECT_EQ(ds.profiles.size() + ds.manifest.rejected.size(), 500u);
    EXPECT_EQ(ds.manifest.grid.n_points, 101u);
}

TEST_F(Cli, TrainTwiceGivesIdenticalMetrics) {
    const std::string args = "train --arch sp --strategy en --lambda 0.7 --seed 1 --width 16 --max-epochs 8 --data " + data();
    ASSERT_EQ(run(args + " --out " + path("a").string()), 0);
    ASSERT_EQ(run(args + " --out " + path("b").string()), 0);
    const auto run_dir = "sp-en-l0.7-w16_seed1";
    for (const char* f : {"metrics.csv", "history.csv", "summary.json"}) {
        EXPECT_EQ(read_file(path("a") / run_dir / f), read_file(path("b") / run_dir / f)) << f;
    }
    EXPECT_TRUE(fs::exists(path("a") / run_dir / "manifest.json"));
    EXPECT_TRUE(fs::exists(path("a") / run_dir / "model.json"));

    ASSERT_EQ(run("evaluate --model " + (path("a") / run_dir / "model.json").string() + " --data " + data() +
                  " --out " + path("eval").string()),
              0);
    EXPECT_EQ(read_file(path("eval") / "metrics.csv"), read_file(path("a") / run_dir / "metrics.csv"));
    const auto curve = read_file(path("eval") / "station_error.csv");
    EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 102);
}

TEST_F(Cli, SizeSweepWritesOneRecordPerRun) {
    ASSERT_EQ(run("sweep-size --cell sp:dd::8 --cell int:fr:0.5:8 --fractions 1.0,0.5 --seeds 1,2 --max-epochs 2 --jobs 3 "
                  "--data " +
                  data() + " --out " + path("size").string()),
              0);
    EXPECT_EQ(hydronet::load_summaries(path("size")).size(), 8u);
    const auto report = read_file(path("size") / "report.csv");
    EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 5);
    ASSERT_EQ(run("report --runs " + path("size").string() + " --out " + path("again.csv").string()), 0);
    EXPECT_EQ(read_file(path("again.csv")), report);
}

TEST_F(Cli, ConfigFileDrivesPlans) {
    const auto cfg = path("plan.json");
    hydronet::write_file(cfg, R"({"dataset": ")" + data() + R"(",
        "cells": [{"arch": "vts", "strategy": "bc", "lambda": 0.8, "width": 8}],
        "seeds": [4], "widths": [4, 8], "train": {"max_epochs": 2}})");
    ASSERT_EQ(run("sweep-width --config " + cfg.string() + " --out " + path("width").string()), 0);
    EXPECT_TRUE(fs::exists(path("width") / "vts-bc-l0.8-w4_width-4_seed4" / "summary.json"));
    EXPECT_TRUE(fs::exists(path("width") / "vts-bc-l0.8-w8_width-8_seed4" / "summary.json"));
}

TEST_F(Cli, UsageErrors) {
    const std::string d = " --data " + data() + " --out " + path("bad").string();
    EXPECT_EQ(run("train --arch cnn" + d), 2);
    EXPECT_EQ(run("train --arch sp --strategy mass" + d), 2);
    EXPECT_EQ(run("train --arch sp --strategy pde" + d), 2);
    EXPECT_EQ(run("train --arch sp --data " + path("nowhere").string() + " --out " + path("bad").string()), 2);
    hydronet::write_file(path("broken.json"), "{\"cells\": [");
    EXPECT_EQ(run("train --arch sp --config " + path("broken.json").string() + d), 2);
    EXPECT_EQ(run("sweep-size --cell sp:dd --fractions 0,0.5" + d), 2);
    EXPECT_EQ(run("report --runs " + path("nothing_here").string()), 2);
    EXPECT_EQ(run("no-such-command"), 2);
    EXPECT_EQ(run(""), 2);
}
