// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "limuse/accounting.hpp"

namespace limuse {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  fs::path dir_ = fs::temp_directory_path() /
                  ("limuse_cli_" + std::string(::testing::UnitTest::GetInstance()
                                                   ->current_test_info()
                                                   ->name()));
  void SetUp() override { fs::create_directories(dir_); }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) const {
    const fs::path log = dir_ / "out.txt";
    const std::string cmd =
        std::string(LIMUSE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
  }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }
};

TEST_F(Cli, UsageErrors) {
  Outcome r = run("report --bogus");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("Usage"), std::string::npos) << r.out;
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("report").code, 2);
}

TEST_F(Cli, MissingDataIsExitFour) {
  const auto cfg = write("c.cfg", "N = 16\nK = 4\nX = 2\nepochs = 1\n");
  Outcome r = run("train --config " + cfg.string() + " --data " + (dir_ / "nope").string() +
              " --out " + (dir_ / "m.ckpt").string());
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("does not exist"), std::string::npos) << r.out;
  EXPECT_EQ(run("eval --ckpt " + (dir_ / "none.ckpt").string() + " --data " + dir_.string()).code,
            4);
}

TEST_F(Cli, ConfigErrorsAreExitThree) {
  const auto bad = write("bad.cfg", "N = 16\nK = 5\n");
  EXPECT_EQ(run("report --config " + bad.string()).code, 3);
  const auto unknown = write("unknown.cfg", "banana = 3\n");
  Outcome r = run("report --config " + unknown.string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("banana"), std::string::npos) << r.out;
}

TEST_F(Cli, ReportTotalsMatchAccounting) {
  const auto cfg = write("t1.cfg", "# defaults with 16 groups\nK = 16\n");
  Outcome r = run("report --csv --seconds 1 --config " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const AccountingReport want = account(ModelConfig::reference(16), 1.0);
  EXPECT_NE(r.out.find("total,," + std::to_string(want.total_params()) + "," +
                       std::to_string(want.total_macs()) + "," +
                       std::to_string(want.total_bytes())),
            std::string::npos)
      << r.out;
  Outcome table = run("report --config " + cfg.string());
  EXPECT_EQ(table.code, 0);
  EXPECT_NE(table.out.find("compression"), std::string::npos);
}

TEST_F(Cli, EndToEndTinyPipeline) {
  const fs::path data = dir_ / "data";
  ASSERT_EQ(run("synth-data --out " + data.string() +
                " --speakers 10 --hours 0.0025 --clip-seconds 0.25 --seed 3")
                .code,
            0);
  const auto cfg = write("tiny.cfg", "N = 16\nK = 4\nX = 2\nS = 8\ncodec_depth = 1\nepochs = 1\n");
  const fs::path full = dir_ / "full.ckpt", q = dir_ / "q.ckpt";
  Outcome t = run("train --config " + cfg.string() + " --data " + data.string() + " --out " +
              full.string());
  ASSERT_EQ(t.code, 0) << t.out;
  Outcome qr = run("quantize --from " + full.string() + " --config " + cfg.string() + " --data " +
               data.string() + " --out " + q.string());
  ASSERT_EQ(qr.code, 0) << qr.out;
  Outcome e = run("eval --json --quantized --ckpt " + q.string() + " --data " + data.string());
  ASSERT_EQ(e.code, 0) << e.out;
  const auto j = nlohmann::json::parse(e.out);
  EXPECT_TRUE(j["quantized"].get<bool>());
  EXPECT_TRUE(std::isfinite(j["si_sdri_mean"].get<double>()));
  EXPECT_GT(j["samples"].get<int>(), 0);
  // Already quantized, and plain eval of the float model with --quantized.
  EXPECT_EQ(run("quantize --from " + q.string() + " --config " + cfg.string() + " --data " +
                data.string() + " --out " + (dir_ / "x.ckpt").string())
                .code,
            3);
  EXPECT_EQ(run("eval --quantized --ckpt " + full.string() + " --data " + data.string()).code, 3);
  EXPECT_EQ(run("eval --split nope --ckpt " + full.string() + " --data " + data.string()).code,
            2);
}

}  // namespace
}  // namespace limuse
