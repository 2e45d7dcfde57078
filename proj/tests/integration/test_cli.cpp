#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Run run(const fs::path& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(REALFACE_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = realface::testing::scratch_dir("cli");
    std::ofstream(dir_ / "run.json") << R"({
        "seed": 5,
        "gallery": {"size": 20, "similarity": 0.9, "planted": 1},
        "optimizer": {"max_evals": 200},
        "attacks": [{"type": "break_in", "attempts": 3},
                    {"type": "impersonation", "victim": "victim00", "init": "from_victim", "attempts": 2}],
        "sweep": {"sizes": [5, 10], "attempts": 2, "pool": 10},
        "variation": {"galleries": [{"label": "near", "similarity": 0.9, "size": 8}], "attempts": 2},
        "scoredist": {"identities": 10}})";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string config() const { return "--config " + (dir_ / "run.json").string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, FitIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(run(dir_, "fit " + config() + " --out " + (dir_ / "a").string()).exit_code, 0);
  ASSERT_EQ(run(dir_, "fit " + config() + " --out " + (dir_ / "b").string()).exit_code, 0);
  const auto a = slurp(dir_ / "a" / "model.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "model.json"));
}

TEST_F(Cli, AttackWritesReportsTracesAndSummaries) {
  const auto r = run(dir_, "attack " + config());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto out = dir_ / "out" / "attack";
  EXPECT_TRUE(fs::exists(out / "00_break_in" / "attempt_002.json"));
  EXPECT_TRUE(fs::exists(out / "00_break_in" / "attempt_002_trace.csv"));
  EXPECT_TRUE(fs::exists(out / "01_impersonation" / "summary.json"));
  const auto summary = json::parse(slurp(out / "summary.json"));
  ASSERT_EQ(summary.at("campaigns").size(), 2u);
  EXPECT_EQ(summary["campaigns"][0].at("attempts"), 3);
  EXPECT_EQ(summary["campaigns"][1].at("type"), "impersonation");
  // The victim was synthesized inside the box, so starting from it succeeds.
  EXPECT_EQ(summary["campaigns"][1].at("successes"), 2);
  const auto attempt = json::parse(slurp(out / "00_break_in" / "attempt_000.json"));
  EXPECT_TRUE(attempt.at("spec").at("enforce_bounds").get<bool>());
}

TEST_F(Cli, NoBoundsFlagReachesTheOptimizer) {
  ASSERT_EQ(run(dir_, "attack --no-bounds " + config()).exit_code, 0);
  const auto attempt = json::parse(slurp(dir_ / "out" / "attack" / "00_break_in" / "attempt_000.json"));
  EXPECT_FALSE(attempt.at("spec").at("enforce_bounds").get<bool>());
}

TEST_F(Cli, BridgeOracleMatchesBuiltin) {
  ASSERT_EQ(run(dir_, "attack " + config() + " --out " + (dir_ / "builtin").string()).exit_code, 0);
  const std::string bridge = std::string(FRS_LOOPBACK_BIN) + " --config " + (dir_ / "run.json").string();
  const auto r = run(dir_, "attack " + config() + " --out " + (dir_ / "bridge").string() + " --oracle 'bridge:" +
                               bridge + "'");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  for (const char* f : {"summary.json", "00_break_in/attempt_001.json", "01_impersonation/attempt_000_trace.csv"}) {
    EXPECT_EQ(slurp(dir_ / "builtin" / "attack" / f), slurp(dir_ / "bridge" / "attack" / f)) << f;
  }
}

TEST_F(Cli, MissingBridgeAbortsAttemptsWithoutCrashing) {
  std::ofstream(dir_ / "dead.json") << R"({"attacks": [{"type": "break_in", "attempts": 2}],
      "oracle": {"kind": "bridge", "command": "exit 0", "timeout_ms": 100, "retries": 0}})";
  const auto r = run(dir_, "attack --config " + (dir_ / "dead.json").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto s = json::parse(slurp(dir_ / "out" / "attack" / "summary.json"))["campaigns"][0];
  EXPECT_EQ(s.at("aborted"), 2);
  EXPECT_TRUE(s.at("success_rate").is_null());
}

TEST_F(Cli, StudiesWriteTheirCsvs) {
  ASSERT_EQ(run(dir_, "sweep " + config()).exit_code, 0);
  ASSERT_EQ(run(dir_, "variation " + config()).exit_code, 0);
  ASSERT_EQ(run(dir_, "scoredist " + config()).exit_code, 0);
  const auto sweep = slurp(dir_ / "out" / "sweep.csv");
  EXPECT_EQ(sweep.rfind("size,attempts,successes,mean_min_score\n5,2,", 0), 0u) << sweep;
  EXPECT_EQ(slurp(dir_ / "out" / "variation.csv").rfind("gallery_label,attempts,successes,unique_victims\nnear,2,", 0),
            0u);
  EXPECT_EQ(slurp(dir_ / "out" / "scoredist.csv").rfind("bin_center,genuine,impostor\n", 0), 0u);
  const auto stats = json::parse(slurp(dir_ / "out" / "scoredist.json"));
  EXPECT_EQ(stats.at("identities"), 10);
  EXPECT_EQ(stats.at("impostor_count"), 90);
}

TEST_F(Cli, StudiesRefuseExternalOracles) {
  const auto r = run(dir_, "sweep " + config() + " --oracle bridge:cat");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("SpecError"), std::string::npos) << r.err;
}

TEST_F(Cli, IncompleteCorpusIsReportedByKind) {
  std::ofstream(dir_ / "faces.csv") << "0.1,0.2\n0.3,0.4\n0.5,0.6\n";
  std::ofstream(dir_ / "corpus.json") << R"({"d": 2, "matrix": "faces.csv",
      "modes": [{"name": "a", "labels": ["x", "y"]}, {"name": "b", "labels": ["p", "q"]}],
      "faces": [{"labels": ["x", "p"]}, {"labels": ["x", "q"]}, {"labels": ["y", "p"]}]})";
  std::ofstream(dir_ / "bad.json") << R"({"corpus": "corpus.json"})";
  const auto r = run(dir_, "fit --config " + (dir_ / "bad.json").string());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("IncompleteCartesianProduct"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(run(dir_, "").exit_code, 0);
  EXPECT_NE(run(dir_, "fit --config /no/such/file.json").exit_code, 0);
  std::ofstream(dir_ / "typo.json") << R"({"gallery": {"szie": 3}})";
  const auto r = run(dir_, "fit --config " + (dir_ / "typo.json").string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("szie"), std::string::npos) << r.err;
}
