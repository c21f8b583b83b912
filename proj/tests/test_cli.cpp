#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "koopctl/cli.hpp"
#include "oracles/xml.hpp"

using namespace koopctl;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "koopctl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// Exit status of the installed binary, for codes that must survive a real process boundary.
int run_binary(const std::string& args) {
  const std::string cmd = std::string(KOOPCTL_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string value_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + ": ");
  if (pos == std::string::npos) return {};
  const auto start = pos + key.size() + 2;
  return text.substr(start, text.find('\n', start) - start);
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("koopctl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string rollout(const std::string& name, const std::string& env, const std::string& policy,
                      const std::string& trials, const std::string& seed, const std::string& checkpoint,
                      const std::string& epsilon = "0") {
    const auto r = run({"rollout", "--env", env, "--policy", policy, "--trials", trials, "--seed", seed,
                        "--checkpoint", checkpoint, "--epsilon", epsilon, "--out", path(name)});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }

  fs::path dir_;
};

} // namespace

TEST_F(Cli, RolloutWritesRequestedTrials) {
  const auto r = run({"rollout", "--env", "cartpole", "--policy", "pd", "--trials", "100", "--max-steps", "200",
                      "--seed", "7", "--out", path("t.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value_after(r.out, "trials"), "100");
  const auto set = parse_trajectory_file(read_file(path("t.jsonl")));
  EXPECT_EQ(set.size(), 100u);
  EXPECT_EQ(set.env().name(), "cartpole");
  for (const auto& t : set.trajectories()) {
    EXPECT_LE(t.length(), 201u);
    EXPECT_EQ(t.seed(), 7);
  }
  // The header comment carries the resolved configuration.
  const auto prov = nlohmann::json::parse(set.comment());
  EXPECT_EQ(prov["tool_version"], "koopctl 1.0.0");
  EXPECT_EQ(prov["config"]["max-steps"], 200);
  EXPECT_EQ(prov["config"]["policy"], "pd");
}

TEST_F(Cli, RolloutIsBitIdenticalAcrossRuns) {
  const std::vector<std::string> base{"rollout", "--env", "lander", "--policy", "descent", "--trials", "5",
                                      "--seed", "1,2", "--epsilon", "0.1"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("a.jsonl")});
  b.insert(b.end(), {"--out", path("b.jsonl")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(read_file(path("a.jsonl")), read_file(path("b.jsonl")));
  EXPECT_EQ(parse_trajectory_file(read_file(path("a.jsonl"))).size(), 10u);
}

TEST_F(Cli, RolloutUsageErrors) {
  const auto zero = run({"rollout", "--env", "cartpole", "--policy", "pd", "--trials", "0", "--out", path("x")});
  EXPECT_EQ(zero.code, 2);
  EXPECT_EQ(run({"rollout", "--env", "pong", "--policy", "pd", "--out", path("x")}).code, 2);
  EXPECT_EQ(run({"rollout", "--env", "cartpole", "--policy", "magic", "--out", path("x")}).code, 2);
  EXPECT_EQ(run({"rollout", "--env", "cartpole", "--policy", "hover", "--out", path("x")}).code, 2);
  EXPECT_EQ(run({"rollout", "--env", "cartpole", "--policy", "pd", "--seed", "-1", "--out", path("x")}).code, 2);
  EXPECT_EQ(run({"rollout", "--env", "cartpole", "--policy", "pd", "--trials", "2", "--out",
                 path("missing_dir/x.jsonl")})
                .code,
            3);
  EXPECT_FALSE(fs::exists(path("x")));
}

TEST_F(Cli, FitMeetsGateOnCartPoleAtPaperSettings) {
  const auto file = rollout("t.jsonl", "cartpole", "pd", "100", "0", "0");
  const auto r = run({"fit", "--in", file, "--n-delay", "4", "--svd-rank", "0.95", "--model-out", path("m.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(std::stod(value_after(r.out, "mse_one_step")), 0.01);
  EXPECT_EQ(value_after(r.out, "gate"), "passed");
  EXPECT_FALSE(value_after(r.out, "max_eig_norm").empty());
  EXPECT_FALSE(value_after(r.out, "normalized_ctrb_rank").empty());
  EXPECT_FALSE(value_after(r.out, "r").empty());
  const auto mf = parse_model(read_file(path("m.json")));
  EXPECT_EQ(mf.n_delay, 4u);
  EXPECT_EQ(mf.model.state_dim, 4u);
  const auto j = nlohmann::json::parse(read_file(path("m.json")));
  EXPECT_EQ(j["inputs"][0]["sha256"], sha256_hex(read_file(file)));
  EXPECT_EQ(j["config"]["svd-rank"], "0.95");
}

TEST_F(Cli, FitOptionValidation) {
  const auto file = rollout("t.jsonl", "acrobot", "pump", "10", "0", "0");
  EXPECT_EQ(run({"fit", "--in", file, "--n-delay", "5", "--svd-rank", "0.99"}).code, 0);
  const auto bad = run({"fit", "--in", file, "--svd-rank", "1.5"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("fractional rank must be in (0,1)"), std::string::npos) << bad.err;
  EXPECT_EQ(run({"fit", "--in", file, "--svd-rank", "3"}).code, 0);
  EXPECT_EQ(run({"fit", "--in", file, "--svd-rank", "full"}).code, 0);
  EXPECT_EQ(run({"fit", "--in", file, "--n-delay", "0"}).code, 2);
}

TEST_F(Cli, FitGateFailureWarnsButSucceeds) {
  const auto file = rollout("t.jsonl", "cartpole", "random", "20", "0", "0");
  const auto r = run({"fit", "--in", file, "--mse-gate", "1e-12"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(value_after(r.out, "gate"), "failed");
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST_F(Cli, InputErrorsMapToExitCodes) {
  write_file(path("garbage.jsonl"), "{\"format\":\"nope\"}\n");
  EXPECT_EQ(run({"fit", "--in", path("garbage.jsonl")}).code, 2);
  EXPECT_EQ(run({"fit", "--in", path("absent.jsonl")}).code, 3);
  EXPECT_EQ(run({"fit"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
  const auto v = run({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("koopctl 1.0.0"), std::string::npos);
}

TEST_F(Cli, BinaryExitCodes) {
  EXPECT_EQ(run_binary("--version"), 0);
  EXPECT_EQ(run_binary("rollout --env cartpole --policy pd --trials 0 --out " + path("x")), 2);
  EXPECT_EQ(run_binary("fit --in " + path("absent.jsonl")), 3);
  EXPECT_EQ(run_binary("rollout --env cartpole --policy pd --trials 3 --out " + path("ok.jsonl")), 0);
  EXPECT_EQ(run_binary("fit --in " + path("ok.jsonl") + " --svd-rank 1.5"), 2);
}

TEST_F(Cli, AnalyzeRejectsMixedEnvironments) {
  const auto a = rollout("a.jsonl", "cartpole", "pd", "5", "0", "0");
  const auto b = rollout("b.jsonl", "acrobot", "pump", "5", "0", "1");
  const auto r = run({"analyze", "--in", a, "--in", b, "--report", path("r.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("env header"), std::string::npos) << r.err;
}

TEST_F(Cli, AnalyzeImprovingSeries) {
  std::vector<std::string> args{"analyze", "--report", path("run.csv")};
  const char* eps[] = {"0.9", "0.5", "0"};
  for (int c = 0; c < 3; ++c) {
    args.push_back("--in");
    args.push_back(rollout("c" + std::to_string(c) + ".jsonl", "cartpole", "pd", "30", "0,1",
                           std::to_string(c * 100), eps[c]));
  }
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_file(path("run.csv"));
  const auto summary_at = report.find("# summary\n");
  ASSERT_NE(summary_at, std::string::npos);
  std::istringstream in(report.substr(summary_at));
  std::string line;
  std::getline(in, line); // "# summary"
  std::getline(in, line); // column names
  std::vector<double> means;
  while (std::getline(in, line) && !line.empty()) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    ASSERT_GE(cells.size(), 4u);
    if (!cells[3].empty()) means.push_back(std::stod(cells[3]));
  }
  ASSERT_EQ(means.size(), 3u) << report;
  EXPECT_LT(means[0], means[1]);
  EXPECT_LT(means[1], means[2]);
  for (const char* suffix : {"_reward.svg", "_max_eig_norm.svg", "_ctrb_rank.svg"}) {
    const auto svg = path(std::string("run") + suffix);
    ASSERT_TRUE(fs::exists(svg)) << svg;
    EXPECT_TRUE(oracle::is_well_formed_svg(read_file(svg)));
  }
}

TEST_F(Cli, AnalyzeStaticSeriesRaisesNoFlags) {
  std::vector<std::string> args{"analyze", "--report", path("run.jsonl"), "--no-plots"};
  for (int c = 0; c < 4; ++c) {
    args.push_back("--in");
    args.push_back(rollout("c" + std::to_string(c) + ".jsonl", "cartpole", "pd", "20", "0,1,2",
                           std::to_string(c * 10)));
  }
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("hidden progress: none"), std::string::npos) << r.out;
  EXPECT_EQ(read_file(path("run.jsonl")).find("\"hidden_progress\""), std::string::npos);
  for (const auto& entry : fs::directory_iterator(dir_)) EXPECT_NE(entry.path().extension(), ".svg");
}

TEST_F(Cli, AnalyzeConfigRoundTripAndJobsIndependence) {
  std::vector<std::string> inputs;
  for (int c = 0; c < 3; ++c) {
    inputs.push_back("--in");
    inputs.push_back(rollout("c" + std::to_string(c) + ".jsonl", "cartpole", "pd", "15", "0,1,2,3",
                             std::to_string(c), c == 0 ? "0.3" : "0"));
  }
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a{"analyze"};
    a.insert(a.end(), inputs.begin(), inputs.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  auto first = run(with({"--report", path("one.jsonl"), "--no-plots", "--n-delay", "3", "--svd-rank", "0.9",
                         "--hp-window", "3", "--hp-trend-t", "2.5", "--jobs", "1"}));
  ASSERT_EQ(first.code, 0) << first.err;
  auto parallel = run(with({"--report", path("four.jsonl"), "--no-plots", "--n-delay", "3", "--svd-rank", "0.9",
                            "--hp-window", "3", "--hp-trend-t", "2.5", "--jobs", "4"}));
  ASSERT_EQ(parallel.code, 0) << parallel.err;
  EXPECT_EQ(read_file(path("one.jsonl")), read_file(path("four.jsonl")));
  EXPECT_EQ(first.out, parallel.out);

  // Feeding the report back through --config reproduces the same settings.
  auto replay = run(with({"--config", path("one.jsonl"), "--report", path("replay.jsonl"), "--no-plots"}));
  ASSERT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(read_file(path("replay.jsonl")), read_file(path("one.jsonl")));
  const auto head = nlohmann::json::parse(read_file(path("one.jsonl")).substr(0, read_file(path("one.jsonl")).find('\n')));
  EXPECT_EQ(head["config"]["n-delay"], 3);
  EXPECT_EQ(head["config"]["hp-trend-t"], 2.5);
  EXPECT_EQ(head["inputs"].size(), 3u);

  // csv reports carry the same object on their "# config:" line.
  ASSERT_EQ(run(with({"--report", path("one.csv"), "--n-delay", "3", "--svd-rank", "0.9", "--no-plots"})).code, 0);
  ASSERT_EQ(run(with({"--config", path("one.csv"), "--report", path("replay.csv"), "--no-plots"})).code, 0);
  EXPECT_EQ(read_file(path("replay.csv")), read_file(path("one.csv")));
}

TEST_F(Cli, AnalyzeWithTooFewCheckpoints) {
  const auto a = rollout("a.jsonl", "cartpole", "pd", "10", "0", "0");
  const auto r = run({"analyze", "--in", a, "--report", path("r.csv")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("hidden progress: not evaluated"), std::string::npos);
  EXPECT_NE(r.err.find("plots need at least 2 checkpoints"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("r.csv")));
}
