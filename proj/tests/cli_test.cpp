// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kCli = DHNRM_CLI_PATH;
const std::string kFix = DHNRM_FIXTURE_DIR;

struct CliResult {
  int code;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / ("dhnrm_cli_" + std::string(info->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string toy() const {
    return " --set docword=" + kFix + "/toy.docword --set vocab=" + kFix + "/toy.vocab --set epochs=" + kFix +
           "/toy.epochs";
  }

  CliResult run(const std::string& args) const {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = kCli + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

std::size_t count_records(const std::string& jsonl) {
  std::istringstream is(jsonl);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line))
    if (json::parse(line).contains("iteration")) ++n;
  return n;
}

}  // namespace

TEST_F(Cli, TrainWritesTraceAndCheckpoint) {
  ASSERT_EQ(run("train" + toy() + " --set burnin=10 --set samples=0 --out " + (dir / "a").string()).code, 0);
  EXPECT_EQ(count_records(slurp(dir / "a/trace.jsonl")), 10u);
  EXPECT_TRUE(fs::exists(dir / "a/checkpoint.txt"));
  EXPECT_EQ(slurp(dir / "a/status"), "ok\n");
  const json cfg = json::parse(slurp(dir / "a/config.json"));
  EXPECT_EQ(cfg["format_version"], 1);
  EXPECT_EQ(cfg["config"]["burnin"], "10");
  EXPECT_EQ(slurp(dir / "a/checkpoint.txt").rfind("dhnrm-checkpoint 1\n", 0), 0u);
}

TEST_F(Cli, SameSeedSameFiles) {
  const std::string args = "train" + toy() + " --set burnin=15 --set samples=5 --seed 3 --out ";
  ASSERT_EQ(run(args + (dir / "a").string()).code, 0);
  ASSERT_EQ(run(args + (dir / "b").string()).code, 0);
  for (const char* f : {"trace.jsonl", "checkpoint.txt", "summary.json", "config.json"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  ASSERT_EQ(run("train" + toy() + " --set burnin=15 --set samples=5 --seed 4 --out " + (dir / "c").string()).code, 0);
  EXPECT_NE(slurp(dir / "a/checkpoint.txt"), slurp(dir / "c/checkpoint.txt"));
}

TEST_F(Cli, InvalidInputExitsTwo) {
  auto r = run("train --set docword=/no/such/file --set vocab=" + kFix + "/toy.vocab --set epochs=" + kFix +
               "/toy.epochs --out " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/no/such/file"), std::string::npos);
  EXPECT_EQ(run("train --set nonsense=1 --out " + dir.string()).code, 2);
  EXPECT_EQ(run("train" + toy() + " --set a=1.5 --out " + dir.string()).code, 2);
  EXPECT_EQ(run("train" + toy() + " --set burnin=many --out " + dir.string()).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --config /no/such/config.json --out " + dir.string()).code, 2);
}

TEST_F(Cli, ConfigFileAndOverrides) {
  std::ofstream(dir / "c.json") << "{\"burnin\": 4, \"samples\": 1, \"kind\": \"DP\", \"q\": 0.25}";
  ASSERT_EQ(run("train" + toy() + " --config " + (dir / "c.json").string() + " --set samples=2 --out " +
                (dir / "a").string())
                .code,
            0);
  const json cfg = json::parse(slurp(dir / "a/config.json"));
  EXPECT_EQ(cfg["config"]["kind"], "DP");
  EXPECT_EQ(cfg["config"]["q"], "0.25");
  EXPECT_EQ(cfg["config"]["samples"], "2");
  EXPECT_EQ(count_records(slurp(dir / "a/trace.jsonl")), 6u);
}

TEST_F(Cli, EvalReportsAndRejectsMismatch) {
  ASSERT_EQ(run("train" + toy() + " --set burnin=5 --set samples=0 --out " + (dir / "a").string()).code, 0);
  const std::string ck = " --set checkpoint=" + (dir / "a/checkpoint.txt").string();
  const std::string test = " --set test_docword=" + kFix + "/toy.docword --set test_epochs=" + kFix + "/toy.epochs";
  ASSERT_EQ(run("eval" + toy() + ck + test + " --out " + (dir / "e1").string()).code, 0);
  ASSERT_EQ(run("eval" + toy() + ck + test + " --out " + (dir / "e2").string()).code, 0);
  EXPECT_EQ(slurp(dir / "e1/eval.json"), slurp(dir / "e2/eval.json"));
  const json e = json::parse(slurp(dir / "e1/eval.json"));
  EXPECT_EQ(e["documents"].size(), 2u);
  EXPECT_LT(e["total_loglik"].get<double>(), 0.0);

  std::ofstream(dir / "empty.docword") << "0\n4\n0\n";
  std::ofstream(dir / "empty.epochs") << "";
  ASSERT_EQ(run("eval" + toy() + ck + " --set test_docword=" + (dir / "empty.docword").string() +
                " --set test_epochs=" + (dir / "empty.epochs").string() + " --out " + (dir / "e3").string())
                .code,
            0);
  EXPECT_EQ(json::parse(slurp(dir / "e3/eval.json"))["total_loglik"].get<double>(), 0.0);

  std::ofstream(dir / "other.vocab") << "apple\nbanana\ncherry\nzebra\n";
  EXPECT_EQ(run("eval --set docword=" + kFix + "/toy.docword --set epochs=" + kFix + "/toy.epochs --set vocab=" +
                (dir / "other.vocab").string() + ck + test + " --out " + (dir / "e4").string())
                .code,
            2);
}

TEST_F(Cli, SweepRowsMatchGridAndSingleCellMatchesTrain) {
  ASSERT_EQ(run("simulate --set sim_docs=6 --set sim_length=15 --set sim_vocab=12 --set sim_epochs=2 --out " +
                (dir / "sim").string())
                .code,
            0);
  const std::string corpus = " --set docword=" + (dir / "sim/sim.docword").string() + " --set vocab=" +
                             (dir / "sim/sim.vocab").string() + " --set epochs=" + (dir / "sim/sim.epochs").string() +
                             " --set test_fraction=0.34 --set burnin=5 --set samples=3 --set eval_every=1";
  ASSERT_EQ(run("sweep" + corpus + " --set sweep_param=q --set sweep_values=0.1,0.5,0.9 --out " +
                (dir / "s").string())
                .code,
            0);
  const std::string csv = slurp(dir / "s/sweep.csv");
  std::size_t rows = 0;
  std::istringstream is(csv);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '#' && line.rfind("value,", 0) != 0) {
      ++rows;
      EXPECT_NE(line.find(",ok"), std::string::npos) << line;
    }
  EXPECT_EQ(rows, 3u);

  ASSERT_EQ(run("sweep" + corpus + " --set sweep_param=q --set sweep_values=0.5 --out " + (dir / "one").string()).code, 0);
  ASSERT_EQ(run("train" + corpus + " --set q=0.5 --out " + (dir / "t").string()).code, 0);
  const json summary = json::parse(slurp(dir / "t/summary.json"));
  std::istringstream one(slurp(dir / "one/sweep.csv"));
  std::getline(one, line);
  std::getline(one, line);
  std::getline(one, line);
  std::vector<std::string> cells;
  std::stringstream ls(line);
  std::string cell;
  while (std::getline(ls, cell, ',')) cells.push_back(cell);
  ASSERT_GE(cells.size(), 4u);
  EXPECT_DOUBLE_EQ(std::stod(cells[1]), summary["train_loglik"].get<double>());
  EXPECT_DOUBLE_EQ(std::stod(cells[2]), summary["heldout_loglik"].get<double>());
}

TEST_F(Cli, PowerlawAndGewekeReports) {
  ASSERT_EQ(run("powerlaw --set a=0.5 --set pl_n=2000 --set pl_repeats=2 --out " + (dir / "p").string()).code, 0);
  const json p = json::parse(slurp(dir / "p/powerlaw.json"));
  EXPECT_EQ(p["repeats"].size(), 2u);
  EXPECT_TRUE(p.contains("mean_slope"));
  EXPECT_EQ(run("powerlaw --set pl_n=10 --out " + (dir / "p2").string()).code, 2);

  ASSERT_EQ(run("geweke --set geweke_forward=300 --set geweke_sweeps=500 --set geweke_burnin=10 "
                "--set geweke_chains=1 --out " +
                (dir / "g").string())
                .code,
            0);
  const json g = json::parse(slurp(dir / "g/geweke.json"));
  EXPECT_EQ(g["statistics"].size(), 7u);
  EXPECT_TRUE(g.contains("max_abs_z"));
}

TEST_F(Cli, SimulateIsReproducible) {
  const std::string args = "simulate --set sim_docs=4 --set sim_length=9 --set sim_vocab=10 --seed 7 --out ";
  ASSERT_EQ(run(args + (dir / "a").string()).code, 0);
  ASSERT_EQ(run(args + (dir / "b").string()).code, 0);
  for (const char* f : {"sim.docword", "sim.vocab", "sim.epochs", "truth.json"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  std::istringstream dw(slurp(dir / "a/sim.docword"));
  long d, v, nnz, total = 0;
  dw >> d >> v >> nnz;
  EXPECT_EQ(d, 12);
  EXPECT_EQ(v, 10);
  long a, b, c;
  while (dw >> a >> b >> c) total += c;
  EXPECT_EQ(total, 12 * 9);
}
