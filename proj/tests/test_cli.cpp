#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "helpers.hpp"
#include "tabx/parallel.hpp"

using tabx::test::slurp;
using tabx::test::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const auto cap = tabx::max_threads();
  const int code = tabx::cli::dispatch(args, out, err);
  tabx::set_max_threads(cap);
  return {code, out.str(), err.str()};
}

// Generates a small dataset and trains a forest in `dir`.
void prepare(const TempDir& dir, const std::string& preset = "default", std::size_t n = 600) {
  auto g = run({"gen-data", "--n", std::to_string(n), "--preset", preset, "--seed", "3", "--out",
                dir.file("data.csv"), "--schema-out", dir.file("schema.tsv"), "--truth-out",
                dir.file("truth.json"), "--bayes-samples", "2000"});
  ASSERT_EQ(g.code, 0) << g.err;
  auto t = run({"train", "--data", dir.file("data.csv"), "--schema", dir.file("schema.tsv"),
                "--out", dir.file("model.json"), "--n-trees", "20", "--seed", "1"});
  ASSERT_EQ(t.code, 0) << t.err;
}

}  // namespace

TEST(Cli, GenDataWritesAllOutputs) {
  TempDir dir("cli_gen");
  auto r = run({"gen-data", "--n", "200", "--out", dir.file("d.csv"), "--schema-out",
                dir.file("s.tsv"), "--truth-out", dir.file("t.json"), "--report",
                dir.file("r.json"), "--bayes-samples", "500"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir.file("d.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 201);
  auto truth = nlohmann::json::parse(slurp(dir.file("t.json")));
  EXPECT_TRUE(truth.contains("bayes_rate"));
  auto report = nlohmann::json::parse(slurp(dir.file("r.json")));
  EXPECT_EQ(report["outputs"].size(), 4u);
  EXPECT_EQ(report["command"][0], "tabx");
  EXPECT_FALSE(report.contains("timing_seconds"));
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli_codes");
  EXPECT_EQ(run({}).code, tabx::cli::kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, tabx::cli::kUsage);
  EXPECT_EQ(run({"gen-data", "--n"}).code, tabx::cli::kUsage);
  EXPECT_EQ(run({"train", "--data", "x.csv"}).code, tabx::cli::kUsage);

  auto missing = run({"train", "--data", dir.file("nope.csv"), "--schema", dir.file("nope.tsv"),
                      "--out", dir.file("m.json")});
  EXPECT_EQ(missing.code, tabx::cli::kDataError);
  EXPECT_NE(missing.err.find("nope"), std::string::npos);

  auto unwritable = run({"gen-data", "--n", "50", "--out", dir.file("no/such/dir/d.csv"),
                         "--schema-out", dir.file("s.tsv"), "--bayes-samples", "100"});
  EXPECT_EQ(unwritable.code, tabx::cli::kDataError);

  auto bad_preset = run({"gen-data", "--n", "50", "--preset", "mystery", "--out", dir.file("d.csv"),
                         "--schema-out", dir.file("s.tsv")});
  EXPECT_EQ(bad_preset.code, tabx::cli::kNumericError);
}

TEST(Cli, TrainEvaluateAndOverwriteGuard) {
  TempDir dir("cli_train");
  prepare(dir);
  auto e = run({"evaluate", "--model-file", dir.file("model.json"), "--data", dir.file("data.csv"),
                "--out", dir.file("metrics.json")});
  ASSERT_EQ(e.code, 0) << e.err;
  auto m = nlohmann::json::parse(slurp(dir.file("metrics.json")));
  EXPECT_GT(m["accuracy"].get<double>(), 0.5);

  auto clobber = run({"train", "--data", dir.file("data.csv"), "--schema", dir.file("schema.tsv"),
                      "--out", dir.file("data.csv")});
  EXPECT_NE(clobber.code, 0);
  EXPECT_FALSE(slurp(dir.file("data.csv")).empty());
}

TEST(Cli, PgmIsByteIdenticalAcrossRunsAndThreadCaps) {
  TempDir dir("cli_pgm");
  prepare(dir);
  auto explain = [&](const std::string& tag, const std::string& threads) {
    auto r = run({"explain", "pgm", "--model-file", dir.file("model.json"), "--data",
                  dir.file("data.csv"), "--mode", "groups", "--samples", "300", "--runs", "2",
                  "--threads", threads, "--out-json", dir.file(tag + ".json"), "--out-dot",
                  dir.file(tag + ".dot"), "--report", dir.file(tag + "_report.json")});
    EXPECT_EQ(r.code, 0) << r.err;
    return r.out;
  };
  const auto out1 = explain("a", "1");
  const auto out8 = explain("b", "8");
  EXPECT_EQ(out1, out8);
  EXPECT_EQ(slurp(dir.file("a.json")), slurp(dir.file("b.json")));
  EXPECT_EQ(slurp(dir.file("a.dot")), slurp(dir.file("b.dot")));

  // Star graph: target plus four group nodes, one edge each.
  const auto dot = slurp(dir.file("a.dot"));
  std::size_t edges = 0, pos = 0;
  while ((pos = dot.find("->", pos)) != std::string::npos) {
    ++edges;
    pos += 2;
  }
  EXPECT_EQ(edges, 4u);
  EXPECT_NE(dot.find("doublecircle"), std::string::npos);

  auto j = nlohmann::json::parse(slurp(dir.file("a.json")));
  ASSERT_EQ(j["nodes"].size(), 4u);
  for (const auto& n : j["nodes"]) {
    double mean = 0;
    for (double w : n["run_weights"]) mean += w / 2;
    EXPECT_NEAR(n["weight"].get<double>(), mean, 1e-12);
    EXPECT_EQ(n["selected"].get<bool>(), n["p_value"].get<double>() < 0.05);
  }
}

TEST(Cli, CohortTooSmallIsDataError) {
  TempDir dir("cli_cohort");
  prepare(dir, "default", 300);
  auto r = run({"explain", "pgm", "--model-file", dir.file("model.json"), "--data",
                dir.file("data.csv"), "--cohort", "ethnicity=Asian", "--min-cohort", "1000",
                "--samples", "200"});
  EXPECT_EQ(r.code, tabx::cli::kDataError);
  EXPECT_NE(r.err.find("ethnicity=Asian"), std::string::npos);
}

TEST(Cli, ShapWritesRankingAndCsv) {
  TempDir dir("cli_shap");
  prepare(dir, "default", 300);
  auto r = run({"explain", "shap", "--model-file", dir.file("model.json"), "--data",
                dir.file("data.csv"), "--instances", "3", "--permutations", "4", "--background",
                "8", "--top-k", "5", "--out-csv", dir.file("phi.csv"), "--out-ranking",
                dir.file("rank.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rank = nlohmann::json::parse(slurp(dir.file("rank.json")));
  EXPECT_EQ(rank.size(), 5u);
  const auto csv = slurp(dir.file("phi.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 125);
}

TEST(Cli, TuneReportsTrials) {
  TempDir dir("cli_tune");
  prepare(dir, "planted", 200);
  auto r = run({"tune", "--model", "tree", "--data", dir.file("data.csv"), "--schema",
                dir.file("schema.tsv"), "--rounds", "3", "--folds", "3", "--rescreen", "4",
                "--out", dir.file("tune.json"), "--model-out", dir.file("best.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(slurp(dir.file("tune.json")));
  EXPECT_EQ(j["trials"].size(), 3u);
  EXPECT_FALSE(slurp(dir.file("best.json")).empty());
}
