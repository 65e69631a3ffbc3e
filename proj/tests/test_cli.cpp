#include "support.hpp"

#include "pgcan/cli/commands.hpp"
#include "pgcan/cli/config.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace pgcan;
using namespace pgcan::cli;
using namespace pgcan::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_run(const fs::path& out, const std::string& arch = "vpinn") {
  json a{{"name", arch}};
  if (arch == "vpinn") a.update({{"layers", 1}, {"width", 6}});
  if (arch == "pgcan") a.update({{"grid_vertices", 5}, {"n_features", 4}, {"layers", 1}, {"width", 2}});
  return json{{"problem", {{"name", "helmholtz"}}},
              {"architecture", a},
              {"training",
               {{"epochs", 20},
                {"eval_every", 10},
                {"interior_points", 48},
                {"boundary_points", 12},
                {"initial_points", 12},
                {"eval_resolution", 12}}},
              {"seeds", {3}},
              {"output", out.string()}};
}

TrainOptions quiet(bool force = false) {
  TrainOptions o;
  o.force = force;
  return o;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

int run_exe(const std::string& args) {
  const int rc = std::system((std::string(PGCAN_EXE) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, CanonicalRoundTrip) {
  const RunConfig a = parse_run_config(tiny_run("x"));
  const RunConfig b = parse_run_config(to_json(a));
  EXPECT_EQ(canonical_dump(a), canonical_dump(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_EQ(a.training.epochs, 20);
  EXPECT_EQ(a.seeds, (std::vector<std::uint64_t>{3}));
}

TEST(Config, HashIgnoresOutputButNotSettings) {
  const RunConfig a = parse_run_config(tiny_run("one"));
  const RunConfig b = parse_run_config(tiny_run("two"));
  EXPECT_EQ(config_hash(a), config_hash(b));
  json doc = tiny_run("one");
  doc["training"]["lr"] = 2e-3;
  EXPECT_NE(config_hash(parse_run_config(doc)), config_hash(a));
  doc = tiny_run("one");
  doc["seeds"] = {4};
  EXPECT_NE(config_hash(parse_run_config(doc)), config_hash(a));
}

TEST(Config, HashFollowsReferenceContents) {
  const fs::path dir = scratch_dir("cli_refhash");
  AnalyticReference exact({[](const Vector& x) { return helmholtz_sample(x(0), x(1), 1.0); }}, "helmholtz");
  const auto lat = sample_reference(exact, 16, -1, 1, -1, 1, {"u"});
  write_reference(dir / "a.csv", *lat);
  write_reference(dir / "b.csv", *lat);
  json doc = tiny_run("o");
  doc["problem"]["reference"] = "a.csv";
  const std::string ha = config_hash(parse_run_config(doc, dir));
  doc["problem"]["reference"] = "b.csv";
  EXPECT_EQ(config_hash(parse_run_config(doc, dir)), ha);
  std::ofstream(dir / "b.csv", std::ios::app) << "\n";
  EXPECT_NE(config_hash(parse_run_config(doc, dir)), ha);
  fs::remove_all(dir);
}

TEST(Config, FnvKnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, ProfilesApplyBeforeExplicitFields) {
  const RunConfig smoke = parse_run_config(json{{"profile", "smoke"}});
  EXPECT_EQ(smoke.training.epochs, 2000);
  EXPECT_EQ(smoke.training.samples.interior, 2000);
  EXPECT_EQ(smoke.training.samples.boundary, 500);
  const RunConfig paper = parse_run_config(json{{"profile", "paper"}});
  EXPECT_EQ(paper.training.epochs, 50000);
  EXPECT_EQ(paper.seeds.size(), 10u);
  const RunConfig over = parse_run_config(json{{"profile", "smoke"}, {"training", {{"epochs", 7}}}});
  EXPECT_EQ(over.training.epochs, 7);
  EXPECT_EQ(over.training.samples.interior, 2000);
}

TEST(Config, UnknownNamesAreUsageErrors) {
  EXPECT_THROW(parse_run_config(json{{"bogus", 1}}), UsageError);
  EXPECT_THROW(parse_run_config(json{{"training", {{"lrr", 1}}}}), UsageError);
  EXPECT_THROW(parse_run_config(json{{"problem", {{"name", "navier"}}}}), UsageError);
  EXPECT_THROW(parse_run_config(json{{"profile", "huge"}}), UsageError);
  EXPECT_THROW(parse_run_config(json{{"training", {{"epochs", "many"}}}}), UsageError);
  json bad_arch = tiny_run("o");
  bad_arch["architecture"] = {{"name", "transformer"}};
  EXPECT_THROW(build_model(parse_run_config(bad_arch), *make_problem("helmholtz"), 0), UsageError);
}

TEST(Stats, SeedStatistics) {
  const SeedStats s = seed_statistics({4e-3, 1e-3, 2e-3});
  EXPECT_DOUBLE_EQ(s.median, 2e-3);
  EXPECT_DOUBLE_EQ(s.mean, 7e-3 / 3);
  const double m = 7.0 / 3;
  EXPECT_NEAR(s.std, 1e-3 * std::sqrt((std::pow(1 - m, 2) + std::pow(2 - m, 2) + std::pow(4 - m, 2)) / 2), 1e-15);
  EXPECT_EQ(s.best, 1e-3);
  EXPECT_EQ(seed_statistics({5.0}).std, 0.0);
  EXPECT_EQ(seed_statistics({1, 2, 3, 4}).median, 2.5);
  EXPECT_THROW(seed_statistics({}), UsageError);
  EXPECT_TRUE(std::isnan(seed_statistics({1.0, std::nan("")}).mean));
}

TEST(Format, DoublesRoundTrip) {
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
  const double v = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Train, ZeroEpochsWritesInitialCheckpointOnly) {
  const fs::path dir = scratch_dir("cli_zero");
  json doc = tiny_run(dir);
  doc["training"]["epochs"] = 0;
  cmd_train(parse_run_config(doc), quiet());
  const fs::path seed = dir / "seed_3";
  std::vector<std::string> ckpts;
  for (const auto& e : fs::directory_iterator(seed / "checkpoints")) ckpts.push_back(e.path().filename().string());
  EXPECT_EQ(ckpts, (std::vector<std::string>{"epoch_000000.ckpt"}));
  const auto rows = lines(slurp(seed / "metrics.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "epoch,loss_pde,loss_bc,loss_ic,lambda_bc,lambda_ic,lr,l2rel");
  EXPECT_EQ(rows[1].substr(0, 2), "0,");
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  fs::remove_all(dir);
}

TEST(Train, SameSeedGivesIdenticalMetrics) {
  const fs::path a = scratch_dir("cli_repro_a"), b = scratch_dir("cli_repro_b");
  cmd_train(parse_run_config(tiny_run(a, "pgcan")), quiet());
  cmd_train(parse_run_config(tiny_run(b, "pgcan")), quiet());
  const std::string ma = slurp(a / "seed_3" / "metrics.csv");
  EXPECT_EQ(lines(ma).size(), 4u);
  EXPECT_EQ(ma, slurp(b / "seed_3" / "metrics.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, RefusesExistingRunWithoutForce) {
  const fs::path dir = scratch_dir("cli_refuse");
  const RunConfig c = parse_run_config(tiny_run(dir));
  cmd_train(c, quiet());
  EXPECT_THROW(cmd_train(c, quiet()), UsageError);
  const std::string before = slurp(dir / "seed_3" / "metrics.csv");
  EXPECT_NO_THROW(cmd_train(c, quiet(true)));
  EXPECT_EQ(slurp(dir / "seed_3" / "metrics.csv"), before);

  json other = tiny_run(dir);
  other["training"]["lr"] = 5e-3;
  TrainOptions resume;
  resume.resume = true;
  EXPECT_THROW(cmd_train(parse_run_config(other), resume), UsageError);
  fs::remove_all(dir);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const fs::path full = scratch_dir("cli_full"), part = scratch_dir("cli_part");
  cmd_train(parse_run_config(tiny_run(full)), quiet());
  cmd_train(parse_run_config(tiny_run(part)), quiet());
  // Drop the final checkpoint and the summary as if killed after epoch 10.
  fs::remove(part / "seed_3" / "checkpoints" / "epoch_000020.ckpt");
  fs::remove(part / "summary.json");
  ASSERT_TRUE(fs::exists(part / "seed_3" / "checkpoints" / "epoch_000010.ckpt"));
  TrainOptions resume;
  resume.resume = true;
  cmd_train(parse_run_config(tiny_run(part)), resume);
  EXPECT_EQ(slurp(part / "seed_3" / "metrics.csv"), slurp(full / "seed_3" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(part / "summary.json"));
  fs::remove_all(full);
  fs::remove_all(part);
}

TEST(Sweep, SingleCellThenSkip) {
  const fs::path root = scratch_dir("cli_sweep");
  json doc = tiny_run("");
  json sweep{{"problems", {{{"name", "helmholtz"}, {"parameters", {{"a2", 2.0}}}}}},
             {"architectures", {doc["architecture"]}},
             {"training", doc["training"]},
             {"seeds", {3}}};
  const SweepConfig s = parse_sweep_config(sweep);
  const SweepResult first = cmd_sweep(s, root, quiet());
  ASSERT_EQ(first.rows.size(), 1u);
  EXPECT_EQ(first.skipped, 0);
  EXPECT_EQ(first.rows[0].parameter, "a2=2");
  const std::string table = slurp(first.table);
  EXPECT_EQ(lines(table)[0], "problem,parameter,architecture,mean,std,median,best");
  const SweepResult again = cmd_sweep(s, root, quiet());
  EXPECT_EQ(again.skipped, 1);
  EXPECT_EQ(slurp(again.table), table);
  EXPECT_THROW(parse_sweep_config(json{{"problems", json::array()}, {"architectures", {"vpinn"}}}), UsageError);
  fs::remove_all(root);
}

TEST(Analyze, ExactModelGivesZeroErrorAndIsDeterministic) {
  const fs::path dir = scratch_dir("cli_exact");
  json doc = tiny_run(dir);
  doc["architecture"] = {{"name", "exact"}};
  doc["training"]["epochs"] = 0;
  cmd_train(parse_run_config(doc), quiet());
  AnalyzeOptions o;
  o.resolution = 16;
  o.study_resolutions = {16, 32};
  const fs::path out = cmd_analyze(dir, o);
  const Eigen::MatrixXd err = read_field_csv(out / "seed_3" / "error_u.csv");
  EXPECT_EQ(err.rows(), 16);
  EXPECT_LT(err.cwiseAbs().maxCoeff(), 1e-14);
  const json summary = json::parse(slurp(out / "summary.json"));
  const json& field = summary["seeds"][0]["fields"][0];
  EXPECT_EQ(field["name"], "u");
  EXPECT_TRUE(field["raw_zero"].get<bool>() || field["max_abs_error"].get<double>() < 1e-14);
  const std::string first_err = slurp(out / "seed_3" / "error_u.csv");
  const std::string first_psd = slurp(out / "seed_3" / "psd_u.csv");
  const std::string first_sum = slurp(out / "summary.json");
  cmd_analyze(dir, o);
  EXPECT_EQ(slurp(out / "seed_3" / "error_u.csv"), first_err);
  EXPECT_EQ(slurp(out / "seed_3" / "psd_u.csv"), first_psd);
  EXPECT_EQ(slurp(out / "summary.json"), first_sum);
  fs::remove_all(dir);
}

TEST(Analyze, PgcanRunWritesFeaturesAndStudy) {
  const fs::path dir = scratch_dir("cli_pgcan_analyze");
  cmd_train(parse_run_config(tiny_run(dir, "pgcan")), quiet());
  AnalyzeOptions o;
  o.resolution = 16;
  o.study_resolutions = {16, 32};
  const fs::path out = cmd_analyze(dir, o);
  EXPECT_TRUE(fs::exists(out / "seed_3" / "features.csv"));
  const auto study = lines(slurp(out / "seed_3" / "resolution.csv"));
  EXPECT_EQ(study.size(), 3u);
  fs::remove_all(dir);
}

TEST(Psd, InjectedSinusoidDominantBin) {
  const fs::path dir = scratch_dir("cli_psd");
  const int n = 32, k = 5;
  std::string csv = "x,y,err\n";
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      csv += format_double(double(i) / (n - 1)) + "," + format_double(double(j) / (n - 1)) + "," +
             format_double(std::cos(2 * std::numbers::pi * i * k / n)) + "\n";
  write_atomic(dir / "field.csv", csv);
  const Eigen::MatrixXd back = read_field_csv(dir / "field.csv");
  EXPECT_NEAR(back(3, 7), std::cos(2 * std::numbers::pi * 3 * k / n), 1e-15);
  cmd_psd({dir / "field.csv"}, dir / "out");
  int best_bin = -1;
  double best = -1.0;
  for (const auto& row : lines(slurp(dir / "out" / "psd_curves.csv"))) {
    std::stringstream ss(row);
    std::vector<std::string> cells;
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() < 4 || cells[1] != "x") continue;
    const double raw = std::stod(cells[3]);
    if (raw > best) best = raw, best_bin = std::stoi(cells[2]);
  }
  EXPECT_EQ(best_bin, k);
  EXPECT_TRUE(fs::exists(dir / "out" / "flatness.csv"));
  fs::remove_all(dir);
}

TEST(Executable, ExitCodes) {
  const fs::path dir = scratch_dir("cli_exe");
  std::ofstream(dir / "bad.json") << R"({"problem": "helmholtz", "bogus": 1})";
  EXPECT_EQ(run_exe("train -q -c " + (dir / "bad.json").string() + " -o " + (dir / "r").string()), 2);
  EXPECT_EQ(run_exe("frobnicate"), 2);
  std::ofstream(dir / "ok.json") << tiny_run(dir / "r").dump();
  EXPECT_EQ(run_exe("train -q -c " + (dir / "ok.json").string()), 0);
  EXPECT_EQ(run_exe("train -q -c " + (dir / "ok.json").string()), 2);
  EXPECT_EQ(run_exe("train -q --force -c " + (dir / "ok.json").string()), 0);
  EXPECT_EQ(run_exe("analyze " + (dir / "missing").string()), 2);
  fs::remove_all(dir);
}
