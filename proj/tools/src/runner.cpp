#include "pgcan/checkpoint.hpp"
#include "pgcan/cli/commands.hpp"
#include "pgcan/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>
#include <unistd.h>

namespace pgcan::cli {

using nlohmann::json;
namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_header(const PDEProblem& problem) {
  std::string h = "epoch,loss_pde,loss_bc,loss_ic,lambda_bc,lambda_ic,lr,l2rel";
  if (problem.output_dim() > 1) {
    for (const auto& n : problem.output_names()) h += ",l2rel_" + n;
  }
  return h;
}

std::string metrics_line(const MetricRow& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.loss_pde, r.loss_bc, r.loss_ic, r.lambda_bc, r.lambda_ic, r.lr, r.l2rel}) {
    s += "," + format_double(v);
  }
  for (double v : r.l2rel_channels) s += "," + format_double(v);
  return s;
}

SeedStats seed_statistics(const std::vector<double>& finals) {
  SeedStats s;
  if (finals.empty()) throw UsageError("no seeds to summarize");
  const double n = static_cast<double>(finals.size());
  double sum = 0.0;
  for (double v : finals) sum += v;
  s.mean = sum / n;
  double ss = 0.0;
  for (double v : finals) ss += (v - s.mean) * (v - s.mean);
  s.std = finals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::vector<double> sorted = finals;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  s.median = sorted.size() % 2 == 1 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  s.best = sorted.front();
  if (std::any_of(finals.begin(), finals.end(), [](double v) { return std::isnan(v); })) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s = {nan, nan, nan, nan};
  }
  return s;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%06d.ckpt", epoch);
  return buf;
}

// Latest checkpoint (by epoch) in a seed directory.
std::optional<std::pair<int, fs::path>> latest_checkpoint(const fs::path& seed_dir) {
  const fs::path dir = seed_dir / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  static const std::regex pattern(R"(epoch_(\d+)\.ckpt)");
  std::optional<std::pair<int, fs::path>> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const int e = std::stoi(m[1].str());
    if (!best || e > best->first) best = {e, entry.path()};
  }
  return best;
}

struct MetricsLog {
  std::string header;
  std::vector<std::string> lines;

  std::string text() const {
    std::string s = header + "\n";
    for (const auto& l : lines) s += l + "\n";
    return s;
  }
};

// Rows of an existing metrics.csv logged before `epoch`.
MetricsLog read_metrics(const fs::path& path, const std::string& header, int before_epoch) {
  MetricsLog log;
  log.header = header;
  std::ifstream in(path);
  if (!in) return log;
  std::string line;
  std::getline(in, line);
  if (line != header) throw UsageError(path.string() + " has an unexpected header; cannot resume");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) < before_epoch) log.lines.push_back(line);
  }
  return log;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  double final_l2rel = 0.0;
  int final_epoch = 0;
  std::vector<std::pair<int, double>> history;
  double seconds = 0.0;
};

SeedOutcome history_from_metrics(const fs::path& path, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 8) throw Error(path.string() + ": malformed row");
    out.history.emplace_back(std::stoi(cells[0]), std::strtod(cells[7].c_str(), nullptr));
  }
  if (out.history.empty()) throw Error(path.string() + ": no rows");
  out.final_epoch = out.history.back().first;
  out.final_l2rel = out.history.back().second;
  return out;
}

bool is_run_artifact(const fs::path& p) {
  const std::string name = p.filename().string();
  return name == "config.json" || name == "summary.json" || name == "analysis" || name.rfind("seed_", 0) == 0;
}

void prepare_directory(const fs::path& dir, const RunConfig& config, const std::string& hash,
                       const TrainOptions& options) {
  const bool non_empty = fs::exists(dir) && !fs::is_empty(dir);
  if (non_empty && options.resume) {
    const fs::path cfg = dir / "config.json";
    if (fs::exists(cfg)) {
      const json existing = json::parse(read_file(cfg), nullptr, false);
      if (existing.is_discarded() || existing.value("config_hash", "") != hash) {
        throw UsageError(dir.string() + " holds a run with a different config; use --force to replace it");
      }
      return;
    }
  }
  if (non_empty && !options.force && !options.resume) {
    throw UsageError(dir.string() + " is not empty; pass --force to overwrite or --resume to continue");
  }
  if (non_empty && options.force) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (is_run_artifact(entry.path())) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
  json doc = to_json(config);
  doc["config_hash"] = hash;
  write_atomic(dir / "config.json", doc.dump(2) + "\n");
}

SeedOutcome train_seed(const RunConfig& config, const PDEProblem& problem, std::uint64_t seed, const fs::path& dir,
                       const TrainOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path seed_dir = dir / ("seed_" + std::to_string(seed));
  const fs::path metrics_path = seed_dir / "metrics.csv";
  fs::create_directories(seed_dir / "checkpoints");

  TrainConfig tc = config.training;
  tc.seed = seed;
  auto model = build_model(config, problem, seed);

  std::optional<TrainState> resume;
  MetricsLog log;
  log.header = metrics_header(problem);
  if (options.resume) {
    if (auto latest = latest_checkpoint(seed_dir)) {
      TrainState state = load_checkpoint(latest->second, *model);
      if (state.seed != seed) throw UsageError(latest->second.string() + " belongs to another seed");
      log = read_metrics(metrics_path, log.header, latest->first);
      if (state.epoch >= tc.epochs && fs::exists(metrics_path)) {
        // Completed earlier; keep the log as is.
        SeedOutcome done = history_from_metrics(metrics_path, seed);
        return done;
      }
      resume = std::move(state);
      if (options.log) options.log("seed " + std::to_string(seed) + ": resuming at epoch " +
                                   std::to_string(latest->first));
    }
  }

  TrainHooks hooks;
  hooks.on_row = [&](const MetricRow& row) {
    log.lines.push_back(metrics_line(row));
    write_atomic(metrics_path, log.text());
    if (options.log) {
      options.log("seed " + std::to_string(seed) + " epoch " + std::to_string(row.epoch) +
                  " loss_pde=" + format_double(row.loss_pde) + " l2rel=" + format_double(row.l2rel));
    }
  };
  hooks.on_checkpoint = [&](const Model& m, const TrainState& state) {
    const fs::path path = seed_dir / "checkpoints" / checkpoint_name(state.epoch);
    save_checkpoint(path, m, state);
    return path.string();
  };
  hooks.on_warning = [&](const std::string& w) {
    if (options.log) options.log("seed " + std::to_string(seed) + " warning: " + w);
  };
  train(*model, problem, tc, hooks, std::move(resume));

  SeedOutcome out = history_from_metrics(metrics_path, seed);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

}  // namespace

fs::path cmd_train(const RunConfig& config, const TrainOptions& options) {
  const fs::path dir = resolve_output(config.output);
  const std::string hash = config_hash(config);
  const auto problem = build_problem(config);
  build_model(config, *problem, config.seeds.front());
  prepare_directory(dir, config, hash, options);

  std::vector<SeedOutcome> outcomes;
  double total_seconds = 0.0;
  for (std::uint64_t seed : config.seeds) {
    outcomes.push_back(train_seed(config, *problem, seed, dir, options));
    total_seconds += outcomes.back().seconds;
  }

  std::vector<double> finals;
  json seeds = json::array();
  for (const auto& o : outcomes) {
    finals.push_back(o.final_l2rel);
    json hist = json::array();
    for (const auto& [e, v] : o.history) hist.push_back({{"epoch", e}, {"l2rel", number(v)}});
    seeds.push_back({{"seed", o.seed},
                     {"final_epoch", o.final_epoch},
                     {"final_l2rel", number(o.final_l2rel)},
                     {"history", hist},
                     {"wall_clock_seconds", o.seconds}});
  }
  const SeedStats st = seed_statistics(finals);
  json summary{{"config_hash", hash},
               {"problem", config.problem.name},
               {"architecture", config.architecture.name},
               {"seeds", seeds},
               {"statistics",
                {{"mean", number(st.mean)}, {"std", number(st.std)}, {"median", number(st.median)},
                 {"best", number(st.best)}}},
               {"wall_clock_seconds", total_seconds}};
  write_atomic(dir / "summary.json", summary.dump(2) + "\n");
  return dir;
}

namespace {

std::optional<SeedStats> completed_cell(const fs::path& dir, const std::string& hash) {
  const fs::path path = dir / "summary.json";
  if (!fs::exists(path)) return std::nullopt;
  const json s = json::parse(read_file(path), nullptr, false);
  if (s.is_discarded() || s.value("config_hash", "") != hash) return std::nullopt;
  std::vector<double> finals;
  for (const auto& seed : s.at("seeds")) {
    const json& v = seed.at("final_l2rel");
    finals.push_back(v.is_number() ? v.get<double>() : std::strtod(v.get<std::string>().c_str(), nullptr));
  }
  return seed_statistics(finals);
}

std::string table_text(const std::vector<TableRow>& rows) {
  std::string s = "problem,parameter,architecture,mean,std,median,best\n";
  for (const auto& r : rows) {
    s += r.problem + ",\"" + r.parameter + "\"," + r.architecture + "," + format_double(r.stats.mean) + "," +
         format_double(r.stats.std) + "," + format_double(r.stats.median) + "," + format_double(r.stats.best) + "\n";
  }
  return s;
}

}  // namespace

SweepResult cmd_sweep(const SweepConfig& sweep, const fs::path& root, const TrainOptions& options) {
  SweepResult result;
  const auto cells = expand_sweep(sweep, root);
  fs::create_directories(root);
  for (const auto& cell : cells) {
    const std::string hash = config_hash(cell.config);
    TableRow row{cell.config.problem.name, cell.parameter_label, cell.config.architecture.name, {}};
    if (auto done = completed_cell(cell.directory, hash); done && !options.force) {
      row.stats = *done;
      ++result.skipped;
      if (options.log) options.log("skip " + cell.directory.string() + " (complete)");
    } else {
      TrainOptions o = options;
      const bool started = fs::exists(cell.directory / "config.json");
      o.resume = started && !options.force;
      o.force = options.force || !started;
      if (options.log) options.log("cell " + cell.directory.string());
      cmd_train(cell.config, o);
      row.stats = *completed_cell(cell.directory, hash);
    }
    result.rows.push_back(row);
    write_atomic(root / "table.csv", table_text(result.rows));
  }
  result.table = root / "table.csv";
  write_atomic(result.table, table_text(result.rows));
  return result;
}

}  // namespace pgcan::cli
