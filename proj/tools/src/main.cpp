#include "pgcan/cli/commands.hpp"
#include "pgcan/errors.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using nlohmann::json;
namespace fs = std::filesystem;
using namespace pgcan::cli;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw UsageError(path + " is not valid JSON");
  return doc;
}

std::pair<std::string, json> key_value(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + kv + "'");
  const std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  return {key, value};
}

json parse_seed_list(const std::string& text) {
  json seeds = json::array();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      seeds.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + item + "'");
    }
  }
  return seeds;
}

// Flags shared by train and sweep, folded into a JSON patch over the file.
struct Overrides {
  std::string profile;
  std::optional<int> epochs, eval_every, interior, boundary, initial, resample_every, reweight_every,
      eval_resolution;
  std::optional<double> lr;
  std::optional<bool> dynamic_weights;
  std::string seeds;

  void add(CLI::App* app) {
    app->add_option("--profile", profile, "Preset: paper or smoke");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", lr, "Initial learning rate");
    app->add_option("--eval-every", eval_every, "Evaluation/checkpoint cadence (epochs)");
    app->add_option("--interior", interior, "Interior collocation points");
    app->add_option("--boundary", boundary, "Points per boundary condition");
    app->add_option("--initial", initial, "Points on the initial slice");
    app->add_option("--resample-every", resample_every, "Collocation resampling cadence");
    app->add_option("--reweight-every", reweight_every, "Dynamic-weight update cadence");
    app->add_option("--eval-resolution", eval_resolution, "Lattice size for L2_rel");
    app->add_option("--dynamic-weights", dynamic_weights, "Enable dynamic loss weights (true/false)");
    app->add_option("--seeds", seeds, "Comma-separated seeds");
  }

  void apply(json& doc) const {
    if (!profile.empty()) doc["profile"] = profile;
    json& t = doc["training"];
    if (t.is_null()) t = json::object();
    if (epochs) t["epochs"] = *epochs;
    if (lr) t["lr"] = *lr;
    if (eval_every) t["eval_every"] = *eval_every;
    if (interior) t["interior_points"] = *interior;
    if (boundary) t["boundary_points"] = *boundary;
    if (initial) t["initial_points"] = *initial;
    if (resample_every) t["resample_every"] = *resample_every;
    if (reweight_every) t["reweight_every"] = *reweight_every;
    if (eval_resolution) t["eval_resolution"] = *eval_resolution;
    if (dynamic_weights) t["dynamic_weights"] = *dynamic_weights;
    if (!seeds.empty()) doc["seeds"] = parse_seed_list(seeds);
  }
};

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed PDE training, sweeps and error analysis"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train one configuration over its seeds");
  std::string config_path, problem, reference, arch, out;
  std::vector<std::string> params, arch_settings;
  bool force = false, resume = false, quiet = false;
  Overrides train_over;
  train->add_option("-c,--config", config_path, "Run config JSON");
  train->add_option("--problem", problem, "burgers, convection, helmholtz, ldc or poisson3d");
  train->add_option("--param", params, "Problem parameter key=value (repeatable)");
  train->add_option("--reference", reference, "Reference lattice CSV");
  train->add_option("--arch", arch, "pgcan, vpinn, m4, pixel or exact");
  train->add_option("--arch-set", arch_settings, "Architecture setting key=value (repeatable)");
  train->add_option("-o,--out", out, "Run directory (relative to $PGCAN_OUTPUT_ROOT)");
  train->add_flag("--force", force, "Replace an existing run");
  train->add_flag("--resume", resume, "Continue an interrupted run from its checkpoints");
  train->add_flag("-q,--quiet", quiet, "No progress output");
  train_over.add(train);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run a problem x parameter x architecture grid");
  std::string sweep_config, sweep_out;
  bool sweep_force = false, sweep_quiet = false;
  Overrides sweep_over;
  sweep->add_option("-c,--config", sweep_config, "Sweep config JSON")->required();
  sweep->add_option("-o,--out", sweep_out, "Sweep directory (relative to $PGCAN_OUTPUT_ROOT)");
  sweep->add_flag("--force", sweep_force, "Rerun completed cells");
  sweep->add_flag("-q,--quiet", sweep_quiet, "No progress output");
  sweep_over.add(sweep);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Error maps, PSD curves, feature maps, resolution study");
  std::string run_dir, analyze_seeds;
  AnalyzeOptions analyze_opts;
  std::optional<int> analyze_epoch;
  analyze->add_option("run_dir", run_dir, "Run directory")->required();
  analyze->add_option("--resolution", analyze_opts.resolution, "Error-map lattice size");
  analyze->add_option("--epoch", analyze_epoch, "Checkpoint epoch (default: latest)");
  analyze->add_option("--seeds", analyze_seeds, "Comma-separated seeds (default: all)");
  analyze->add_option("--study", analyze_opts.study_resolutions, "Resolution-study lattice sizes");

  // psd
  auto* psd = app.add_subcommand("psd", "Aligned directional PSD curves of x,y,err field CSVs");
  std::vector<std::string> psd_fields;
  std::string psd_out;
  psd->add_option("fields", psd_fields, "Field CSVs")->required();
  psd->add_option("-o,--out", psd_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kSuccess : kUsage;
  }

  try {
    if (*train) {
      json doc = config_path.empty() ? json::object() : load_json_file(config_path);
      if (!doc.is_object()) throw UsageError("config must be a JSON object");
      for (const char* key : {"problem", "architecture"}) {
        if (doc.contains(key) && doc[key].is_string()) doc[key] = json{{"name", doc[key]}};
        if (!doc.contains(key)) doc[key] = json::object();
      }
      if (!problem.empty()) doc["problem"]["name"] = problem;
      for (const auto& kv : params) {
        auto [k, v] = key_value(kv);
        doc["problem"]["parameters"][k] = v;
      }
      if (!reference.empty()) doc["problem"]["reference"] = fs::absolute(reference).string();
      if (!arch.empty() && doc["architecture"].value("name", "") != arch) {
        doc["architecture"] = json{{"name", arch}};
      }
      for (const auto& kv : arch_settings) {
        auto [k, v] = key_value(kv);
        doc["architecture"][k] = v;
      }
      if (!out.empty()) doc["output"] = out;
      train_over.apply(doc);
      const fs::path base = config_path.empty() ? fs::current_path() : fs::absolute(config_path).parent_path();
      RunConfig config = parse_run_config(doc, base);
      if (config.output.empty()) throw UsageError("no output directory: pass --out or set \"output\"");
      TrainOptions opts;
      opts.force = force;
      opts.resume = resume;
      if (!quiet) opts.log = log_line;
      const fs::path dir = cmd_train(config, opts);
      std::cout << dir.string() << "\n";
    } else if (*sweep) {
      json doc = load_json_file(sweep_config);
      sweep_over.apply(doc);
      if (!sweep_out.empty()) doc["output"] = sweep_out;
      const SweepConfig s = parse_sweep_config(doc, fs::absolute(sweep_config).parent_path());
      if (s.output.empty()) throw UsageError("no sweep directory: pass --out or set \"output\"");
      TrainOptions opts;
      opts.force = sweep_force;
      if (!sweep_quiet) opts.log = log_line;
      const SweepResult r = cmd_sweep(s, resolve_output(s.output), opts);
      std::cout << r.table.string() << "\n";
    } else if (*analyze) {
      analyze_opts.epoch = analyze_epoch;
      if (!analyze_seeds.empty()) {
        for (const auto& v : parse_seed_list(analyze_seeds)) analyze_opts.seeds.push_back(v.get<std::uint64_t>());
      }
      std::cout << cmd_analyze(run_dir, analyze_opts).string() << "\n";
    } else if (*psd) {
      std::vector<fs::path> paths(psd_fields.begin(), psd_fields.end());
      std::cout << cmd_psd(paths, psd_out).string() << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const pgcan::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const pgcan::ParameterError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const pgcan::CorruptReferenceError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const pgcan::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kSuccess;
}
