#include "pgcan/checkpoint.hpp"
#include "pgcan/cli/commands.hpp"
#include "pgcan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace pgcan::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

struct NamedLattice {
  std::string suffix;
  Lattice lattice;
};

// 2D problems: the whole box. Torus: cross-sections at fixed y over (x, z).
std::vector<NamedLattice> analysis_lattices(const PDEProblem& problem, int n) {
  const auto& box = problem.box();
  if (problem.input_dim() == 2) return {{"", Lattice::over(problem, n)}};
  std::vector<NamedLattice> out;
  const auto* torus = dynamic_cast<const TorusPoissonProblem*>(&problem);
  if (torus == nullptr) throw UsageError("no analysis lattice for a 3D problem other than the torus");
  for (double y : TorusPoissonProblem::slice_heights()) {
    Lattice l;
    l.n = n;
    l.axis_x = 0;
    l.axis_y = 2;
    l.x0 = box.lo[0];
    l.x1 = box.hi[0];
    l.y0 = box.lo[2];
    l.y1 = box.hi[2];
    l.fixed_axis = 1;
    l.fixed_value = y;
    char buf[32];
    std::snprintf(buf, sizeof buf, "_y%+.1f", y);
    out.push_back({buf, l});
  }
  return out;
}

std::string field_csv(const ErrorField& f) {
  std::string s = "x,y,err\n";
  for (int i = 0; i < f.lattice.n; ++i) {
    for (int j = 0; j < f.lattice.n; ++j) {
      if (!f.mask(i, j)) continue;
      s += format_double(f.lattice.node_x(i)) + "," + format_double(f.lattice.node_y(j)) + "," +
           format_double(f.values(i, j)) + "\n";
    }
  }
  return s;
}

std::string curves_csv(const std::vector<PSDCurve>& curves, const std::vector<std::string>& labels) {
  std::string s = labels.empty() ? "direction,bin,raw,log10,value\n" : "field,direction,bin,raw,log10,value\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& curve = curves[c];
    for (std::size_t b = 0; b < curve.bins.size(); ++b) {
      if (!labels.empty()) s += labels[c] + ",";
      s += std::string(1, curve.direction) + "," + std::to_string(curve.bins[b]) + "," + format_double(curve.raw[b]) +
           "," + format_double(curve.log_values[b]) + "," + format_double(curve.values[b]) + "\n";
    }
  }
  return s;
}

std::vector<std::string> analysis_channels(const PDEProblem& problem) {
  std::vector<std::string> ch = problem.output_names();
  if (problem.output_dim() > 1) ch.push_back("magnitude");
  return ch;
}

}  // namespace

fs::path cmd_analyze(const fs::path& run_dir, const AnalyzeOptions& options) {
  if (options.resolution < 8) throw UsageError("analysis resolution must be >= 8");
  const fs::path cfg_path = run_dir / "config.json";
  if (!fs::exists(cfg_path)) throw UsageError(run_dir.string() + " has no config.json");
  json doc = json::parse(read_text(cfg_path), nullptr, false);
  if (doc.is_discarded()) throw UsageError(cfg_path.string() + " is not valid JSON");
  doc.erase("config_hash");
  RunConfig config = parse_run_config(doc, run_dir);
  const auto problem = build_problem(config);
  const auto reference = problem->reference();
  const std::vector<std::uint64_t> seeds = options.seeds.empty() ? config.seeds : options.seeds;

  const fs::path out_root = run_dir / "analysis";
  json summary{{"resolution", options.resolution}, {"seeds", json::array()}};
  if (!reference) summary["note"] = "problem has no reference; error maps and PSD skipped";

  for (std::uint64_t seed : seeds) {
    if (std::find(config.seeds.begin(), config.seeds.end(), seed) == config.seeds.end()) {
      throw UsageError("seed " + std::to_string(seed) + " is not part of this run");
    }
    const fs::path seed_dir = run_dir / ("seed_" + std::to_string(seed));
    auto model = build_model(config, *problem, seed);

    // Pick the checkpoint.
    int epoch = -1;
    fs::path ckpt;
    const fs::path ck_dir = seed_dir / "checkpoints";
    if (!fs::is_directory(ck_dir)) throw UsageError(ck_dir.string() + " does not exist");
    for (const auto& entry : fs::directory_iterator(ck_dir)) {
      const std::string name = entry.path().filename().string();
      int e = 0;
      if (std::sscanf(name.c_str(), "epoch_%d.ckpt", &e) != 1 || entry.path().extension() != ".ckpt") continue;
      if (options.epoch ? e == *options.epoch : e > epoch) {
        epoch = e;
        ckpt = entry.path();
      }
    }
    if (ckpt.empty()) throw UsageError("no matching checkpoint in " + ck_dir.string());
    load_checkpoint(ckpt, *model);

    const fs::path out = out_root / ("seed_" + std::to_string(seed));
    fs::create_directories(out);
    json seed_summary{{"seed", seed}, {"epoch", epoch}, {"fields", json::array()}};

    const auto lattices = analysis_lattices(*problem, options.resolution);
    if (reference) {
      for (const auto& channel : analysis_channels(*problem)) {
        for (const auto& [suffix, lattice] : lattices) {
          const ErrorField f = error_map(*model, *problem, *reference, lattice, channel);
          const std::string name = channel + suffix;
          write_atomic(out / ("error_" + name + ".csv"), field_csv(f));
          const Eigen::MatrixXd p = power_spectrum(f.values);
          std::vector<PSDCurve> curves{directional_psd(p, 'x'), directional_psd(p, 'y')};
          write_atomic(out / ("psd_" + name + ".csv"), curves_csv(curves, {}));
          seed_summary["fields"].push_back({{"name", name},
                                            {"max_abs_error", number(f.values.cwiseAbs().maxCoeff())},
                                            {"flatness_x", number(flatness_score(curves[0]))},
                                            {"flatness_y", number(flatness_score(curves[1]))},
                                            {"raw_zero", curves[0].raw_zero || curves[1].raw_zero}});
        }
      }
      const L2Report l2 = L2Evaluator(*problem, config.training.eval_resolution)(*model);
      seed_summary["l2rel"] = number(l2.headline);
      if (!l2.channels.empty()) {
        json per = json::object();
        const auto names = problem->output_names();
        for (std::size_t c = 0; c < l2.channels.size(); ++c) per[names[c]] = number(l2.channels[c]);
        seed_summary["l2rel_channels"] = per;
      }
    }

    if (const auto* pg = dynamic_cast<const PgcanModel*>(model.get())) {
      const Lattice& l = lattices[lattices.size() / 2].lattice;
      const FeatureMaps maps = export_feature_maps(*pg, *problem, l);
      std::string s = "x,y,mean_f1,mean_f2\n";
      for (int i = 0; i < l.n; ++i) {
        for (int j = 0; j < l.n; ++j) {
          s += format_double(l.node_x(i)) + "," + format_double(l.node_y(j)) + "," +
               format_double(maps.mean_f1(i, j)) + "," + format_double(maps.mean_f2(i, j)) + "\n";
        }
      }
      write_atomic(out / "features.csv", s);
    }

    if (reference && problem->input_dim() == 2) {
      const auto& box = problem->box();
      std::vector<std::shared_ptr<const LatticeReference>> family;
      for (int n : options.study_resolutions) {
        family.push_back(
            sample_reference(*reference, n, box.lo[0], box.hi[0], box.lo[1], box.hi[1], problem->output_names()));
      }
      std::string s = "n,l2rel\n";
      json study = json::array();
      for (const auto& pt : resolution_study(*model, *problem, family, 0)) {
        s += std::to_string(pt.n) + "," + format_double(pt.l2rel) + "\n";
        study.push_back({{"n", pt.n}, {"l2rel", number(pt.l2rel)}});
      }
      write_atomic(out / "resolution.csv", s);
      seed_summary["resolution_study"] = study;
    }
    summary["seeds"].push_back(seed_summary);
  }
  write_atomic(out_root / "summary.json", summary.dump(2) + "\n");
  return out_root;
}

Eigen::MatrixXd read_field_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,y,", 0) != 0) {
    throw UsageError(path.string() + ": expected an x,y,<value> header");
  }
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 3> r{};
    std::stringstream ss(line);
    std::string cell;
    for (int k = 0; k < 3; ++k) {
      if (!std::getline(ss, cell, ',')) throw UsageError(path.string() + ": short row '" + line + "'");
      char* end = nullptr;
      r[k] = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw UsageError(path.string() + ": bad number '" + cell + "'");
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw UsageError(path.string() + ": no data rows");
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(r[0]);
    ys.push_back(r[1]);
  }
  auto uniq = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(xs);
  uniq(ys);
  // Masked fields may drop whole lattice lines; recover N from the spacing.
  auto count = [](const std::vector<double>& v) {
    if (v.size() < 2) return static_cast<int>(v.size());
    double h = v[1] - v[0];
    for (std::size_t k = 2; k < v.size(); ++k) h = std::min(h, v[k] - v[k - 1]);
    return static_cast<int>(std::lround((v.back() - v.front()) / h)) + 1;
  };
  const int n = std::max(count(xs), count(ys));
  if (count(xs) != count(ys)) throw UsageError(path.string() + ": field lattice is not square");
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, n);
  const double hx = n > 1 ? (xs.back() - xs.front()) / (n - 1) : 1.0;
  const double hy = n > 1 ? (ys.back() - ys.front()) / (n - 1) : 1.0;
  for (const auto& r : rows) {
    const long i = n > 1 ? std::lround((r[0] - xs.front()) / hx) : 0;
    const long j = n > 1 ? std::lround((r[1] - ys.front()) / hy) : 0;
    f(i, j) = r[2];
  }
  return f;
}

fs::path cmd_psd(const std::vector<fs::path>& fields, const fs::path& out) {
  if (fields.empty()) throw UsageError("psd needs at least one field CSV");
  std::vector<std::string> labels;
  std::vector<PSDCurve> xs, ys;
  for (const auto& path : fields) {
    const Eigen::MatrixXd f = read_field_csv(path);
    const Eigen::MatrixXd p = power_spectrum(f);
    xs.push_back(directional_psd(p, 'x'));
    ys.push_back(directional_psd(p, 'y'));
    std::string label = path.stem().string();
    if (std::find(labels.begin(), labels.end(), label) != labels.end()) {
      label += "_" + std::to_string(labels.size());
    }
    labels.push_back(label);
  }
  xs = align_psd_curves(std::move(xs));
  ys = align_psd_curves(std::move(ys));

  std::vector<PSDCurve> all;
  std::vector<std::string> all_labels;
  std::string flat = "field,direction,flatness,raw_zero\n";
  for (std::size_t k = 0; k < labels.size(); ++k) {
    for (const PSDCurve* c : {&xs[k], &ys[k]}) {
      all.push_back(*c);
      all_labels.push_back(labels[k]);
      flat += labels[k] + "," + std::string(1, c->direction) + "," + format_double(flatness_score(*c)) + "," +
              (c->raw_zero ? "1" : "0") + "\n";
    }
  }
  fs::create_directories(out);
  write_atomic(out / "psd_curves.csv", curves_csv(all, all_labels));
  write_atomic(out / "flatness.csv", flat);
  return out;
}

}  // namespace pgcan::cli
