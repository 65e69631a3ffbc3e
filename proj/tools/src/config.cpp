#include "pgcan/cli/config.hpp"

#include "pgcan/errors.hpp"
#include "pgcan/reference.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace pgcan::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kExact = "exact";

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw UsageError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_as(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("bad value for '" + std::string(key) + "' in " + where);
  }
}

int get_int(const json& obj, const char* key, const std::string& where) {
  const json& v = obj.at(key);
  if (v.is_number_integer() || v.is_number_unsigned()) return v.get<int>();
  if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<int>(v.get<double>()))) {
    return static_cast<int>(v.get<double>());
  }
  throw UsageError("'" + std::string(key) + "' in " + where + " must be an integer");
}

std::map<std::string, double> parse_parameters(const json& obj, const std::string& where) {
  std::map<std::string, double> out;
  if (obj.is_null()) return out;
  if (!obj.is_object()) throw UsageError(where + " must be an object of numbers");
  for (const auto& [key, v] : obj.items()) {
    if (!v.is_number()) throw UsageError("parameter '" + key + "' in " + where + " must be a number");
    out[key] = v.get<double>();
  }
  return out;
}

ArchitectureConfig parse_architecture(const json& a) {
  ArchitectureConfig c;
  if (a.is_string()) {
    c.name = a.get<std::string>();
    return c;
  }
  check_keys(a, {"name", "layers", "width", "grid_vertices", "n_features", "n_rep", "gate"}, "architecture");
  if (a.contains("name")) c.name = get_as<std::string>(a, "name", "architecture");
  if (a.contains("layers")) c.layers = get_int(a, "layers", "architecture");
  if (a.contains("width")) c.width = get_int(a, "width", "architecture");
  if (a.contains("grid_vertices")) c.grid_vertices = get_int(a, "grid_vertices", "architecture");
  if (a.contains("n_features")) c.n_features = get_int(a, "n_features", "architecture");
  if (a.contains("n_rep")) c.n_rep = get_int(a, "n_rep", "architecture");
  if (a.contains("gate")) c.gate = get_as<std::string>(a, "gate", "architecture");
  return c;
}

ArchitectureConfig resolve(const ArchitectureConfig& c) {
  if (c.name == kExact) {
    if (c.layers || c.width || c.grid_vertices || c.n_features || c.n_rep || c.gate) {
      throw UsageError("architecture 'exact' takes no settings");
    }
    return c;
  }
  try {
    return resolve_architecture(c);
  } catch (const ConfigError& e) {
    throw UsageError(std::string(e.what()) + "; 'exact' runs the reference itself");
  }
}

std::string resolve_path(const std::string& p, const fs::path& base_dir) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative()) path = (base_dir.empty() ? fs::current_path() : base_dir) / path;
  return fs::absolute(path).lexically_normal().string();
}

json architecture_json(const ArchitectureConfig& c) {
  json a = json::object();
  a["name"] = c.name;
  if (c.layers) a["layers"] = *c.layers;
  if (c.width) a["width"] = *c.width;
  if (c.grid_vertices) a["grid_vertices"] = *c.grid_vertices;
  if (c.n_features) a["n_features"] = *c.n_features;
  if (c.n_rep) a["n_rep"] = *c.n_rep;
  if (c.gate) a["gate"] = *c.gate;
  return a;
}

std::map<std::string, double> resolve_parameters(const ProblemSpec& p) {
  std::map<std::string, double> params;
  try {
    params = default_problem_parameters(p.name);
  } catch (const ConfigError& e) {
    std::string known;
    for (const auto& n : problem_names()) known += (known.empty() ? "" : ", ") + n;
    throw UsageError("unknown problem '" + p.name + "' (known: " + known + ")");
  }
  for (const auto& [k, v] : p.parameters) {
    if (!params.count(k)) throw UsageError("problem '" + p.name + "' has no parameter '" + k + "'");
    params[k] = v;
  }
  return params;
}

void apply_training(const json& t, TrainConfig& c, std::optional<int>& interior, std::optional<int>& reweight,
                    std::optional<bool>& dynamic) {
  const std::string where = "training";
  check_keys(t,
             {"epochs", "lr", "lr_decay", "lr_step", "resample_every", "reweight_every", "ema_alpha", "eval_every",
              "interior_points", "boundary_points", "initial_points", "dynamic_weights", "lambda_bc", "lambda_ic",
              "eval_resolution", "adam_beta1", "adam_beta2", "adam_eps"},
             where);
  if (t.contains("epochs")) c.epochs = get_int(t, "epochs", where);
  if (t.contains("lr")) c.lr = get_as<double>(t, "lr", where);
  if (t.contains("lr_decay")) c.lr_decay = get_as<double>(t, "lr_decay", where);
  if (t.contains("lr_step")) c.lr_step = get_int(t, "lr_step", where);
  if (t.contains("resample_every")) c.resample_every = get_int(t, "resample_every", where);
  if (t.contains("reweight_every") && !t["reweight_every"].is_null()) reweight = get_int(t, "reweight_every", where);
  if (t.contains("ema_alpha")) c.ema_alpha = get_as<double>(t, "ema_alpha", where);
  if (t.contains("eval_every")) c.eval_every = get_int(t, "eval_every", where);
  if (t.contains("interior_points") && !t["interior_points"].is_null()) {
    interior = get_int(t, "interior_points", where);
  }
  if (t.contains("boundary_points")) c.samples.boundary = get_int(t, "boundary_points", where);
  if (t.contains("initial_points")) c.samples.initial = get_int(t, "initial_points", where);
  if (t.contains("dynamic_weights") && !t["dynamic_weights"].is_null()) {
    dynamic = get_as<bool>(t, "dynamic_weights", where);
  }
  if (t.contains("lambda_bc")) c.lambda_bc = get_as<double>(t, "lambda_bc", where);
  if (t.contains("lambda_ic")) c.lambda_ic = get_as<double>(t, "lambda_ic", where);
  if (t.contains("eval_resolution")) c.eval_resolution = get_int(t, "eval_resolution", where);
  if (t.contains("adam_beta1")) c.adam_beta1 = get_as<double>(t, "adam_beta1", where);
  if (t.contains("adam_beta2")) c.adam_beta2 = get_as<double>(t, "adam_beta2", where);
  if (t.contains("adam_eps")) c.adam_eps = get_as<double>(t, "adam_eps", where);
}

json merged_with_profile(const json& doc) {
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  if (!doc.contains("profile")) return doc;
  json merged = profile_json(get_as<std::string>(doc, "profile", "config"));
  json rest = doc;
  rest.erase("profile");
  merged.merge_patch(rest);
  return merged;
}

std::vector<std::uint64_t> parse_seeds(const json& s) {
  if (!s.is_array() || s.empty()) throw UsageError("'seeds' must be a non-empty array of integers");
  std::vector<std::uint64_t> out;
  std::set<std::uint64_t> seen;
  for (const auto& v : s) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw UsageError("seeds must be non-negative integers");
    }
    const auto seed = v.get<std::uint64_t>();
    if (!seen.insert(seed).second) throw UsageError("duplicate seed " + std::to_string(seed));
    out.push_back(seed);
  }
  return out;
}

// Fills defaults that depend on the problem and architecture.
void finish(RunConfig& c, std::optional<int> interior, std::optional<int> reweight, std::optional<bool> dynamic) {
  c.problem.parameters = resolve_parameters(c.problem);
  c.architecture = resolve(c.architecture);
  const auto problem = make_problem(c.problem.name, c.problem.parameters);
  c.training.samples.interior = interior.value_or(problem->default_interior_points());
  const int override_every = problem->default_reweight_every();
  c.training.reweight_every = reweight.value_or(override_every > 0 ? override_every : TrainConfig{}.reweight_every);
  c.training.dynamic_weights = dynamic.value_or(uses_dynamic_weights(c.architecture.name));
  try {
    c.training.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

}  // namespace

const std::vector<std::string>& profile_names() {
  static const std::vector<std::string> names{"paper", "smoke"};
  return names;
}

json profile_json(const std::string& name) {
  if (name == "paper") {
    return json{{"training",
                 {{"epochs", 50000},
                  {"eval_every", 5000},
                  {"boundary_points", 2000},
                  {"initial_points", 2000}}},
                {"seeds", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}};
  }
  if (name == "smoke") {
    return json{{"training",
                 {{"epochs", 2000},
                  {"eval_every", 500},
                  {"interior_points", 2000},
                  {"boundary_points", 500},
                  {"initial_points", 500}}},
                {"seeds", {0}}};
  }
  throw UsageError("unknown profile '" + name + "' (known: paper, smoke)");
}

RunConfig parse_run_config(const json& input, const fs::path& base_dir) {
  const json doc = merged_with_profile(input);
  check_keys(doc, {"problem", "architecture", "training", "seeds", "output"}, "config");
  RunConfig c;
  if (doc.contains("problem")) {
    const json& p = doc["problem"];
    if (p.is_string()) {
      c.problem.name = p.get<std::string>();
    } else {
      check_keys(p, {"name", "parameters", "reference"}, "problem");
      if (p.contains("name")) c.problem.name = get_as<std::string>(p, "name", "problem");
      if (p.contains("parameters")) c.problem.parameters = parse_parameters(p["parameters"], "problem.parameters");
      if (p.contains("reference") && !p["reference"].is_null()) {
        c.problem.reference = resolve_path(get_as<std::string>(p, "reference", "problem"), base_dir);
      }
    }
  }
  if (doc.contains("architecture")) c.architecture = parse_architecture(doc["architecture"]);
  std::optional<int> interior, reweight;
  std::optional<bool> dynamic;
  const json training = doc.contains("training") ? doc["training"] : json::object();
  apply_training(training, c.training, interior, reweight, dynamic);
  if (doc.contains("seeds")) c.seeds = parse_seeds(doc["seeds"]);
  if (doc.contains("output")) c.output = get_as<std::string>(doc, "output", "config");
  finish(c, interior, reweight, dynamic);
  c.training.seed = c.seeds.front();
  return c;
}

json to_json(const RunConfig& c) {
  json p = json::object();
  p["name"] = c.problem.name;
  p["parameters"] = json::object();
  for (const auto& [k, v] : c.problem.parameters) p["parameters"][k] = v;
  p["reference"] = c.problem.reference.empty() ? json(nullptr) : json(c.problem.reference);

  const TrainConfig& t = c.training;
  json tr{{"epochs", t.epochs},
          {"lr", t.lr},
          {"lr_decay", t.lr_decay},
          {"lr_step", t.lr_step},
          {"resample_every", t.resample_every},
          {"reweight_every", t.reweight_every},
          {"ema_alpha", t.ema_alpha},
          {"eval_every", t.eval_every},
          {"interior_points", t.samples.interior},
          {"boundary_points", t.samples.boundary},
          {"initial_points", t.samples.initial},
          {"dynamic_weights", t.dynamic_weights},
          {"lambda_bc", t.lambda_bc},
          {"lambda_ic", t.lambda_ic},
          {"eval_resolution", t.eval_resolution},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_eps", t.adam_eps}};

  return json{{"problem", p}, {"architecture", architecture_json(c.architecture)}, {"training", tr},
              {"seeds", c.seeds}};
}

std::string canonical_dump(const RunConfig& c) { return to_json(c).dump(); }

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& c) {
  // The reference enters through its contents, not its location.
  json doc = to_json(c);
  std::uint64_t h;
  if (c.problem.reference.empty()) {
    h = fnv1a(doc.dump());
  } else {
    std::ifstream in(c.problem.reference, std::ios::binary);
    if (!in) throw UsageError("cannot read reference '" + c.problem.reference + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    doc["problem"]["reference"] = "file";
    h = fnv1a(ss.str(), fnv1a(doc.dump()));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::unique_ptr<PDEProblem> build_problem(const RunConfig& c) {
  std::unique_ptr<PDEProblem> problem;
  try {
    problem = make_problem(c.problem.name, c.problem.parameters);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (!c.problem.reference.empty()) {
    auto ref = load_reference(c.problem.reference);
    if (ref->channels() < problem->output_dim()) {
      throw UsageError("reference '" + c.problem.reference + "' has fewer channels than problem outputs");
    }
    problem->set_reference(std::move(ref));
  }
  return problem;
}

std::unique_ptr<Model> build_model(const RunConfig& c, const PDEProblem& problem, std::uint64_t seed) {
  if (c.architecture.name == kExact) {
    try {
      return problem.reference_model();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  Rng rng(seed);
  try {
    return build_architecture(c.architecture, problem.input_dim(), problem.output_dim(), rng);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

fs::path output_root() {
  if (const char* env = std::getenv("PGCAN_OUTPUT_ROOT"); env != nullptr && *env != '\0') return fs::path(env);
  return fs::current_path();
}

fs::path resolve_output(const std::string& p) {
  if (p.empty()) throw UsageError("no output directory given");
  fs::path path(p);
  if (path.is_relative()) path = output_root() / path;
  return path.lexically_normal();
}

// --- sweeps -----------------------------------------------------------------------

SweepConfig parse_sweep_config(const json& input, const fs::path& base_dir) {
  const json doc = merged_with_profile(input);
  check_keys(doc, {"problems", "architectures", "training", "seeds", "output"}, "sweep");
  if (!doc.contains("problems") || !doc["problems"].is_array() || doc["problems"].empty()) {
    throw UsageError("sweep needs a non-empty 'problems' array");
  }
  if (!doc.contains("architectures") || !doc["architectures"].is_array() || doc["architectures"].empty()) {
    throw UsageError("sweep needs a non-empty 'architectures' array");
  }
  SweepConfig s;
  if (doc.contains("training")) s.training = doc["training"];
  if (doc.contains("seeds")) s.seeds = parse_seeds(doc["seeds"]);
  if (doc.contains("output")) s.output = get_as<std::string>(doc, "output", "sweep");
  for (const auto& p : doc["problems"]) {
    SweepConfig::ProblemAxis axis;
    if (p.is_string()) {
      axis.name = p.get<std::string>();
    } else {
      check_keys(p, {"name", "parameters", "reference"}, "sweep problem");
      axis.name = get_as<std::string>(p, "name", "sweep problem");
      if (p.contains("reference") && !p["reference"].is_null()) {
        axis.reference = resolve_path(get_as<std::string>(p, "reference", "sweep problem"), base_dir);
      }
      if (p.contains("parameters")) {
        const json& ps = p["parameters"];
        if (ps.is_array()) {
          for (const auto& one : ps) axis.parameter_sets.push_back(parse_parameters(one, "sweep parameters"));
        } else {
          axis.parameter_sets.push_back(parse_parameters(ps, "sweep parameters"));
        }
      }
    }
    if (axis.parameter_sets.empty()) axis.parameter_sets.emplace_back();
    s.problems.push_back(std::move(axis));
  }
  for (const auto& a : doc["architectures"]) s.architectures.push_back(parse_architecture(a));

  // Validate every cell up front.
  expand_sweep(s, {});
  return s;
}

namespace {

std::string parameter_label(const std::map<std::string, double>& params) {
  if (params.empty()) return "default";
  std::string out;
  for (const auto& [k, v] : params) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    out += (out.empty() ? "" : ",") + k + "=" + os.str();
  }
  return out;
}

std::string safe(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-') ? ch : '_';
  return out;
}

}  // namespace

std::vector<SweepCell> expand_sweep(const SweepConfig& s, const fs::path& root) {
  std::vector<SweepCell> cells;
  for (const auto& axis : s.problems) {
    for (const auto& ps : axis.parameter_sets) {
      for (const auto& a : s.architectures) {
        json cell = json::object();
        cell["problem"] = json{{"name", axis.name}, {"parameters", ps}};
        if (!axis.reference.empty()) cell["problem"]["reference"] = axis.reference;
        cell["architecture"] = architecture_json(a);
        cell["seeds"] = s.seeds;
        cell["training"] = s.training;
        SweepCell sc;
        sc.config = parse_run_config(cell, {});
        sc.parameter_label = parameter_label(ps);
        sc.directory = root / safe(axis.name + "_" + sc.parameter_label) / safe(a.name);
        sc.config.output = sc.directory.string();
        cells.push_back(std::move(sc));
      }
    }
  }
  return cells;
}

}  // namespace pgcan::cli
