#pragma once

#include "pgcan/architectures.hpp"
#include "pgcan/errors.hpp"
#include "pgcan/problems.hpp"
#include "pgcan/training.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pgcan::cli {

/// Bad command line or config: unknown names, malformed JSON, refused
/// output directory. Maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct ProblemSpec {
  std::string name = "helmholtz";
  std::map<std::string, double> parameters;
  /// Optional lattice reference CSV (required for a meaningful LDC L2_rel).
  std::string reference;
};

struct RunConfig {
  ProblemSpec problem;
  ArchitectureConfig architecture;
  TrainConfig training;
  std::vector<std::uint64_t> seeds{0};
  /// Run directory; relative paths resolve against PGCAN_OUTPUT_ROOT.
  std::string output;
};

/// Training presets: "paper" (50k epochs, 10 seeds) and "smoke" (2k epochs,
/// 1 seed, 2k collocation points).
const std::vector<std::string>& profile_names();
nlohmann::json profile_json(const std::string& name);

/// Parses a config document. An optional "profile" key is applied first and
/// explicit fields override it. Paths in "problem.reference" resolve against
/// `base_dir`. Unset fields take problem/architecture defaults. Throws
/// UsageError on unknown keys, names or malformed values.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Fully resolved canonical form: every field explicit, keys sorted. The
/// output directory is not part of it.
nlohmann::json to_json(const RunConfig& config);
std::string canonical_dump(const RunConfig& config);

/// FNV-1a 64 over the canonical dump, as 16 hex digits. A reference file
/// contributes its contents rather than its path.
std::string config_hash(const RunConfig& config);

/// Builds the problem (with its reference attached) and checks the
/// architecture against the registry without training anything.
std::unique_ptr<PDEProblem> build_problem(const RunConfig& config);
std::unique_ptr<Model> build_model(const RunConfig& config, const PDEProblem& problem, std::uint64_t seed);

/// Output root: $PGCAN_OUTPUT_ROOT or the working directory.
std::filesystem::path output_root();
std::filesystem::path resolve_output(const std::string& path);

/// A sweep is the cross product problems x parameter sets x architectures,
/// every cell sharing the training section and seeds.
struct SweepCell {
  RunConfig config;
  std::string parameter_label;
  std::filesystem::path directory;
};
struct SweepConfig {
  /// Training section as written (profile merged); each cell resolves
  /// problem-dependent defaults from it.
  nlohmann::json training = nlohmann::json::object();
  std::vector<std::uint64_t> seeds{0};
  std::string output;
  struct ProblemAxis {
    std::string name;
    std::vector<std::map<std::string, double>> parameter_sets;
    std::string reference;
  };
  std::vector<ProblemAxis> problems;
  std::vector<ArchitectureConfig> architectures;
};
SweepConfig parse_sweep_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
std::vector<SweepCell> expand_sweep(const SweepConfig& sweep, const std::filesystem::path& root);

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace pgcan::cli
