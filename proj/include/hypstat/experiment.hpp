#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypstat/group.hpp"

namespace hypstat {

inline constexpr const char* kExperimentSchema = "hypstat.experiment/1";
inline constexpr const char* kManifestSchema = "hypstat.manifest/1";
inline constexpr const char* kVersion = "0.1.0";

// Thrown for invalid specs (exit code 2), as opposed to task failures.
class SpecError : public Error {
 public:
  using Error::Error;
};

struct Knobs {
  int cylinder_depth = 4;
  int horizon = 12;
  int alternatives = 4;
  int validate_depth = 10;
  int green_truncation = 12;
  double green_tolerance = 1e-6;
  std::optional<double> T_max;
  std::vector<double> t_grid;  // explicit T grid; overrides T_max
  int grid_points = 8;
  std::size_t ball_cap = 5'000'000;
  std::string mode = "fast";
  double slack = 0.0;
  int s_points = 11;
  int similarity_samples = 60;
  std::uint64_t seed = 1;
};

struct ExperimentSpec {
  std::filesystem::path source;  // spec file; relative paths resolve against its directory
  nlohmann::json group;          // {"free_rank": k} or {"automaton": path}
  nlohmann::json d;
  nlohmann::json d_star;
  std::vector<std::string> tasks;  // expanded, in dependency order
  Knobs knobs;
  std::filesystem::path output;
  std::filesystem::path cache;

  bool wants(const std::string& task) const;
  // Canonical JSON with file contents replaced by their SHA-256; the spec hash.
  nlohmann::json canonical() const;
  std::string hash() const;
};

// Parses and validates a spec (unknown keys, ranges, referenced files).
ExperimentSpec parse_experiment_spec(const nlohmann::json& j, const std::filesystem::path& source);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

// Cache root: the spec's "cache" key, else $HYPSTAT_CACHE, else ~/.cache/hypstat.
std::filesystem::path default_cache_root();

struct TaskStatus {
  std::string name;
  bool ok = true;
  std::string error;
};

struct RunResult {
  nlohmann::json manifest;
  std::vector<TaskStatus> tasks;
  bool ok() const;
};

// Builds the coding and both metrics (filling the Green cache) without running
// tasks; returns their descriptions. Failures are SpecErrors.
nlohmann::json prepare_experiment(const ExperimentSpec& spec);

// Executes the tasks and writes reports plus manifest.json into spec.output.
RunResult run_experiment(const ExperimentSpec& spec);

// Comparison of tau, sigma^2 and KS between two manifests; throws SpecError
// on schema mismatch or incomparable groups.
nlohmann::json diff_manifests(const std::filesystem::path& a, const std::filesystem::path& b);
std::string format_diff(const nlohmann::json& diff);

// Writes plot_<kind>.csv next to the report (or into out_dir) and returns its path.
std::filesystem::path emit_plot_data(const std::filesystem::path& report, const std::string& kind,
                                     const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace hypstat
