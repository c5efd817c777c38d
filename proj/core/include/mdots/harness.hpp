#pragma once

// Experiment configuration, run-record persistence, replicated studies and
// report generation behind the `mdots` command-line tool.

#include <mdots/mdo_ts.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mdots::harness {

inline constexpr int kSchemaVersion = 1;

struct ExperimentConfig {
  std::string problem = "sellar";  // toy | sellar | external
  /// Path to the external problem description (problem == "external").
  std::string external_cmd;
  int n_doe = 5;
  int n_iter = 10;
  int repeat = 1;
  std::uint64_t seed = 0;
  int features = pathwise::kDefaultFeatureCount;
  double mda_tol = 1e-2;
  int mda_max_iter = 100;
  double reference_mda_tol = 1e-10;
  int reference_mda_max_iter = 200;
  double nugget = gp::kDefaultNugget;
  int gp_restarts = 4;
  bool isotropic = false;
  int de_population = 0;
  double de_mutation = 0.7;
  double de_crossover = 0.9;
  int de_generations = 300;
  int de_window = 40;
  double de_tol = 1e-8;
  double penalty_base = 1000.0;
  double penalty_bound_weight = 100.0;
  std::string out = "runs";
  /// Replicate worker threads; 0 resolves from MDOTS_WORKERS or the core count.
  int workers = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  [[nodiscard]] ts::TsConfig ts_config() const;

  bool operator==(const ExperimentConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(field) {}
  [[nodiscard]] const std::string& field() const { return field_; }

 private:
  std::string field_;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Worker count: explicit value, else MDOTS_WORKERS, else hardware threads.
int resolve_workers(int requested);

problems::MdoProblem make_problem(const ExperimentConfig& config);

struct ReferenceSolution {
  std::string problem;
  Vector z;
  double objective = 0.0;
  std::string provenance;
};

/// Shipped reference solutions for the built-in problems.
std::optional<ReferenceSolution> builtin_reference(const std::string& problem);
/// Reference by global DE on the exact MDA (tolerance from the config).
ReferenceSolution compute_reference(const problems::MdoProblem& problem, const ExperimentConfig& config);

/// One persisted replicate: resolved config, replicate index, record and its
/// assessment against the reference.
struct StoredRun {
  int replicate = 0;
  ExperimentConfig config;
  ts::RunRecord record;
  std::optional<double> reference_objective;
  bool converged = false;
};

std::string to_ndjson(const StoredRun& run);
StoredRun from_ndjson(const std::string& text);
/// Atomic: writes a temporary file and renames it into place.
void write_record(const std::filesystem::path& path, const StoredRun& run);
StoredRun read_record(const std::filesystem::path& path);
std::filesystem::path record_path(const std::filesystem::path& out, int replicate);

/// Runs replicate `replicate` of `config` (seeds from seed + replicate).
StoredRun run_replicate(const ExperimentConfig& config, int replicate,
                        const std::optional<ReferenceSolution>& reference);
/// Re-runs a stored replicate from its embedded config and seeds.
StoredRun replay(const StoredRun& stored);

struct StudySummary {
  int n_runs = 0;
  int n_converged = 0;
  /// Means over converged runs.
  Vector mean_z;
  /// Mean of |100 (x_ref - x) / x_ref| per design variable; NaN where x_ref = 0.
  Vector mean_abs_rel_error_z_pct;
  double mean_objective = 0.0;
  double mean_abs_rel_error_objective_pct = 0.0;
  ReferenceSolution reference;
};

/// Statistics over converged runs only; order of `runs` is irrelevant.
StudySummary summarize(const std::vector<StoredRun>& runs, const ReferenceSolution& reference);
std::vector<std::string> summary_columns(Eigen::Index design_dim);
std::string summary_csv(const StudySummary& summary);

struct StudyResult {
  std::vector<StoredRun> runs;
  StudySummary summary;
  std::vector<std::string> failures;
};

/// Runs `config.repeat` replicates on the worker pool and writes
/// <out>/run_<k>.ndjson plus <out>/summary.csv.
StudyResult run_study(const ExperimentConfig& config, const ReferenceSolution& reference);

struct ReportResult {
  int records = 0;
  int skipped = 0;
  std::vector<std::filesystem::path> traces;
  std::filesystem::path summary;
};

/// Reads every run_*.ndjson in `dir` and writes trace_<k>.csv per record and
/// summary.csv. Throws std::runtime_error when no records are present.
ReportResult generate_report(const std::filesystem::path& dir, std::ostream& warnings);

inline constexpr const char* kTraceHeader =
    "iteration,discipline,random_value,best_random_value,refined";

}  // namespace mdots::harness
