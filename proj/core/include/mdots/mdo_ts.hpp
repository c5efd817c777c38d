#pragma once

// MDO with Thompson sampling over partitioned GP surrogates.
//
// Each discipline output gets its own GP. Every inner step draws fresh
// approximate posterior paths for all disciplines, minimizes the resulting
// random MDO problem with DE, evaluates one true discipline at the proposed
// (z, y_(m)) and refits that discipline's surrogate. After the loop the
// surrogate MDO problem (posterior means) gives the returned design.

#include <mdots/evolution.hpp>
#include <mdots/gp.hpp>
#include <mdots/mda.hpp>
#include <mdots/pathwise.hpp>
#include <mdots/problems.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace mdots::ts {

struct TsConfig {
  gp::FitOptions gp;
  int features = pathwise::kDefaultFeatureCount;
  /// DE settings; the seed field is ignored, each solve derives its own.
  evolution::DeConfig de;
  mda::MdaConfig mda = mda::MdaConfig::surrogate();
  /// MDA used on the true disciplines to score the final design.
  mda::MdaConfig reference_mda = mda::MdaConfig::reference();
  evolution::PenaltySpec penalty;
};

/// Independent random streams of one run.
struct RunSeeds {
  std::uint64_t doe = 0;    // LHS and GP restarts
  std::uint64_t paths = 0;  // feature maps and path noise
  std::uint64_t de = 0;     // seeds of the individual DE solves

  /// Replicate k of a study: base + k, base + 10^6 + k, base + 2 * 10^6 + k.
  static RunSeeds from_base(std::uint64_t base, int replicate);

  bool operator==(const RunSeeds&) const = default;
};

struct RefinementEntry {
  int iteration = 0;
  int discipline = 0;
  Vector input;
  Vector target;
};

class SurrogateSet {
 public:
  SurrogateSet(const problems::MdoProblem& problem, std::vector<problems::TrainingSet> data,
               gp::FitOptions options, Rng& rng);

  [[nodiscard]] int discipline_count() const { return static_cast<int>(data_.size()); }
  [[nodiscard]] const problems::TrainingSet& data(int discipline) const;
  [[nodiscard]] const std::vector<std::shared_ptr<const gp::TrainedSurrogate>>& surrogates(
      int discipline) const;
  [[nodiscard]] const std::vector<RefinementEntry>& log() const { return log_; }

  /// Adds one observation to a discipline and refits all of its outputs,
  /// warm-started at the previous hyperparameters. On fit failure the point
  /// is discarded, the previous surrogates are kept and the error rethrown.
  void refine(int discipline, const Vector& input, const Vector& target, int iteration, Rng& rng);

  /// One path per scalar output, per discipline.
  [[nodiscard]] std::vector<std::vector<pathwise::PathSample>> draw_paths(int feature_count,
                                                                          Rng& rng) const;

 private:
  std::vector<std::shared_ptr<const gp::TrainedSurrogate>> fit_discipline(
      const problems::TrainingSet& set, const std::vector<std::shared_ptr<const gp::TrainedSurrogate>>* previous,
      Rng& rng) const;

  gp::FitOptions options_;
  std::vector<problems::TrainingSet> data_;
  std::vector<std::vector<std::shared_ptr<const gp::TrainedSurrogate>>> surrogates_;
  std::vector<RefinementEntry> log_;
};

/// Disciplines evaluated through posterior means.
std::vector<mda::Discipline> mean_evaluators(const problems::MdoProblem& problem,
                                             const SurrogateSet& surrogates);
/// Disciplines evaluated through sample paths (paths[i][k]: output k of i).
std::vector<mda::Discipline> path_evaluators(const problems::MdoProblem& problem,
                                             std::vector<std::vector<pathwise::PathSample>> paths);

struct MdoSolution {
  Vector z;
  /// Coupling state of the MDA re-solved at z.
  mda::CouplingState state;
  double value = 0.0;
  evolution::DeResult de;
};

/// DE over Z of the penalized objective built on `evaluators`, followed by one
/// MDA at the winner. Used for both the random and the surrogate problem.
MdoSolution solve_penalized_mdo(std::span<const mda::Discipline> evaluators,
                                const problems::MdoProblem& problem,
                                const evolution::PenaltySpec& penalty,
                                const evolution::DeConfig& de_config,
                                const mda::MdaConfig& mda_config);

MdoSolution solve_random_mdo(std::vector<std::vector<pathwise::PathSample>> paths,
                             const problems::MdoProblem& problem, const evolution::PenaltySpec& penalty,
                             const evolution::DeConfig& de_config, const mda::MdaConfig& mda_config);

MdoSolution solve_surrogate_mdo(const SurrogateSet& surrogates, const problems::MdoProblem& problem,
                                const evolution::PenaltySpec& penalty,
                                const evolution::DeConfig& de_config,
                                const mda::MdaConfig& mda_config);

/// |(f_ref - f_found) / f_ref| < 0.01. Throws std::invalid_argument when
/// f_ref == 0.
bool convergence_check(double f_ref, double f_found);

struct IterationEntry {
  int iteration = 0;   // 1-based outer iteration n
  int discipline = 0;  // 0-based discipline index m
  Vector z_proposal;
  /// Full coupling vector of the random MDA at the proposal, clamped into Y.
  Vector y_proposal;
  /// The coupling inputs y_(m) the true discipline was evaluated at.
  Vector y_inputs;
  /// True discipline output; empty when the evaluation failed.
  Vector y_true;
  double random_value = 0.0;
  mda::MdaStatus random_status = mda::MdaStatus::Converged;
  bool clamped = false;
  bool refined = false;
  std::string message;

  bool operator==(const IterationEntry&) const;
};

struct PhaseTimes {
  double doe = 0.0;
  double loop = 0.0;
  double final_solve = 0.0;
  double total = 0.0;
};

struct RunRecord {
  std::string problem_id;
  RunSeeds seeds;
  int n_doe = 0;
  int n_iter = 0;
  std::vector<problems::TrainingSet> doe;
  std::vector<std::string> warnings;
  std::vector<IterationEntry> iterations;
  /// True evaluations per discipline (DoE plus refinements).
  std::vector<int> evaluations;
  /// Training set sizes of the final surrogates.
  std::vector<int> training_sizes;

  Vector z_final;
  double surrogate_objective = 0.0;
  Vector y_surrogate;
  mda::MdaStatus surrogate_status = mda::MdaStatus::Converged;

  /// f_obj at z_final after an exact MDA on the true disciplines.
  double true_objective = 0.0;
  Vector y_true;
  mda::MdaStatus true_status = mda::MdaStatus::Converged;

  PhaseTimes wall;

  /// Field-wise equality ignoring wall-clock times.
  bool same_result(const RunRecord& other) const;
};

RunRecord run_mdo_ts(const problems::MdoProblem& problem, int n_doe, int n_iter,
                     const TsConfig& config, const RunSeeds& seeds);

}  // namespace mdots::ts
