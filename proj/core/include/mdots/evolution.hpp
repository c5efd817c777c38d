#pragma once

// Differential evolution (DE/rand/1/bin) over a box, and the penalized MDO
// objective that maps every candidate design to a finite value.

#include <mdots/mda.hpp>
#include <mdots/problems.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mdots::evolution {

struct DeConfig {
  /// 0 selects max(15 * dim, 30).
  int population = 0;
  double mutation = 0.7;   // F
  double crossover = 0.9;  // CR
  int max_generations = 300;
  /// Stop once the best value moved less than `tolerance` over `window`
  /// generations.
  int window = 40;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  /// Threads used to evaluate the trial vectors of one generation.
  int workers = 1;

  [[nodiscard]] int resolved_population(Eigen::Index dim) const;
  void validate() const;

  bool operator==(const DeConfig&) const = default;
};

struct DeResult {
  Vector z_best;
  double f_best = 0.0;
  /// Best value after initialization (entry 0) and after each generation.
  std::vector<double> history;
  int generations = 0;
  long evaluations = 0;
};

using Objective = std::function<double(const Vector& z)>;

/// Minimizes `objective` over `bounds`. Trial components leaving the box are
/// reflected at the face (uniform redraw if still outside). Non-finite
/// objective values count as +infinity.
DeResult de_minimize(const Objective& objective, const Box& bounds, const DeConfig& config);

struct PenaltySpec {
  double base = 1000.0;
  double bound_weight = 100.0;

  void validate() const;
  bool operator==(const PenaltySpec&) const = default;
};

struct PenalizedValue {
  double value = 0.0;
  bool penalized = false;
  /// f_obj at the final coupling state (NaN if unavailable).
  double objective = 0.0;
  /// Sum over coupling components of the bound violation relative to the
  /// component's bound width.
  double bound_violation = 0.0;
  mda::CouplingState state;
};

/// Penalized objective at one candidate:
///   converged, y in Y      -> f_obj(z, y*)
///   converged, y outside Y -> f_obj + base + bound_weight * violation
///   not converged          -> base + max(f_obj(last iterate), 0), or base
///                             when f_obj is not finite
PenalizedValue evaluate_penalized(std::span<const mda::Discipline> evaluators,
                                  const problems::MdoProblem& problem, const PenaltySpec& penalty,
                                  const mda::MdaConfig& mda_config, const Vector& z);

/// Wraps evaluate_penalized as a DE objective. Every candidate starts its MDA
/// from the midpoint of Y.
Objective penalized_mdo_objective(std::vector<mda::Discipline> evaluators,
                                  const problems::MdoProblem& problem, PenaltySpec penalty,
                                  mda::MdaConfig mda_config);

double relative_bound_violation(const Box& bounds, const Vector& y);

}  // namespace mdots::evolution
