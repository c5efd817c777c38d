#include <mdots/evolution.hpp>

#include <mdots/parallel.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mdots::evolution {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sanitize(double v) { return std::isfinite(v) ? v : kInf; }

}  // namespace

int DeConfig::resolved_population(Eigen::Index dim) const {
  return population > 0 ? population : std::max(15 * static_cast<int>(dim), 30);
}

void DeConfig::validate() const {
  if (population != 0 && population < 4) throw std::invalid_argument("DeConfig: population must be >= 4");
  if (!(mutation > 0.0 && mutation <= 2.0)) throw std::invalid_argument("DeConfig: mutation factor must be in (0, 2]");
  if (!(crossover >= 0.0 && crossover <= 1.0)) throw std::invalid_argument("DeConfig: crossover rate must be in [0, 1]");
  if (max_generations < 0) throw std::invalid_argument("DeConfig: max_generations must be >= 0");
  if (window < 1) throw std::invalid_argument("DeConfig: window must be >= 1");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("DeConfig: tolerance must be >= 0");
}

DeResult de_minimize(const Objective& objective, const Box& bounds, const DeConfig& config) {
  config.validate();
  const Eigen::Index dim = bounds.dim();
  if (dim < 1) throw std::invalid_argument("de_minimize: empty box");
  if (!bounds.lower.allFinite() || !bounds.upper.allFinite()) {
    throw std::invalid_argument("de_minimize: bounds must be finite");
  }
  const int np = config.resolved_population(dim);

  Rng rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, np - 1);
  std::uniform_int_distribution<Eigen::Index> pick_dim(0, dim - 1);

  Matrix population(dim, np);
  for (int i = 0; i < np; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      population(j, i) = bounds.lower[j] + unit(rng) * (bounds.upper[j] - bounds.lower[j]);
    }
  }

  DeResult result;
  std::vector<double> fitness(static_cast<std::size_t>(np));
  parallel_for(static_cast<std::size_t>(np), config.workers, [&](std::size_t i) {
    fitness[i] = sanitize(objective(population.col(static_cast<Eigen::Index>(i))));
  });
  result.evaluations = np;

  int best = 0;
  for (int i = 1; i < np; ++i) {
    if (fitness[static_cast<std::size_t>(i)] < fitness[static_cast<std::size_t>(best)]) best = i;
  }
  result.history.push_back(fitness[static_cast<std::size_t>(best)]);

  Matrix trials(dim, np);
  std::vector<double> trial_fitness(static_cast<std::size_t>(np));
  for (int gen = 1; gen <= config.max_generations; ++gen) {
    // Trial generation consumes the random stream sequentially so results do
    // not depend on how evaluations are scheduled.
    for (int i = 0; i < np; ++i) {
      int r1, r2, r3;
      do r1 = pick(rng); while (r1 == i);
      do r2 = pick(rng); while (r2 == i || r2 == r1);
      do r3 = pick(rng); while (r3 == i || r3 == r1 || r3 == r2);
      const Eigen::Index forced = pick_dim(rng);
      for (Eigen::Index j = 0; j < dim; ++j) {
        double v = population(j, i);
        if (j == forced || unit(rng) < config.crossover) {
          v = population(j, r1) + config.mutation * (population(j, r2) - population(j, r3));
          const double lo = bounds.lower[j];
          const double hi = bounds.upper[j];
          if (v < lo) v = lo + (lo - v);
          if (v > hi) v = hi - (v - hi);
          if (v < lo || v > hi) v = lo + unit(rng) * (hi - lo);
        }
        trials(j, i) = v;
      }
    }

    parallel_for(static_cast<std::size_t>(np), config.workers, [&](std::size_t i) {
      trial_fitness[i] = sanitize(objective(trials.col(static_cast<Eigen::Index>(i))));
    });
    result.evaluations += np;

    for (int i = 0; i < np; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (trial_fitness[ui] <= fitness[ui]) {
        population.col(i) = trials.col(i);
        fitness[ui] = trial_fitness[ui];
        if (fitness[ui] < fitness[static_cast<std::size_t>(best)]) best = i;
      }
    }
    result.history.push_back(fitness[static_cast<std::size_t>(best)]);
    result.generations = gen;

    if (gen >= config.window) {
      const double then = result.history[static_cast<std::size_t>(gen - config.window)];
      const double now = result.history.back();
      if (std::abs(then - now) < config.tolerance || (then == kInf && now == kInf)) break;
    }
  }

  result.z_best = population.col(best);
  result.f_best = fitness[static_cast<std::size_t>(best)];
  return result;
}

void PenaltySpec::validate() const {
  if (!(base > 0.0)) throw std::invalid_argument("PenaltySpec: base must be positive");
  if (!(bound_weight >= 0.0)) throw std::invalid_argument("PenaltySpec: bound_weight must be >= 0");
}

double relative_bound_violation(const Box& bounds, const Vector& y) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const double width = bounds.upper[k] - bounds.lower[k];
    const double below = bounds.lower[k] - y[k];
    const double above = y[k] - bounds.upper[k];
    total += std::max({0.0, below, above}) / width;
  }
  return total;
}

PenalizedValue evaluate_penalized(std::span<const mda::Discipline> evaluators,
                                  const problems::MdoProblem& problem, const PenaltySpec& penalty,
                                  const mda::MdaConfig& mda_config, const Vector& z) {
  PenalizedValue out;
  out.state = mda::gauss_seidel_solve(evaluators, z, problem.initial_coupling(), mda_config);
  const bool have_state = out.state.y.size() == problem.coupling_dim() && out.state.y.allFinite();
  out.objective = have_state ? problem.objective(z, out.state.y) : std::numeric_limits<double>::quiet_NaN();

  if (!out.state.converged()) {
    out.penalized = true;
    out.value = penalty.base + (std::isfinite(out.objective) ? std::max(out.objective, 0.0) : 0.0);
    return out;
  }
  out.bound_violation = relative_bound_violation(problem.y_bounds, out.state.y);
  if (!std::isfinite(out.objective)) {
    out.penalized = true;
    out.value = penalty.base + penalty.bound_weight * out.bound_violation;
    return out;
  }
  if (out.bound_violation > 0.0) {
    out.penalized = true;
    out.value = out.objective + penalty.base + penalty.bound_weight * out.bound_violation;
    return out;
  }
  out.value = out.objective;
  return out;
}

Objective penalized_mdo_objective(std::vector<mda::Discipline> evaluators,
                                  const problems::MdoProblem& problem, PenaltySpec penalty,
                                  mda::MdaConfig mda_config) {
  penalty.validate();
  mda_config.validate();
  return [evaluators = std::move(evaluators), problem, penalty, mda_config](const Vector& z) {
    return evaluate_penalized(evaluators, problem, penalty, mda_config, z).value;
  };
}

}  // namespace mdots::evolution
