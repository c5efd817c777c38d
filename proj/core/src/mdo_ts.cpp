#include <mdots/mdo_ts.hpp>

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace mdots::ts {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

bool same_double(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool same_vector(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!same_double(a[i], b[i])) return false;
  }
  return true;
}

bool same_matrix(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!same_double(a.data()[i], b.data()[i])) return false;
  }
  return true;
}

}  // namespace

RunSeeds RunSeeds::from_base(std::uint64_t base, int replicate) {
  const auto k = static_cast<std::uint64_t>(replicate);
  return {base + k, base + 1'000'000ULL + k, base + 2'000'000ULL + k};
}

SurrogateSet::SurrogateSet(const problems::MdoProblem& problem,
                           std::vector<problems::TrainingSet> data, gp::FitOptions options, Rng& rng)
    : options_(std::move(options)), data_(std::move(data)) {
  if (static_cast<int>(data_.size()) != problem.discipline_count()) {
    throw std::invalid_argument("SurrogateSet: one training set per discipline required");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto& d = problem.disciplines[i];
    if (data_[i].inputs.cols() != problem.design_dim() + static_cast<Eigen::Index>(d.inputs.size()) ||
        data_[i].targets.cols() != static_cast<Eigen::Index>(d.outputs.size())) {
      throw std::invalid_argument("SurrogateSet: training set shape does not match discipline '" + d.name + "'");
    }
    surrogates_.push_back(fit_discipline(data_[i], nullptr, rng));
  }
}

const problems::TrainingSet& SurrogateSet::data(int discipline) const {
  return data_.at(static_cast<std::size_t>(discipline));
}

const std::vector<std::shared_ptr<const gp::TrainedSurrogate>>& SurrogateSet::surrogates(
    int discipline) const {
  return surrogates_.at(static_cast<std::size_t>(discipline));
}

std::vector<std::shared_ptr<const gp::TrainedSurrogate>> SurrogateSet::fit_discipline(
    const problems::TrainingSet& set,
    const std::vector<std::shared_ptr<const gp::TrainedSurrogate>>* previous, Rng& rng) const {
  std::vector<std::shared_ptr<const gp::TrainedSurrogate>> out;
  for (Eigen::Index k = 0; k < set.targets.cols(); ++k) {
    gp::FitOptions opts = options_;
    if (previous) opts.warm_start = (*previous)[static_cast<std::size_t>(k)]->params();
    out.push_back(std::make_shared<const gp::TrainedSurrogate>(
        gp::fit(set.inputs, set.targets.col(k), opts, rng)));
  }
  return out;
}

void SurrogateSet::refine(int discipline, const Vector& input, const Vector& target, int iteration,
                          Rng& rng) {
  const auto i = static_cast<std::size_t>(discipline);
  problems::TrainingSet grown = data_.at(i);
  if (input.size() != grown.inputs.cols() || target.size() != grown.targets.cols()) {
    throw std::invalid_argument("SurrogateSet::refine: observation shape mismatch");
  }
  grown.inputs.conservativeResize(grown.inputs.rows() + 1, Eigen::NoChange);
  grown.targets.conservativeResize(grown.targets.rows() + 1, Eigen::NoChange);
  grown.inputs.row(grown.inputs.rows() - 1) = input.transpose();
  grown.targets.row(grown.targets.rows() - 1) = target.transpose();

  auto refit = fit_discipline(grown, &surrogates_[i], rng);
  data_[i] = std::move(grown);
  surrogates_[i] = std::move(refit);
  log_.push_back({iteration, discipline, input, target});
}

std::vector<std::vector<pathwise::PathSample>> SurrogateSet::draw_paths(int feature_count,
                                                                        Rng& rng) const {
  std::vector<std::vector<pathwise::PathSample>> paths;
  for (const auto& outputs : surrogates_) {
    std::vector<pathwise::PathSample> per_output;
    for (const auto& s : outputs) per_output.push_back(pathwise::draw_path(s, feature_count, rng));
    paths.push_back(std::move(per_output));
  }
  return paths;
}

std::vector<mda::Discipline> mean_evaluators(const problems::MdoProblem& problem,
                                             const SurrogateSet& surrogates) {
  std::vector<mda::Discipline> out;
  for (int i = 0; i < problem.discipline_count(); ++i) {
    const auto& original = problem.disciplines[static_cast<std::size_t>(i)];
    mda::Discipline d;
    d.name = original.name + "~mean";
    d.inputs = original.inputs;
    d.outputs = original.outputs;
    d.concurrent_safe = true;
    d.evaluate = [models = surrogates.surrogates(i)](const Vector& z, const Vector& y_in) {
      const Vector x = concat(z, y_in);
      Vector y(static_cast<Eigen::Index>(models.size()));
      for (std::size_t k = 0; k < models.size(); ++k) {
        y[static_cast<Eigen::Index>(k)] = gp::posterior_mean(*models[k], x);
      }
      return mda::DisciplineOutput::success(std::move(y));
    };
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<mda::Discipline> path_evaluators(const problems::MdoProblem& problem,
                                             std::vector<std::vector<pathwise::PathSample>> paths) {
  if (static_cast<int>(paths.size()) != problem.discipline_count()) {
    throw std::invalid_argument("path_evaluators: one path set per discipline required");
  }
  std::vector<mda::Discipline> out;
  for (int i = 0; i < problem.discipline_count(); ++i) {
    const auto& original = problem.disciplines[static_cast<std::size_t>(i)];
    auto& per_output = paths[static_cast<std::size_t>(i)];
    if (per_output.size() != original.outputs.size()) {
      throw std::invalid_argument("path_evaluators: one path per scalar output required");
    }
    mda::Discipline d;
    d.name = original.name + "^path";
    d.inputs = original.inputs;
    d.outputs = original.outputs;
    d.concurrent_safe = true;
    d.evaluate = [draws = std::move(per_output)](const Vector& z, const Vector& y_in) {
      const Vector x = concat(z, y_in);
      Vector y(static_cast<Eigen::Index>(draws.size()));
      for (std::size_t k = 0; k < draws.size(); ++k) y[static_cast<Eigen::Index>(k)] = draws[k](x);
      return mda::DisciplineOutput::success(std::move(y));
    };
    out.push_back(std::move(d));
  }
  return out;
}

MdoSolution solve_penalized_mdo(std::span<const mda::Discipline> evaluators,
                                const problems::MdoProblem& problem,
                                const evolution::PenaltySpec& penalty,
                                const evolution::DeConfig& de_config,
                                const mda::MdaConfig& mda_config) {
  std::vector<mda::Discipline> owned(evaluators.begin(), evaluators.end());
  evolution::DeConfig de = de_config;
  for (const auto& d : owned) {
    if (!d.concurrent_safe) de.workers = 1;
  }
  const auto objective = evolution::penalized_mdo_objective(owned, problem, penalty, mda_config);
  MdoSolution sol;
  sol.de = evolution::de_minimize(objective, problem.z_bounds, de);
  sol.z = sol.de.z_best;
  const auto at_best = evolution::evaluate_penalized(owned, problem, penalty, mda_config, sol.z);
  sol.state = at_best.state;
  sol.value = at_best.value;
  return sol;
}

MdoSolution solve_random_mdo(std::vector<std::vector<pathwise::PathSample>> paths,
                             const problems::MdoProblem& problem, const evolution::PenaltySpec& penalty,
                             const evolution::DeConfig& de_config, const mda::MdaConfig& mda_config) {
  const auto evaluators = path_evaluators(problem, std::move(paths));
  return solve_penalized_mdo(evaluators, problem, penalty, de_config, mda_config);
}

MdoSolution solve_surrogate_mdo(const SurrogateSet& surrogates, const problems::MdoProblem& problem,
                                const evolution::PenaltySpec& penalty,
                                const evolution::DeConfig& de_config,
                                const mda::MdaConfig& mda_config) {
  const auto evaluators = mean_evaluators(problem, surrogates);
  return solve_penalized_mdo(evaluators, problem, penalty, de_config, mda_config);
}

bool convergence_check(double f_ref, double f_found) {
  if (f_ref == 0.0) throw std::invalid_argument("convergence_check: reference objective is zero");
  return std::abs((f_ref - f_found) / f_ref) < 0.01;
}

bool IterationEntry::operator==(const IterationEntry& o) const {
  return iteration == o.iteration && discipline == o.discipline && same_vector(z_proposal, o.z_proposal) &&
         same_vector(y_proposal, o.y_proposal) && same_vector(y_inputs, o.y_inputs) &&
         same_vector(y_true, o.y_true) && same_double(random_value, o.random_value) &&
         random_status == o.random_status && clamped == o.clamped && refined == o.refined &&
         message == o.message;
}

bool RunRecord::same_result(const RunRecord& o) const {
  if (problem_id != o.problem_id || !(seeds == o.seeds) || n_doe != o.n_doe || n_iter != o.n_iter) return false;
  if (doe.size() != o.doe.size()) return false;
  for (std::size_t i = 0; i < doe.size(); ++i) {
    if (!same_matrix(doe[i].inputs, o.doe[i].inputs) || !same_matrix(doe[i].targets, o.doe[i].targets)) {
      return false;
    }
  }
  return warnings == o.warnings && iterations == o.iterations && evaluations == o.evaluations &&
         training_sizes == o.training_sizes && same_vector(z_final, o.z_final) &&
         same_double(surrogate_objective, o.surrogate_objective) && same_vector(y_surrogate, o.y_surrogate) &&
         surrogate_status == o.surrogate_status && same_double(true_objective, o.true_objective) &&
         same_vector(y_true, o.y_true) && true_status == o.true_status;
}

RunRecord run_mdo_ts(const problems::MdoProblem& problem, int n_doe, int n_iter,
                     const TsConfig& config, const RunSeeds& seeds) {
  if (n_doe < 2) throw std::invalid_argument("run_mdo_ts: n_doe must be >= 2");
  if (n_iter < 0) throw std::invalid_argument("run_mdo_ts: n_iter must be >= 0");
  if (config.features < 1) throw std::invalid_argument("run_mdo_ts: feature count must be >= 1");
  problem.validate();
  config.de.validate();
  config.mda.validate();
  config.reference_mda.validate();
  config.penalty.validate();

  const auto t_start = Clock::now();
  RunRecord record;
  record.problem_id = problem.id;
  record.seeds = seeds;
  record.n_doe = n_doe;
  record.n_iter = n_iter;

  Rng doe_rng(seeds.doe);
  Rng path_rng(seeds.paths);
  Rng de_seed_rng(seeds.de);
  const auto next_de = [&] {
    evolution::DeConfig de = config.de;
    de.seed = de_seed_rng();
    return de;
  };

  problems::DoeResult doe = problems::initial_doe_training_sets(problem, n_doe, doe_rng);
  record.doe = doe.sets;
  record.warnings = doe.warnings;
  record.evaluations.assign(static_cast<std::size_t>(problem.discipline_count()), n_doe);
  SurrogateSet surrogates(problem, std::move(doe.sets), config.gp, doe_rng);
  record.wall.doe = seconds_since(t_start);

  const auto t_loop = Clock::now();
  for (int n = 1; n <= n_iter; ++n) {
    for (int m = 0; m < problem.discipline_count(); ++m) {
      const mda::Discipline& disc = problem.disciplines[static_cast<std::size_t>(m)];
      IterationEntry entry;
      entry.iteration = n;
      entry.discipline = m;

      auto paths = surrogates.draw_paths(config.features, path_rng);
      const MdoSolution random = solve_random_mdo(std::move(paths), problem, config.penalty, next_de(), config.mda);
      entry.z_proposal = random.z;
      entry.random_value = random.value;
      entry.random_status = random.state.status;

      Vector y_hat = random.state.y;
      if (y_hat.size() != problem.coupling_dim() || !y_hat.allFinite()) {
        y_hat = problem.initial_coupling();
        entry.clamped = true;
      }
      const Vector clamped = problem.y_bounds.clamp(y_hat);
      entry.clamped = entry.clamped || !random.state.converged() || clamped != y_hat;
      entry.y_proposal = clamped;
      entry.y_inputs = mda::gather(clamped, disc.inputs);

      ++record.evaluations[static_cast<std::size_t>(m)];
      const mda::DisciplineOutput out = disc.evaluate(entry.z_proposal, entry.y_inputs);
      if (!out.ok || out.y.size() != static_cast<Eigen::Index>(disc.outputs.size()) || !out.y.allFinite()) {
        entry.message = "true evaluation failed: " + (out.ok ? std::string("invalid output") : out.message);
      } else {
        entry.y_true = out.y;
        try {
          surrogates.refine(m, concat(entry.z_proposal, entry.y_inputs), out.y, n, doe_rng);
          entry.refined = true;
        } catch (const gp::FitError& e) {
          entry.message = std::string("refinement skipped: ") + e.what();
        }
      }
      record.iterations.push_back(std::move(entry));
    }
  }
  record.wall.loop = seconds_since(t_loop);

  const auto t_final = Clock::now();
  const MdoSolution final_solve = solve_surrogate_mdo(surrogates, problem, config.penalty, next_de(), config.mda);
  record.z_final = final_solve.z;
  record.surrogate_objective = final_solve.value;
  record.y_surrogate = final_solve.state.y;
  record.surrogate_status = final_solve.state.status;

  const auto truth = mda::gauss_seidel_solve(problem.disciplines, record.z_final, problem.initial_coupling(),
                                             config.reference_mda);
  record.y_true = truth.y;
  record.true_status = truth.status;
  record.true_objective = truth.y.size() == problem.coupling_dim() && truth.y.allFinite()
                              ? problem.objective(record.z_final, truth.y)
                              : std::numeric_limits<double>::quiet_NaN();
  record.wall.final_solve = seconds_since(t_final);

  for (int i = 0; i < surrogates.discipline_count(); ++i) {
    record.training_sizes.push_back(static_cast<int>(surrogates.data(i).inputs.rows()));
  }
  record.wall.total = seconds_since(t_start);
  return record;
}

}  // namespace mdots::ts
