#include <mdots/external_discipline.hpp>
#include <mdots/harness.hpp>
#include <mdots/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <regex>
#include <sstream>
#include <thread>

namespace mdots::harness {
namespace {

using json = nlohmann::json;

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (problem != "toy" && problem != "sellar" && problem != "external") {
    throw ConfigError("problem", "must be one of toy, sellar, external (got '" + problem + "')");
  }
  if (problem == "external" && external_cmd.empty()) {
    throw ConfigError("external-cmd", "required when problem is external");
  }
  if (n_doe < 2) throw ConfigError("n-doe", "must be >= 2");
  if (n_iter < 0) throw ConfigError("n-iter", "must be >= 0");
  if (repeat < 1) throw ConfigError("repeat", "must be >= 1");
  if (features < 1) throw ConfigError("features", "must be >= 1");
  if (!(mda_tol > 0.0)) throw ConfigError("mda-tol", "must be positive");
  if (mda_max_iter < 1) throw ConfigError("mda-max-iter", "must be >= 1");
  if (!(reference_mda_tol > 0.0)) throw ConfigError("reference-mda-tol", "must be positive");
  if (reference_mda_max_iter < 1) throw ConfigError("reference-mda-max-iter", "must be >= 1");
  if (!(nugget > 0.0)) throw ConfigError("nugget", "must be positive");
  if (gp_restarts < 0) throw ConfigError("gp-restarts", "must be >= 0");
  if (de_population != 0 && de_population < 4) throw ConfigError("de-population", "must be 0 (auto) or >= 4");
  if (!(de_mutation > 0.0 && de_mutation <= 2.0)) throw ConfigError("de-mutation", "must be in (0, 2]");
  if (!(de_crossover >= 0.0 && de_crossover <= 1.0)) throw ConfigError("de-crossover", "must be in [0, 1]");
  if (de_generations < 0) throw ConfigError("de-generations", "must be >= 0");
  if (de_window < 1) throw ConfigError("de-window", "must be >= 1");
  if (!(de_tol >= 0.0)) throw ConfigError("de-tol", "must be >= 0");
  if (!(penalty_base > 0.0)) throw ConfigError("penalty-base", "must be positive");
  if (!(penalty_bound_weight >= 0.0)) throw ConfigError("penalty-bound-weight", "must be >= 0");
  if (workers < 0) throw ConfigError("workers", "must be >= 0");
}

ts::TsConfig ExperimentConfig::ts_config() const {
  ts::TsConfig c;
  c.gp.nugget = nugget;
  c.gp.restarts = gp_restarts;
  c.gp.isotropic = isotropic;
  c.features = features;
  c.de.population = de_population;
  c.de.mutation = de_mutation;
  c.de.crossover = de_crossover;
  c.de.max_generations = de_generations;
  c.de.window = de_window;
  c.de.tolerance = de_tol;
  c.mda.tolerance = mda_tol;
  c.mda.max_iterations = mda_max_iter;
  c.reference_mda.tolerance = reference_mda_tol;
  c.reference_mda.max_iterations = reference_mda_max_iter;
  c.penalty.base = penalty_base;
  c.penalty.bound_weight = penalty_bound_weight;
  return c;
}

json to_json(const ExperimentConfig& c) {
  return json{{"problem", c.problem},
              {"external-cmd", c.external_cmd},
              {"n-doe", c.n_doe},
              {"n-iter", c.n_iter},
              {"repeat", c.repeat},
              {"seed", c.seed},
              {"features", c.features},
              {"mda-tol", c.mda_tol},
              {"mda-max-iter", c.mda_max_iter},
              {"reference-mda-tol", c.reference_mda_tol},
              {"reference-mda-max-iter", c.reference_mda_max_iter},
              {"nugget", c.nugget},
              {"gp-restarts", c.gp_restarts},
              {"isotropic", c.isotropic},
              {"de-population", c.de_population},
              {"de-mutation", c.de_mutation},
              {"de-crossover", c.de_crossover},
              {"de-generations", c.de_generations},
              {"de-window", c.de_window},
              {"de-tol", c.de_tol},
              {"penalty-base", c.penalty_base},
              {"penalty-bound-weight", c.penalty_bound_weight},
              {"out", c.out},
              {"workers", c.workers}};
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config", "expected an object");
  ExperimentConfig c;
  const json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError(key, "unknown configuration key");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw ConfigError(key, std::string("wrong type: ") + e.what());
    }
  };
  get("problem", c.problem);
  get("external-cmd", c.external_cmd);
  get("n-doe", c.n_doe);
  get("n-iter", c.n_iter);
  get("repeat", c.repeat);
  get("seed", c.seed);
  get("features", c.features);
  get("mda-tol", c.mda_tol);
  get("mda-max-iter", c.mda_max_iter);
  get("reference-mda-tol", c.reference_mda_tol);
  get("reference-mda-max-iter", c.reference_mda_max_iter);
  get("nugget", c.nugget);
  get("gp-restarts", c.gp_restarts);
  get("isotropic", c.isotropic);
  get("de-population", c.de_population);
  get("de-mutation", c.de_mutation);
  get("de-crossover", c.de_crossover);
  get("de-generations", c.de_generations);
  get("de-window", c.de_window);
  get("de-tol", c.de_tol);
  get("penalty-base", c.penalty_base);
  get("penalty-bound-weight", c.penalty_bound_weight);
  get("out", c.out);
  get("workers", c.workers);
  return c;
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MDOTS_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

problems::MdoProblem make_problem(const ExperimentConfig& config) {
  if (config.problem == "toy") return problems::toy_problem();
  if (config.problem == "sellar") return problems::sellar_problem();
  if (config.problem == "external") return problems::load_external_problem(config.external_cmd);
  throw ConfigError("problem", "unknown problem '" + config.problem + "'");
}

std::optional<ReferenceSolution> builtin_reference(const std::string& problem) {
  if (problem == "toy") {
    return ReferenceSolution{"toy", Vector::Constant(1, -2.9989), -1.1495,
                             "published reference row for the 1-D toy problem"};
  }
  if (problem == "sellar") {
    return ReferenceSolution{"sellar", (Vector(3) << 0.0, 2.6345, 0.0).finished(), -2.8085,
                             "published reference row for the modified Sellar problem"};
  }
  return std::nullopt;
}

ReferenceSolution compute_reference(const problems::MdoProblem& problem, const ExperimentConfig& config) {
  const ts::TsConfig tc = config.ts_config();
  evolution::DeConfig de = tc.de;
  de.population = 2 * de.resolved_population(problem.design_dim());
  de.max_generations = std::max(2 * de.max_generations, 600);
  de.tolerance = 1e-12;
  de.seed = config.seed;
  const auto sol = ts::solve_penalized_mdo(problem.disciplines, problem, tc.penalty, de, tc.reference_mda);
  ReferenceSolution ref;
  ref.problem = problem.id;
  ref.z = sol.z;
  ref.objective = sol.value;
  ref.provenance = "recomputed by differential evolution on the exact MDA";
  return ref;
}

StoredRun run_replicate(const ExperimentConfig& config, int replicate,
                        const std::optional<ReferenceSolution>& reference) {
  config.validate();
  const problems::MdoProblem problem = make_problem(config);
  StoredRun run;
  run.replicate = replicate;
  run.config = config;
  run.record = ts::run_mdo_ts(problem, config.n_doe, config.n_iter, config.ts_config(),
                              ts::RunSeeds::from_base(config.seed, replicate));
  if (reference) {
    run.reference_objective = reference->objective;
    run.converged = std::isfinite(run.record.true_objective) &&
                    ts::convergence_check(reference->objective, run.record.true_objective);
  }
  return run;
}

StoredRun replay(const StoredRun& stored) {
  std::optional<ReferenceSolution> ref;
  if (stored.reference_objective) {
    ref = ReferenceSolution{stored.record.problem_id, Vector(), *stored.reference_objective, "stored"};
  }
  return run_replicate(stored.config, stored.replicate, ref);
}

StudySummary summarize(const std::vector<StoredRun>& runs, const ReferenceSolution& reference) {
  StudySummary s;
  s.reference = reference;
  s.n_runs = static_cast<int>(runs.size());
  const Eigen::Index dz = reference.z.size();
  s.mean_z = Vector::Zero(dz);
  s.mean_abs_rel_error_z_pct = Vector::Zero(dz);
  s.mean_objective = 0.0;
  s.mean_abs_rel_error_objective_pct = 0.0;

  // Sorted by replicate so floating-point sums do not depend on input order.
  std::vector<const StoredRun*> ordered;
  for (const auto& r : runs) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->replicate < b->replicate; });

  for (const StoredRun* r : ordered) {
    const double f = r->record.true_objective;
    const bool ok = std::isfinite(f) && ts::convergence_check(reference.objective, f) &&
                    r->record.z_final.size() == dz;
    if (!ok) continue;
    ++s.n_converged;
    s.mean_z += r->record.z_final;
    for (Eigen::Index j = 0; j < dz; ++j) {
      s.mean_abs_rel_error_z_pct[j] += std::abs(100.0 * (reference.z[j] - r->record.z_final[j]) / reference.z[j]);
    }
    s.mean_objective += f;
    s.mean_abs_rel_error_objective_pct += std::abs(100.0 * (reference.objective - f) / reference.objective);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (s.n_converged == 0) {
    s.mean_z.setConstant(nan);
    s.mean_abs_rel_error_z_pct.setConstant(nan);
    s.mean_objective = nan;
    s.mean_abs_rel_error_objective_pct = nan;
    return s;
  }
  const double n = s.n_converged;
  s.mean_z /= n;
  s.mean_abs_rel_error_z_pct /= n;
  s.mean_objective /= n;
  s.mean_abs_rel_error_objective_pct /= n;
  for (Eigen::Index j = 0; j < dz; ++j) {
    if (reference.z[j] == 0.0) s.mean_abs_rel_error_z_pct[j] = nan;
  }
  return s;
}

std::vector<std::string> summary_columns(Eigen::Index design_dim) {
  std::vector<std::string> cols{"n_runs", "n_converged"};
  for (Eigen::Index j = 1; j <= design_dim; ++j) cols.push_back("mean_z" + std::to_string(j));
  for (Eigen::Index j = 1; j <= design_dim; ++j) cols.push_back("mean_abs_rel_error_z" + std::to_string(j) + "_pct");
  cols.insert(cols.end(), {"mean_objective", "mean_abs_rel_error_objective_pct", "reference_objective"});
  for (Eigen::Index j = 1; j <= design_dim; ++j) cols.push_back("reference_z" + std::to_string(j));
  return cols;
}

std::string summary_csv(const StudySummary& s) {
  const Eigen::Index dz = s.reference.z.size();
  std::ostringstream os;
  const auto cols = summary_columns(dz);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n' << s.n_runs << ',' << s.n_converged;
  for (Eigen::Index j = 0; j < dz; ++j) os << ',' << csv_number(s.mean_z[j]);
  for (Eigen::Index j = 0; j < dz; ++j) os << ',' << csv_number(s.mean_abs_rel_error_z_pct[j]);
  os << ',' << csv_number(s.mean_objective) << ',' << csv_number(s.mean_abs_rel_error_objective_pct) << ','
     << csv_number(s.reference.objective);
  for (Eigen::Index j = 0; j < dz; ++j) os << ',' << csv_number(s.reference.z[j]);
  os << '\n';
  return os.str();
}

StudyResult run_study(const ExperimentConfig& config, const ReferenceSolution& reference) {
  config.validate();
  const std::filesystem::path out(config.out);
  std::filesystem::create_directories(out);

  StudyResult result;
  std::vector<std::optional<StoredRun>> slots(static_cast<std::size_t>(config.repeat));
  std::vector<std::string> errors(static_cast<std::size_t>(config.repeat));
  parallel_for(slots.size(), resolve_workers(config.workers), [&](std::size_t k) {
    try {
      StoredRun run = run_replicate(config, static_cast<int>(k), reference);
      write_record(record_path(out, static_cast<int>(k)), run);
      slots[k] = std::move(run);
    } catch (const std::exception& e) {
      errors[k] = "replicate " + std::to_string(k) + ": " + e.what();
    }
  });
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k]) result.runs.push_back(std::move(*slots[k]));
    if (!errors[k].empty()) result.failures.push_back(errors[k]);
  }
  result.summary = summarize(result.runs, reference);
  result.summary.n_runs = config.repeat;  // failed replicates count as not converged

  std::ofstream csv(out / "summary.csv");
  csv << summary_csv(result.summary);
  return result;
}

ReportResult generate_report(const std::filesystem::path& dir, std::ostream& warnings) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  static const std::regex pattern(R"(run_(\d+)\.ndjson)");
  std::map<int, std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) files[std::stoi(m[1])] = entry.path();
  }
  if (files.empty()) throw std::runtime_error("no records in " + dir.string());

  ReportResult result;
  std::vector<StoredRun> runs;
  for (const auto& [k, path] : files) {
    StoredRun run;
    try {
      run = read_record(path);
    } catch (const std::exception& e) {
      warnings << "skipping " << path.string() << ": " << e.what() << '\n';
      ++result.skipped;
      continue;
    }
    const auto trace_path = dir / ("trace_" + std::to_string(k) + ".csv");
    std::ofstream trace(trace_path);
    trace << kTraceHeader << '\n';
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : run.record.iterations) {
      best = std::min(best, e.random_value);
      trace << e.iteration << ',' << e.discipline << ',' << csv_number(e.random_value) << ','
            << csv_number(best) << ',' << (e.refined ? 1 : 0) << '\n';
    }
    result.traces.push_back(trace_path);
    runs.push_back(std::move(run));
  }
  result.records = static_cast<int>(runs.size());
  if (runs.empty()) throw std::runtime_error("no readable records in " + dir.string());

  const std::string problem = runs.front().record.problem_id;
  std::optional<ReferenceSolution> ref = builtin_reference(problem);
  if (!ref) {
    const auto& first = runs.front();
    ref = ReferenceSolution{problem, Vector::Constant(first.record.z_final.size(), std::numeric_limits<double>::quiet_NaN()),
                            first.reference_objective.value_or(std::numeric_limits<double>::quiet_NaN()),
                            "from records"};
  }
  StudySummary summary = summarize(runs, *ref);
  result.summary = dir / "summary.csv";
  std::ofstream csv(result.summary);
  csv << summary_csv(summary);
  return result;
}

}  // namespace mdots::harness
