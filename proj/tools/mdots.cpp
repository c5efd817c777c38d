// mdots: command-line front end for MDO with Thompson sampling.
//
//   mdots run       one optimization, record written to <out>/run_<k>.ndjson
//   mdots study     replicated runs + <out>/summary.csv
//   mdots report    trace and summary CSVs from a records directory
//   mdots reference print (or recompute) the reference solution

#include <mdots/harness.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

namespace {

using mdots::harness::ExperimentConfig;
using json = nlohmann::json;

std::string format_vector(const mdots::Vector& v) {
  std::ostringstream os;
  os << std::setprecision(6) << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

// Flags are bound to a scratch config; after parsing, only flags actually
// given override the config file (or the defaults).
struct ConfigFlags {
  ExperimentConfig values;
  std::string config_file;
  bool recompute_reference = false;
  std::map<std::string, CLI::Option*> options;

  void add_to(CLI::App& app, bool with_repeat) {
    app.add_option("--config", config_file, "JSON config file; keys mirror the long flag names");
    options["problem"] = app.add_option("--problem", values.problem, "Problem: toy | sellar | external")
                             ->check(CLI::IsMember({"toy", "sellar", "external"}));
    options["external-cmd"] =
        app.add_option("--external-cmd", values.external_cmd, "External problem description (JSON)");
    options["n-doe"] = app.add_option("--n-doe", values.n_doe, "Initial DoE size per discipline");
    options["n-iter"] = app.add_option("--n-iter", values.n_iter, "MDO-TS outer iterations");
    if (with_repeat) options["repeat"] = app.add_option("--repeat", values.repeat, "Number of replicates");
    options["seed"] = app.add_option("--seed", values.seed, "Seed base");
    options["features"] = app.add_option("--features", values.features, "Random Fourier features per path");
    options["mda-tol"] = app.add_option("--mda-tol", values.mda_tol, "Relative tolerance of surrogate/path MDAs");
    options["mda-max-iter"] = app.add_option("--mda-max-iter", values.mda_max_iter, "Iteration cap of surrogate/path MDAs");
    options["reference-mda-tol"] =
        app.add_option("--reference-mda-tol", values.reference_mda_tol, "Tolerance of exact MDAs");
    options["reference-mda-max-iter"] =
        app.add_option("--reference-mda-max-iter", values.reference_mda_max_iter, "Iteration cap of exact MDAs");
    options["nugget"] = app.add_option("--nugget", values.nugget, "GP nugget");
    options["gp-restarts"] = app.add_option("--gp-restarts", values.gp_restarts, "Random restarts of the GP fit");
    options["isotropic"] = app.add_flag("--isotropic", values.isotropic, "Shared GP length scale");
    options["de-population"] = app.add_option("--de-population", values.de_population, "DE population (0: auto)");
    options["de-mutation"] = app.add_option("--de-mutation", values.de_mutation, "DE mutation factor F");
    options["de-crossover"] = app.add_option("--de-crossover", values.de_crossover, "DE crossover rate CR");
    options["de-generations"] = app.add_option("--de-generations", values.de_generations, "DE generation cap");
    options["de-window"] = app.add_option("--de-window", values.de_window, "DE stagnation window");
    options["de-tol"] = app.add_option("--de-tol", values.de_tol, "DE stagnation tolerance");
    options["penalty-base"] = app.add_option("--penalty-base", values.penalty_base, "Base penalty");
    options["penalty-bound-weight"] =
        app.add_option("--penalty-bound-weight", values.penalty_bound_weight, "Weight of relative Y violations");
    options["out"] = app.add_option("--out", values.out, "Output directory");
    options["workers"] = app.add_option("--workers", values.workers, "Worker threads (default: MDOTS_WORKERS or cores)");
    app.add_flag("--recompute-reference", recompute_reference, "Recompute the reference solution by DE");
  }

  ExperimentConfig resolve() const {
    json merged = mdots::harness::to_json(ExperimentConfig{});
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw mdots::harness::ConfigError("config", "cannot open '" + config_file + "'");
      json file;
      try {
        in >> file;
      } catch (const json::exception& e) {
        throw mdots::harness::ConfigError("config", std::string("invalid JSON: ") + e.what());
      }
      merged = mdots::harness::to_json(mdots::harness::config_from_json(file));
    }
    const json given = mdots::harness::to_json(values);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) merged[key] = given[key];
    }
    ExperimentConfig c = mdots::harness::config_from_json(merged);
    c.validate();
    return c;
  }
};

mdots::harness::ReferenceSolution reference_for(const ExperimentConfig& config, bool recompute) {
  if (!recompute) {
    if (auto ref = mdots::harness::builtin_reference(config.problem)) return *ref;
  }
  std::cerr << "computing reference solution for '" << config.problem << "'...\n";
  return mdots::harness::compute_reference(mdots::harness::make_problem(config), config);
}

void print_run(const mdots::harness::StoredRun& run) {
  const auto& r = run.record;
  std::cout << "run " << run.replicate << ": z* = " << format_vector(r.z_final) << "  f_obj = "
            << std::setprecision(8) << r.true_objective << " (surrogate " << r.surrogate_objective << ")"
            << "  evaluations = [";
  for (std::size_t i = 0; i < r.evaluations.size(); ++i) std::cout << (i ? ", " : "") << r.evaluations[i];
  std::cout << "]  wall = " << std::setprecision(3) << r.wall.total << " s";
  if (run.reference_objective) std::cout << "  converged = " << (run.converged ? "yes" : "no");
  std::cout << '\n';
}

int cmd_run(const ConfigFlags& flags, int replicate, const std::string& replay_path) {
  if (!replay_path.empty()) {
    const auto stored = mdots::harness::read_record(replay_path);
    auto rerun = mdots::harness::replay(stored);
    print_run(rerun);
    const bool same = rerun.record.same_result(stored.record);
    std::cout << "reproduced: " << (same ? "yes" : "no") << '\n';
    if (flags.options.at("out")->count() > 0) {
      const auto path = mdots::harness::record_path(flags.values.out, rerun.replicate);
      mdots::harness::write_record(path, rerun);
      std::cout << "record: " << path.string() << '\n';
    }
    return same ? 0 : 1;
  }
  const ExperimentConfig config = flags.resolve();
  std::optional<mdots::harness::ReferenceSolution> ref;
  if (flags.recompute_reference || mdots::harness::builtin_reference(config.problem)) {
    ref = reference_for(config, flags.recompute_reference);
  }
  const auto run = mdots::harness::run_replicate(config, replicate, ref);
  const auto path = mdots::harness::record_path(config.out, replicate);
  mdots::harness::write_record(path, run);
  for (const auto& w : run.record.warnings) std::cerr << "warning: " << w << '\n';
  print_run(run);
  std::cout << "record: " << path.string() << '\n';
  return 0;
}

int cmd_study(const ConfigFlags& flags) {
  const ExperimentConfig config = flags.resolve();
  const auto ref = reference_for(config, flags.recompute_reference);
  const auto result = mdots::harness::run_study(config, ref);
  for (const auto& f : result.failures) std::cerr << "failed: " << f << '\n';
  for (const auto& run : result.runs) print_run(run);
  const auto& s = result.summary;
  std::cout << "\nconverged runs: " << s.n_converged << " / " << s.n_runs << '\n';
  std::cout << std::setprecision(6);
  std::cout << "reference      z = " << format_vector(s.reference.z) << "  f_obj = " << s.reference.objective << '\n';
  std::cout << "mean (conv.)   z = " << format_vector(s.mean_z) << "  f_obj = " << s.mean_objective << '\n';
  std::cout << "mean |rel err| % = " << format_vector(s.mean_abs_rel_error_z_pct)
            << "  f_obj = " << s.mean_abs_rel_error_objective_pct << '\n';
  std::cout << "summary: " << (std::filesystem::path(config.out) / "summary.csv").string() << '\n';
  return result.failures.empty() ? 0 : 1;
}

int cmd_report(const std::string& dir) {
  const auto result = mdots::harness::generate_report(dir, std::cerr);
  std::cout << "records: " << result.records << "  skipped: " << result.skipped << '\n';
  for (const auto& t : result.traces) std::cout << "trace: " << t.string() << '\n';
  std::cout << "summary: " << result.summary.string() << '\n';
  return result.skipped == 0 ? 0 : 1;
}

int cmd_reference(const ConfigFlags& flags) {
  const ExperimentConfig config = flags.resolve();
  const auto ref = reference_for(config, flags.recompute_reference);
  std::cout << std::setprecision(8) << "problem: " << ref.problem << "\nz* = " << format_vector(ref.z)
            << "\nf_obj = " << ref.objective << "\nsource: " << ref.provenance << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MDO with Thompson sampling over partitioned Gaussian-process surrogates"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  int replicate = 0;
  std::string replay_path;
  auto* run = app.add_subcommand("run", "Run one MDO-TS optimization");
  run_flags.add_to(*run, false);
  run->add_option("--replicate", replicate, "Replicate index (seeds derive from seed + index)");
  run->add_option("--replay", replay_path, "Re-run a stored record from its embedded config")
      ->check(CLI::ExistingFile);

  ConfigFlags study_flags;
  auto* study = app.add_subcommand("study", "Run replicated MDO-TS optimizations and summarize");
  study_flags.add_to(*study, true);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Write trace and summary CSVs for a records directory");
  report->add_option("dir", report_dir, "Records directory")->required();

  ConfigFlags ref_flags;
  auto* reference = app.add_subcommand("reference", "Print the reference solution of a problem");
  ref_flags.add_to(*reference, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_flags, replicate, replay_path);
    if (*study) return cmd_study(study_flags);
    if (*report) return cmd_report(report_dir);
    if (*reference) return cmd_reference(ref_flags);
  } catch (const mdots::harness::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
