#include <mdots/harness.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mdots::harness {
namespace {

using json = nlohmann::json;

// JSON has no representation for non-finite numbers; they travel as strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double to_double(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw std::runtime_error("record: expected a number, got " + j.dump());
}

json vec(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

Vector to_vector(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = to_double(j[i]);
  return v;
}

json mat(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
  return rows;
}

Matrix to_matrix(const json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = to_vector(j[r]);
    if (row.size() != cols) throw std::runtime_error("record: ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

mda::MdaStatus to_status(const std::string& s) {
  for (auto st : {mda::MdaStatus::Converged, mda::MdaStatus::MaxIterations, mda::MdaStatus::EvaluatorFailure}) {
    if (s == mda::to_string(st)) return st;
  }
  throw std::runtime_error("record: unknown MDA status '" + s + "'");
}

}  // namespace

std::string to_ndjson(const StoredRun& run) {
  const ts::RunRecord& r = run.record;
  std::ostringstream os;

  json header;
  header["type"] = "header";
  header["schema_version"] = kSchemaVersion;
  header["replicate"] = run.replicate;
  header["problem"] = r.problem_id;
  header["seeds"] = {{"doe", r.seeds.doe}, {"paths", r.seeds.paths}, {"de", r.seeds.de}};
  header["n_doe"] = r.n_doe;
  header["n_iter"] = r.n_iter;
  header["config"] = to_json(run.config);
  os << header.dump() << '\n';

  for (std::size_t i = 0; i < r.doe.size(); ++i) {
    json d;
    d["type"] = "doe";
    d["discipline"] = i;
    d["input_dim"] = r.doe[i].inputs.cols();
    d["output_dim"] = r.doe[i].targets.cols();
    d["inputs"] = mat(r.doe[i].inputs);
    d["targets"] = mat(r.doe[i].targets);
    os << d.dump() << '\n';
  }
  for (const auto& w : r.warnings) os << json{{"type", "warning"}, {"message", w}}.dump() << '\n';

  for (const auto& e : r.iterations) {
    json it;
    it["type"] = "iteration";
    it["iteration"] = e.iteration;
    it["discipline"] = e.discipline;
    it["z_proposal"] = vec(e.z_proposal);
    it["y_proposal"] = vec(e.y_proposal);
    it["y_inputs"] = vec(e.y_inputs);
    it["y_true"] = vec(e.y_true);
    it["random_value"] = num(e.random_value);
    it["random_status"] = mda::to_string(e.random_status);
    it["clamped"] = e.clamped;
    it["refined"] = e.refined;
    it["message"] = e.message;
    os << it.dump() << '\n';
  }

  json fin;
  fin["type"] = "final";
  fin["z"] = vec(r.z_final);
  fin["surrogate_objective"] = num(r.surrogate_objective);
  fin["y_surrogate"] = vec(r.y_surrogate);
  fin["surrogate_status"] = mda::to_string(r.surrogate_status);
  fin["true_objective"] = num(r.true_objective);
  fin["y_true"] = vec(r.y_true);
  fin["true_status"] = mda::to_string(r.true_status);
  fin["evaluations"] = r.evaluations;
  fin["training_sizes"] = r.training_sizes;
  fin["reference_objective"] = run.reference_objective ? num(*run.reference_objective) : json(nullptr);
  fin["converged"] = run.converged;
  os << fin.dump() << '\n';

  json timing;
  timing["type"] = "timing";
  timing["doe"] = r.wall.doe;
  timing["loop"] = r.wall.loop;
  timing["final_solve"] = r.wall.final_solve;
  timing["total"] = r.wall.total;
  os << timing.dump() << '\n';
  return os.str();
}

StoredRun from_ndjson(const std::string& text) {
  StoredRun run;
  ts::RunRecord& r = run.record;
  std::istringstream is(text);
  std::string line;
  bool saw_header = false;
  bool saw_final = false;
  int line_no = 0;
  try {
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        const int version = j.at("schema_version").get<int>();
        if (version != kSchemaVersion) {
          throw std::runtime_error("unsupported schema version " + std::to_string(version));
        }
        run.replicate = j.at("replicate").get<int>();
        r.problem_id = j.at("problem").get<std::string>();
        const json& s = j.at("seeds");
        r.seeds = {s.at("doe").get<std::uint64_t>(), s.at("paths").get<std::uint64_t>(),
                   s.at("de").get<std::uint64_t>()};
        r.n_doe = j.at("n_doe").get<int>();
        r.n_iter = j.at("n_iter").get<int>();
        run.config = config_from_json(j.at("config"));
        saw_header = true;
      } else if (type == "doe") {
        problems::TrainingSet set;
        set.inputs = to_matrix(j.at("inputs"), j.at("input_dim").get<Eigen::Index>());
        set.targets = to_matrix(j.at("targets"), j.at("output_dim").get<Eigen::Index>());
        r.doe.push_back(std::move(set));
      } else if (type == "warning") {
        r.warnings.push_back(j.at("message").get<std::string>());
      } else if (type == "iteration") {
        ts::IterationEntry e;
        e.iteration = j.at("iteration").get<int>();
        e.discipline = j.at("discipline").get<int>();
        e.z_proposal = to_vector(j.at("z_proposal"));
        e.y_proposal = to_vector(j.at("y_proposal"));
        e.y_inputs = to_vector(j.at("y_inputs"));
        e.y_true = to_vector(j.at("y_true"));
        e.random_value = to_double(j.at("random_value"));
        e.random_status = to_status(j.at("random_status").get<std::string>());
        e.clamped = j.at("clamped").get<bool>();
        e.refined = j.at("refined").get<bool>();
        e.message = j.at("message").get<std::string>();
        r.iterations.push_back(std::move(e));
      } else if (type == "final") {
        r.z_final = to_vector(j.at("z"));
        r.surrogate_objective = to_double(j.at("surrogate_objective"));
        r.y_surrogate = to_vector(j.at("y_surrogate"));
        r.surrogate_status = to_status(j.at("surrogate_status").get<std::string>());
        r.true_objective = to_double(j.at("true_objective"));
        r.y_true = to_vector(j.at("y_true"));
        r.true_status = to_status(j.at("true_status").get<std::string>());
        r.evaluations = j.at("evaluations").get<std::vector<int>>();
        r.training_sizes = j.at("training_sizes").get<std::vector<int>>();
        if (!j.at("reference_objective").is_null()) run.reference_objective = to_double(j["reference_objective"]);
        run.converged = j.at("converged").get<bool>();
        saw_final = true;
      } else if (type == "timing") {
        r.wall = {j.at("doe").get<double>(), j.at("loop").get<double>(), j.at("final_solve").get<double>(),
                  j.at("total").get<double>()};
      } else {
        throw std::runtime_error("unknown line type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("record line " + std::to_string(line_no) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("record line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!saw_header) throw std::runtime_error("record: missing header line");
  if (!saw_final) throw std::runtime_error("record: missing final line");
  return run;
}

void write_record(const std::filesystem::path& path, const StoredRun& run) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << to_ndjson(run);
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

StoredRun read_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_ndjson(ss.str());
}

std::filesystem::path record_path(const std::filesystem::path& out, int replicate) {
  return out / ("run_" + std::to_string(replicate) + ".ndjson");
}

}  // namespace mdots::harness
