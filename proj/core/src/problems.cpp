#include <mdots/problems.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mdots::problems {

Box MdoProblem::discipline_input_box(int i) const {
  return z_bounds.join(y_bounds.select(disciplines.at(static_cast<std::size_t>(i)).inputs));
}

void MdoProblem::validate() const {
  if (disciplines.empty()) throw std::invalid_argument("MdoProblem: no disciplines");
  if (!objective) throw std::invalid_argument("MdoProblem: missing objective");
  std::vector<int> producers(static_cast<std::size_t>(coupling_dim()), 0);
  for (const auto& d : disciplines) {
    if (!d.evaluate) throw std::invalid_argument("MdoProblem: discipline '" + d.name + "' has no evaluator");
    if (d.outputs.empty()) throw std::invalid_argument("MdoProblem: discipline '" + d.name + "' has no outputs");
    for (int idx : d.inputs) {
      if (idx < 0 || idx >= coupling_dim()) {
        throw std::invalid_argument("MdoProblem: discipline '" + d.name + "' input index out of range");
      }
    }
    for (int idx : d.outputs) {
      if (idx < 0 || idx >= coupling_dim()) {
        throw std::invalid_argument("MdoProblem: discipline '" + d.name + "' output index out of range");
      }
      ++producers[static_cast<std::size_t>(idx)];
    }
  }
  for (std::size_t k = 0; k < producers.size(); ++k) {
    if (producers[k] != 1) {
      std::ostringstream os;
      os << "MdoProblem: coupling component " << k << " is produced by " << producers[k]
         << " disciplines (expected exactly one)";
      throw std::invalid_argument(os.str());
    }
  }
}

MdoProblem toy_problem() {
  MdoProblem p;
  p.id = "toy";
  p.z_bounds = Box(Vector::Constant(1, -5.0), Vector::Constant(1, 5.0));
  p.y_bounds = Box((Vector(2) << -2.0, -7.0).finished(), (Vector(2) << 26.0, 31.0).finished());
  p.disciplines.push_back({"f1", {1}, {0}, [](const Vector& z, const Vector& y) {
                             return mda::DisciplineOutput::success(
                                 Vector::Constant(1, z[0] * z[0] - std::cos(y[0] / 2.0)));
                           }});
  p.disciplines.push_back({"f2", {0}, {1}, [](const Vector& z, const Vector& y) {
                             return mda::DisciplineOutput::success(Vector::Constant(1, z[0] + y[0]));
                           }});
  p.objective = [](const Vector& z, const Vector& y) {
    return std::cos((y[0] + std::exp(-y[1])) / std::numbers::pi) + z[0] / 20.0;
  };
  return p;
}

MdoProblem sellar_problem() {
  MdoProblem p;
  p.id = "sellar";
  p.z_bounds = Box((Vector(3) << 0.0, -10.0, 0.0).finished(), (Vector(3) << 10.0, 10.0, 10.0).finished());
  p.y_bounds = Box((Vector(2) << 1.0, -5.0).finished(), (Vector(2) << 50.0, 24.0).finished());
  p.disciplines.push_back({"f1", {1}, {0}, [](const Vector& z, const Vector& y) {
                             return mda::DisciplineOutput::success(
                                 Vector::Constant(1, z[0] + z[1] * z[1] + z[2] - 0.2 * y[0]));
                           }});
  p.disciplines.push_back({"f2", {0}, {1}, [](const Vector& z, const Vector& y) {
                             if (y[0] < 0.0) {
                               return mda::DisciplineOutput::failure("sqrt of negative coupling y1");
                             }
                             return mda::DisciplineOutput::success(
                                 Vector::Constant(1, std::sqrt(y[0]) + z[0] + z[1]));
                           }});
  p.objective = [](const Vector& z, const Vector& y) {
    return z[0] + z[2] * z[2] + y[0] + std::exp(-y[1]) + 10.0 * std::cos(z[1]);
  };
  return p;
}

Matrix lhs(const Box& bounds, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("lhs: n must be >= 1");
  const Eigen::Index d = bounds.dim();
  Matrix points(n, d);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> strata(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < d; ++c) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    const double lo = bounds.lower[c];
    const double width = bounds.upper[c] - lo;
    for (int r = 0; r < n; ++r) {
      double value = 0.0;
      do {
        double u = 0.0;
        do u = unit(rng); while (u <= 0.0);
        value = lo + width * (strata[static_cast<std::size_t>(r)] + u) / n;
      } while (!(value > lo && value < bounds.upper[c]));
      points(r, c) = value;
    }
  }
  return points;
}

std::pair<Vector, Vector> split_input(const MdoProblem& problem, const Vector& input) {
  const Eigen::Index dz = problem.design_dim();
  return {input.head(dz), input.tail(input.size() - dz)};
}

DoeResult initial_doe_training_sets(const MdoProblem& problem, int n_doe, Rng& rng) {
  if (n_doe < 2) throw std::invalid_argument("initial_doe_training_sets: n_doe must be >= 2");
  problem.validate();
  DoeResult result;
  for (int i = 0; i < problem.discipline_count(); ++i) {
    const mda::Discipline& disc = problem.disciplines[static_cast<std::size_t>(i)];
    const Matrix points = lhs(problem.discipline_input_box(i), n_doe, rng);
    std::vector<Eigen::Index> kept;
    std::vector<Vector> outputs;
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
      const auto [z, y_in] = split_input(problem, points.row(r).transpose());
      mda::DisciplineOutput out = disc.evaluate(z, y_in);
      if (!out.ok || out.y.size() != static_cast<Eigen::Index>(disc.outputs.size()) ||
          !out.y.allFinite()) {
        std::ostringstream os;
        os << "discipline '" << disc.name << "': DoE point " << r << " dropped ("
           << (out.ok ? "invalid output" : out.message) << ")";
        result.warnings.push_back(os.str());
        continue;
      }
      kept.push_back(r);
      outputs.push_back(std::move(out.y));
    }
    if (kept.size() < 2) {
      throw std::runtime_error("initial_doe_training_sets: fewer than two successful evaluations for discipline '" +
                               disc.name + "'");
    }
    TrainingSet set;
    set.inputs.resize(static_cast<Eigen::Index>(kept.size()), points.cols());
    set.targets.resize(static_cast<Eigen::Index>(kept.size()),
                       static_cast<Eigen::Index>(disc.outputs.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
      set.inputs.row(static_cast<Eigen::Index>(k)) = points.row(kept[k]);
      set.targets.row(static_cast<Eigen::Index>(k)) = outputs[k].transpose();
    }
    result.sets.push_back(std::move(set));
  }
  return result;
}

}  // namespace mdots::problems
