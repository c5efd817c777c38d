#pragma once

// MDO problem definitions, benchmark problems and Latin-hypercube DoEs.

#include <mdots/mda.hpp>
#include <mdots/types.hpp>

#include <functional>
#include <string>
#include <vector>

namespace mdots::problems {

/// f_obj(z, y*). May return NaN to signal failure.
using ObjectiveFunction = std::function<double(const Vector& z, const Vector& y)>;

struct MdoProblem {
  std::string id;
  Box z_bounds;
  Box y_bounds;
  std::vector<mda::Discipline> disciplines;
  ObjectiveFunction objective;

  [[nodiscard]] Eigen::Index design_dim() const { return z_bounds.dim(); }
  [[nodiscard]] Eigen::Index coupling_dim() const { return y_bounds.dim(); }
  [[nodiscard]] int discipline_count() const { return static_cast<int>(disciplines.size()); }

  /// Z x Y_(i): the input box of discipline i, design variables first.
  [[nodiscard]] Box discipline_input_box(int i) const;
  /// Default MDA starting point: the midpoint of Y.
  [[nodiscard]] Vector initial_coupling() const { return y_bounds.midpoint(); }

  /// Every coupling component must be produced by exactly one discipline.
  void validate() const;
};

/// 1-D toy problem:
///   f_obj = cos((y1 + exp(-y2)) / pi) + z / 20
///   y1 = z^2 - cos(y2 / 2),  y2 = z + y1
/// on Z = [-5, 5], Y = [-2, 26] x [-7, 31].
MdoProblem toy_problem();

/// Unconstrained modified Sellar problem:
///   f_obj = z1 + z3^2 + y1 + exp(-y2) + 10 cos(z2)
///   y1 = z1 + z2^2 + z3 - 0.2 y2,  y2 = sqrt(y1) + z1 + z2
/// on Z = [0,10] x [-10,10] x [0,10], Y = [1,50] x [-5,24].
/// The second discipline fails for y1 < 0.
MdoProblem sellar_problem();

/// Latin hypercube: n points, one per 1/n stratum in every dimension, with
/// uniform jitter; all points strictly inside the box.
Matrix lhs(const Box& bounds, int n, Rng& rng);

/// Inputs (z, y_(i)) and targets y_i for one discipline.
struct TrainingSet {
  Matrix inputs;
  Matrix targets;
};

struct DoeResult {
  std::vector<TrainingSet> sets;
  std::vector<std::string> warnings;
};

/// Independent LHS over Z x Y_(i) for every discipline, evaluated with the
/// true discipline. Failed points are dropped with a warning; fewer than two
/// survivors is an error.
DoeResult initial_doe_training_sets(const MdoProblem& problem, int n_doe, Rng& rng);

/// Splits a discipline input row back into (z, y_in).
std::pair<Vector, Vector> split_input(const MdoProblem& problem, const Vector& input);

}  // namespace mdots::problems
