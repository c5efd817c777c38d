#pragma once

// Multidisciplinary analysis: block Gauss-Seidel on y_i = f_i(z, y_(i)) with
// Aitken dynamic relaxation of each sweep.

#include <mdots/types.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mdots::mda {

/// Result of one discipline call. Failures are values, not exceptions.
struct DisciplineOutput {
  bool ok = true;
  Vector y;
  std::string message;

  static DisciplineOutput success(Vector y) { return {true, std::move(y), {}}; }
  static DisciplineOutput failure(std::string message) { return {false, Vector(), std::move(message)}; }
};

using DisciplineFunction = std::function<DisciplineOutput(const Vector& z, const Vector& y_in)>;

/// One discipline of a coupled system. `inputs` and `outputs` index into the
/// global coupling vector; `evaluate` receives the gathered inputs in order.
struct Discipline {
  std::string name;
  std::vector<int> inputs;
  std::vector<int> outputs;
  DisciplineFunction evaluate;
  bool concurrent_safe = true;
};

enum class MdaStatus { Converged, MaxIterations, EvaluatorFailure };

const char* to_string(MdaStatus status);

struct CouplingState {
  Vector y;
  MdaStatus status = MdaStatus::MaxIterations;
  int iterations = 0;
  double residual = 0.0;  // max relative component change on the last sweep
  std::string message;

  [[nodiscard]] bool converged() const { return status == MdaStatus::Converged; }
};

struct MdaConfig {
  double tolerance = 1e-10;
  int max_iterations = 200;
  bool aitken = true;
  double omega_initial = 0.5;
  double omega_min = 0.05;
  double omega_max = 2.0;

  void validate() const;

  /// Settings for exact MDAs on the true disciplines.
  static MdaConfig reference() { return {}; }
  /// Settings for MDAs on surrogate means and sample paths.
  static MdaConfig surrogate() {
    MdaConfig c;
    c.tolerance = 1e-2;
    c.max_iterations = 100;
    return c;
  }

  bool operator==(const MdaConfig&) const = default;
};

/// Dynamic relaxation factor
///   omega_new = -omega_prev * dp^T (dc - dp) / |dc - dp|^2
/// clamped to [omega_min, omega_max]; omega_prev is kept (clamped) when
/// dc == dp.
double aitken_update(double omega_prev, const Vector& delta_prev, const Vector& delta_curr,
                     double omega_min, double omega_max);

Vector gather(const Vector& y, const std::vector<int>& indices);
void scatter(Vector& y, const std::vector<int>& indices, const Vector& values);

/// Max over components of |y_new - y_old| / max(|y_new|, 1e-12).
double relative_change(const Vector& y_old, const Vector& y_new);

CouplingState gauss_seidel_solve(std::span<const Discipline> disciplines, const Vector& z,
                                 const Vector& y0, const MdaConfig& config);

}  // namespace mdots::mda
