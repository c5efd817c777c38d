#include <mdots/mda.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mdots::mda {

const char* to_string(MdaStatus status) {
  switch (status) {
    case MdaStatus::Converged: return "converged";
    case MdaStatus::MaxIterations: return "max_iterations";
    case MdaStatus::EvaluatorFailure: return "evaluator_failure";
  }
  return "unknown";
}

void MdaConfig::validate() const {
  if (!(tolerance > 0.0)) throw std::invalid_argument("MdaConfig: tolerance must be positive");
  if (max_iterations < 1) throw std::invalid_argument("MdaConfig: max_iterations must be >= 1");
  if (!(omega_min > 0.0 && omega_min <= omega_max && omega_max <= 2.0)) {
    throw std::invalid_argument("MdaConfig: relaxation bounds must satisfy 0 < min <= max <= 2");
  }
}

double aitken_update(double omega_prev, const Vector& delta_prev, const Vector& delta_curr,
                     double omega_min, double omega_max) {
  const Vector diff = delta_curr - delta_prev;
  const double denom = diff.squaredNorm();
  double omega = omega_prev;
  if (denom > 0.0 && std::isfinite(denom)) {
    omega = -omega_prev * delta_prev.dot(diff) / denom;
  }
  if (!std::isfinite(omega)) omega = omega_prev;
  return std::clamp(omega, omega_min, omega_max);
}

Vector gather(const Vector& y, const std::vector<int>& indices) {
  Vector out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) out[static_cast<Eigen::Index>(k)] = y[indices[k]];
  return out;
}

void scatter(Vector& y, const std::vector<int>& indices, const Vector& values) {
  for (std::size_t k = 0; k < indices.size(); ++k) y[indices[k]] = values[static_cast<Eigen::Index>(k)];
}

double relative_change(const Vector& y_old, const Vector& y_new) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < y_new.size(); ++k) {
    const double change = std::abs(y_new[k] - y_old[k]) / std::max(std::abs(y_new[k]), 1e-12);
    worst = std::max(worst, change);
  }
  return worst;
}

CouplingState gauss_seidel_solve(std::span<const Discipline> disciplines, const Vector& z,
                                 const Vector& y0, const MdaConfig& config) {
  config.validate();
  CouplingState state;
  Vector y = y0;
  Vector delta_prev;
  double omega = config.omega_initial;

  for (int it = 1; it <= config.max_iterations; ++it) {
    Vector sweep = y;
    for (const Discipline& d : disciplines) {
      DisciplineOutput out = d.evaluate(z, gather(sweep, d.inputs));
      if (!out.ok || out.y.size() != static_cast<Eigen::Index>(d.outputs.size()) ||
          !out.y.allFinite()) {
        state.y = sweep;
        state.status = MdaStatus::EvaluatorFailure;
        state.iterations = it;
        state.residual = std::numeric_limits<double>::infinity();
        state.message = d.name + ": " +
                        (!out.ok ? out.message
                                 : std::string(out.y.allFinite() ? "wrong output size"
                                                                 : "non-finite output"));
        return state;
      }
      scatter(sweep, d.outputs, out.y);
    }

    const Vector delta = sweep - y;
    state.residual = relative_change(y, sweep);
    state.iterations = it;
    if (state.residual <= config.tolerance) {
      state.y = std::move(sweep);
      state.status = MdaStatus::Converged;
      return state;
    }

    if (config.aitken) {
      if (delta_prev.size() == delta.size()) {
        omega = aitken_update(omega, delta_prev, delta, config.omega_min, config.omega_max);
      }
      y += omega * delta;
    } else {
      y = std::move(sweep);
    }
    delta_prev = delta;
  }

  state.y = y;
  state.status = MdaStatus::MaxIterations;
  return state;
}

}  // namespace mdots::mda
