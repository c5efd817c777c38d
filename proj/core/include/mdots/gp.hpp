#pragma once

// Exact Gaussian-process regression with a squared-exponential kernel.
//
// All hyperparameters live in normalized input / standardized output space:
// inputs are min-max scaled to [0, 1] per dimension and targets are shifted
// to zero mean and unit standard deviation before fitting.

#include <mdots/types.hpp>

#include <optional>
#include <stdexcept>
#include <string>

namespace mdots::gp {

inline constexpr double kDefaultNugget = 1e-7;

struct KernelParams {
  Vector length_scales;         // one per input dimension
  double signal_variance = 1.0; // sigma^2
  double nugget = kDefaultNugget;

  /// Throws std::invalid_argument when any field is non-positive.
  void validate() const;

  bool operator==(const KernelParams&) const = default;
};

/// k(x, x') = sigma^2 * exp(-1/2 * sum_j ((x_j - x'_j) / l_j)^2)
double kernel_eval(const KernelParams& params, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& x_prime);

/// Covariance matrix between the rows of A and the rows of B (no nugget).
Matrix kernel_matrix(const KernelParams& params, const Matrix& a, const Matrix& b);

struct NormStats {
  Vector input_shift;
  Vector input_scale;
  double output_mean = 0.0;
  double output_std = 1.0;

  static NormStats from_data(const Matrix& x, const Vector& y);

  [[nodiscard]] Vector normalize(const Eigen::Ref<const Vector>& x) const;
  [[nodiscard]] Matrix normalize_rows(const Matrix& x) const;

  bool operator==(const NormStats&) const = default;
};

/// Raised when the kernel matrix stays numerically indefinite even after the
/// nugget has been escalated to its ceiling.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, double condition_estimate)
      : std::runtime_error(what), condition_estimate_(condition_estimate) {}
  [[nodiscard]] double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

struct FitOptions {
  double nugget = kDefaultNugget;
  /// Random restarts on top of the default start (l = 1, sigma^2 = 1).
  int restarts = 4;
  /// One shared length scale instead of one per dimension.
  bool isotropic = false;
  double hyper_lower = 1e-2;
  double hyper_upper = 1e2;
  /// Cholesky failure multiplies the nugget by 10 up to this value.
  double max_nugget = 1e-3;
  /// Normalized inputs closer than this are treated as duplicates.
  double duplicate_tolerance = 1e-10;
  /// Optional additional start point, e.g. the previous optimum on refit.
  std::optional<KernelParams> warm_start;
  int max_optimizer_iterations = 200;
};

/// Immutable fitted surrogate for one scalar output.
class TrainedSurrogate {
 public:
  TrainedSurrogate(Matrix x, Vector y, KernelParams params, NormStats norm);

  /// Data-free surrogate: posterior equals the prior GP, in raw units given
  /// by `norm`. Used for prior sampling.
  static TrainedSurrogate prior(KernelParams params, NormStats norm);

  [[nodiscard]] const Matrix& inputs() const { return x_; }
  [[nodiscard]] const Vector& targets() const { return y_; }
  [[nodiscard]] const Matrix& normalized_inputs() const { return x_norm_; }
  [[nodiscard]] const Vector& standardized_targets() const { return y_std_; }
  [[nodiscard]] const KernelParams& params() const { return params_; }
  [[nodiscard]] const NormStats& norm() const { return norm_; }
  /// Lower Cholesky factor of K + nugget * I in normalized space.
  [[nodiscard]] const Matrix& cholesky() const { return chol_; }
  [[nodiscard]] const Vector& alpha() const { return alpha_; }
  [[nodiscard]] Eigen::Index size() const { return x_.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return norm_.input_shift.size(); }

  /// Solve (K + nugget I) u = rhs with the cached factor.
  [[nodiscard]] Vector solve(const Vector& rhs) const;

  /// Posterior mean / variance in standardized units at a normalized input.
  [[nodiscard]] double standardized_mean(const Eigen::Ref<const Vector>& x_norm) const;
  [[nodiscard]] double standardized_variance(const Eigen::Ref<const Vector>& x_norm) const;
  /// Standardized variance before clamping at zero.
  [[nodiscard]] double raw_standardized_variance(const Eigen::Ref<const Vector>& x_norm) const;

 private:
  TrainedSurrogate() = default;
  void factorize();

  Matrix x_;
  Vector y_;
  Matrix x_norm_;
  Vector y_std_;
  KernelParams params_;
  NormStats norm_;
  Matrix chol_;
  Vector alpha_;
};

TrainedSurrogate fit(const Matrix& x, const Vector& y, const FitOptions& options, Rng& rng);

/// log p(y_std | X_norm, params). Throws FitError if the Cholesky fails.
double log_marginal_likelihood(const KernelParams& params, const Matrix& x_norm,
                               const Vector& y_std);

/// Posterior mean in raw output units.
double posterior_mean(const TrainedSurrogate& s, const Eigen::Ref<const Vector>& x);
/// Posterior variance in raw output units, clamped at zero.
double posterior_variance(const TrainedSurrogate& s, const Eigen::Ref<const Vector>& x);

}  // namespace mdots::gp
