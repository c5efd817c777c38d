#pragma once

// Approximate posterior sample paths ("decoupled sampling"): a random Fourier
// feature draw of the prior plus an exact kernel-weighted data correction.
//
//   path(x) = sum_i w_i phi_i(x) + sum_j v_j k(x, x_j)
//   phi_i(x) = sigma * sqrt(2 / l_f) * cos(theta_i^T x + tau_i)
//   v = (K + nugget I)^-1 (y - Phi w - eps),  eps ~ N(0, nugget I)
//
// Paths are evaluated in the surrogate's normalized input space and mapped
// back to raw output units.

#include <mdots/gp.hpp>

#include <memory>

namespace mdots::pathwise {

inline constexpr int kDefaultFeatureCount = 1000;

struct FeatureMap {
  Matrix frequencies;  // l_f x d, rows drawn from the kernel spectral density
  Vector phases;       // l_f, uniform on [0, 2 pi)
  Vector weights;      // l_f, standard normal
  double amplitude = 0.0;  // sigma * sqrt(2 / l_f)

  [[nodiscard]] Eigen::Index count() const { return phases.size(); }
  [[nodiscard]] Eigen::Index dim() const { return frequencies.cols(); }

  /// amplitude * sum_i w_i cos(theta_i^T x + tau_i), x in normalized space.
  [[nodiscard]] double prior_value(const Eigen::Ref<const Vector>& x_norm) const;
  /// Individual features amplitude * cos(theta_i^T x + tau_i), without weights.
  [[nodiscard]] Vector features(const Eigen::Ref<const Vector>& x_norm) const;
};

FeatureMap sample_feature_map(const gp::KernelParams& params, Eigen::Index dim, int feature_count,
                              Rng& rng);

class PathSample {
 public:
  PathSample(FeatureMap features, Vector update_coeffs,
             std::shared_ptr<const gp::TrainedSurrogate> anchor);

  [[nodiscard]] const FeatureMap& features() const { return features_; }
  [[nodiscard]] const Vector& update_coeffs() const { return update_coeffs_; }
  [[nodiscard]] const gp::TrainedSurrogate& anchor() const { return *anchor_; }

  /// Path value in raw output units at a raw input.
  [[nodiscard]] double operator()(const Eigen::Ref<const Vector>& x) const;
  /// Analytic gradient w.r.t. the raw input.
  [[nodiscard]] Vector gradient(const Eigen::Ref<const Vector>& x) const;

 private:
  FeatureMap features_;
  Vector update_coeffs_;
  std::shared_ptr<const gp::TrainedSurrogate> anchor_;
  // Cached products for evaluation: amplitude * w and sigma^2 * v.
  Vector scaled_weights_;
  Vector inv_length_sq_;
};

PathSample draw_path(std::shared_ptr<const gp::TrainedSurrogate> surrogate, int feature_count,
                     Rng& rng);

inline double eval_path(const PathSample& path, const Eigen::Ref<const Vector>& x) {
  return path(x);
}

}  // namespace mdots::pathwise
