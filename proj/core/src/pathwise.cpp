#include <mdots/pathwise.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mdots::pathwise {

double FeatureMap::prior_value(const Eigen::Ref<const Vector>& x_norm) const {
  const Vector arg = frequencies * x_norm + phases;
  return amplitude * weights.dot(arg.array().cos().matrix());
}

Vector FeatureMap::features(const Eigen::Ref<const Vector>& x_norm) const {
  return amplitude * (frequencies * x_norm + phases).array().cos().matrix();
}

FeatureMap sample_feature_map(const gp::KernelParams& params, Eigen::Index dim, int feature_count,
                              Rng& rng) {
  params.validate();
  if (feature_count < 1) throw std::invalid_argument("sample_feature_map: feature_count must be >= 1");
  if (params.length_scales.size() != dim) {
    throw std::invalid_argument("sample_feature_map: length scale count does not match dimension");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  FeatureMap map;
  map.frequencies.resize(feature_count, dim);
  map.phases.resize(feature_count);
  map.weights.resize(feature_count);
  // Squared-exponential spectral density: theta_j ~ N(0, 1 / l_j^2).
  for (int i = 0; i < feature_count; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      map.frequencies(i, j) = normal(rng) / params.length_scales[j];
    }
  }
  for (int i = 0; i < feature_count; ++i) map.phases[i] = phase(rng);
  for (int i = 0; i < feature_count; ++i) map.weights[i] = normal(rng);
  map.amplitude = std::sqrt(params.signal_variance) * std::sqrt(2.0 / feature_count);
  return map;
}

PathSample::PathSample(FeatureMap features, Vector update_coeffs,
                       std::shared_ptr<const gp::TrainedSurrogate> anchor)
    : features_(std::move(features)),
      update_coeffs_(std::move(update_coeffs)),
      anchor_(std::move(anchor)) {
  if (!anchor_) throw std::invalid_argument("PathSample: null surrogate");
  if (update_coeffs_.size() != anchor_->size()) {
    throw std::invalid_argument("PathSample: update coefficient count does not match data");
  }
  if (features_.dim() != anchor_->dim()) {
    throw std::invalid_argument("PathSample: feature map dimension does not match surrogate");
  }
  scaled_weights_ = features_.amplitude * features_.weights;
  inv_length_sq_ = anchor_->params().length_scales.array().square().inverse();
}

double PathSample::operator()(const Eigen::Ref<const Vector>& x) const {
  const gp::NormStats& norm = anchor_->norm();
  const Vector xn = norm.normalize(x);
  const Vector arg = features_.frequencies * xn + features_.phases;
  double value = scaled_weights_.dot(arg.array().cos().matrix());

  const Matrix& xs = anchor_->normalized_inputs();
  const double s2 = anchor_->params().signal_variance;
  for (Eigen::Index j = 0; j < xs.rows(); ++j) {
    const double r2 = ((xs.row(j).transpose() - xn).array().square() * inv_length_sq_.array()).sum();
    value += update_coeffs_[j] * s2 * std::exp(-0.5 * r2);
  }
  return norm.output_mean + norm.output_std * value;
}

Vector PathSample::gradient(const Eigen::Ref<const Vector>& x) const {
  const gp::NormStats& norm = anchor_->norm();
  const Vector xn = norm.normalize(x);
  const Vector arg = features_.frequencies * xn + features_.phases;
  // d/dx_norm of sum_i a w_i cos(theta_i^T x + tau_i)
  const Vector sines = (scaled_weights_.array() * arg.array().sin()).matrix();
  Vector grad_norm = -(features_.frequencies.transpose() * sines);

  const Matrix& xs = anchor_->normalized_inputs();
  const double s2 = anchor_->params().signal_variance;
  for (Eigen::Index j = 0; j < xs.rows(); ++j) {
    const Vector diff = xn - xs.row(j).transpose();
    const double r2 = (diff.array().square() * inv_length_sq_.array()).sum();
    const double k = s2 * std::exp(-0.5 * r2);
    grad_norm -= update_coeffs_[j] * k * (diff.array() * inv_length_sq_.array()).matrix();
  }
  return norm.output_std * grad_norm.cwiseQuotient(norm.input_scale);
}

PathSample draw_path(std::shared_ptr<const gp::TrainedSurrogate> surrogate, int feature_count,
                     Rng& rng) {
  if (!surrogate) throw std::invalid_argument("draw_path: null surrogate");
  FeatureMap map = sample_feature_map(surrogate->params(), surrogate->dim(), feature_count, rng);

  const Eigen::Index n = surrogate->size();
  Vector v(n);
  if (n > 0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double noise_sd = std::sqrt(surrogate->params().nugget);
    const Matrix& xs = surrogate->normalized_inputs();
    Vector residual(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double eps = noise_sd * normal(rng);
      residual[j] = surrogate->standardized_targets()[j] - map.prior_value(xs.row(j).transpose()) - eps;
    }
    v = surrogate->solve(residual);
  }
  return PathSample(std::move(map), std::move(v), std::move(surrogate));
}

}  // namespace mdots::pathwise
