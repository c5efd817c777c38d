#include <mdots/gp.hpp>

#include "bounded_lbfgs.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace mdots::gp {
namespace {

constexpr double kDegenerateScale = 1e-12;

void check_dims(Eigen::Index expected, Eigen::Index got, const char* what) {
  if (expected != got) {
    std::ostringstream os;
    os << what << ": dimension mismatch (expected " << expected << ", got " << got << ")";
    throw std::invalid_argument(os.str());
  }
}

// Hyperparameter vector layout: log length scales (d of them, or one when
// isotropic) followed by log signal variance.
KernelParams unpack(const Vector& theta, Eigen::Index dim, bool isotropic, double nugget) {
  KernelParams p;
  p.length_scales = isotropic ? Vector::Constant(dim, std::exp(theta[0]))
                              : Vector(theta.head(dim).array().exp());
  p.signal_variance = std::exp(theta[theta.size() - 1]);
  p.nugget = nugget;
  return p;
}

Vector pack(const KernelParams& p, bool isotropic) {
  const Eigen::Index n_len = isotropic ? 1 : p.length_scales.size();
  Vector theta(n_len + 1);
  if (isotropic) {
    theta[0] = std::log(p.length_scales.mean());
  } else {
    theta.head(n_len) = p.length_scales.array().log();
  }
  theta[n_len] = std::log(p.signal_variance);
  return theta;
}

// Negative log marginal likelihood and its gradient w.r.t. the packed
// log-hyperparameters. Returns +inf when the Cholesky fails.
double negative_lml(const Vector& theta, const Matrix& xn, const Vector& ys, double nugget,
                    bool isotropic, Vector& grad) {
  const Eigen::Index n = xn.rows();
  const Eigen::Index d = xn.cols();
  const KernelParams p = unpack(theta, d, isotropic, nugget);

  const Matrix k = kernel_matrix(p, xn, xn);
  Matrix k_noisy = k;
  k_noisy.diagonal().array() += nugget;
  const Eigen::LLT<Matrix> llt(k_noisy);
  if (llt.info() != Eigen::Success) {
    grad.setZero();
    return std::numeric_limits<double>::infinity();
  }
  const Matrix& l = llt.matrixLLT();
  const Vector alpha = llt.solve(ys);
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det_half += std::log(l(i, i));
  const double lml = -0.5 * ys.dot(alpha) - log_det_half -
                     0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // d(lml)/d theta = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta)
  const Matrix w = alpha * alpha.transpose() - llt.solve(Matrix::Identity(n, n));
  const Eigen::Index n_len = isotropic ? 1 : d;
  grad.setZero(n_len + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double wk = w(i, j) * k(i, j);
      grad[n_len] += wk;
      for (Eigen::Index c = 0; c < d; ++c) {
        const double diff = (xn(i, c) - xn(j, c)) / p.length_scales[c];
        grad[isotropic ? 0 : c] += wk * diff * diff;
      }
    }
  }
  grad *= -0.5;  // negate for minimization, halve for the trace formula
  if (!std::isfinite(lml)) return std::numeric_limits<double>::infinity();
  return -lml;
}

double condition_estimate(const Matrix& k_noisy) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(k_noisy, Eigen::EigenvaluesOnly);
  const Vector ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

// Keeps the latest row among rows whose normalized inputs coincide.
void deduplicate(Matrix& x, Vector& y, const NormStats& norm, double tol) {
  const Matrix xn = norm.normalize_rows(x);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    bool superseded = false;
    for (Eigen::Index j = i + 1; j < x.rows() && !superseded; ++j) {
      superseded = (xn.row(i) - xn.row(j)).norm() < tol;
    }
    if (!superseded) keep.push_back(i);
  }
  if (static_cast<Eigen::Index>(keep.size()) == x.rows()) return;
  Matrix xk(static_cast<Eigen::Index>(keep.size()), x.cols());
  Vector yk(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    xk.row(static_cast<Eigen::Index>(r)) = x.row(keep[r]);
    yk[static_cast<Eigen::Index>(r)] = y[keep[r]];
  }
  x = std::move(xk);
  y = std::move(yk);
}

}  // namespace

void KernelParams::validate() const {
  if (length_scales.size() == 0) throw std::invalid_argument("KernelParams: no length scales");
  if ((length_scales.array() <= 0.0).any() || !length_scales.allFinite()) {
    throw std::invalid_argument("KernelParams: length scales must be positive");
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw std::invalid_argument("KernelParams: signal variance must be positive");
  }
  if (!(nugget > 0.0) || !std::isfinite(nugget)) {
    throw std::invalid_argument("KernelParams: nugget must be positive");
  }
}

double kernel_eval(const KernelParams& params, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& x_prime) {
  check_dims(params.length_scales.size(), x.size(), "kernel_eval");
  check_dims(params.length_scales.size(), x_prime.size(), "kernel_eval");
  const double r2 = ((x - x_prime).array() / params.length_scales.array()).square().sum();
  return params.signal_variance * std::exp(-0.5 * r2);
}

Matrix kernel_matrix(const KernelParams& params, const Matrix& a, const Matrix& b) {
  check_dims(params.length_scales.size(), a.cols(), "kernel_matrix");
  check_dims(params.length_scales.size(), b.cols(), "kernel_matrix");
  const Eigen::RowVectorXd inv_l = params.length_scales.cwiseInverse().transpose();
  const Matrix as = a.array().rowwise() * inv_l.array();
  const Matrix bs = b.array().rowwise() * inv_l.array();
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      k(i, j) = params.signal_variance * std::exp(-0.5 * (as.row(i) - bs.row(j)).squaredNorm());
    }
  }
  return k;
}

NormStats NormStats::from_data(const Matrix& x, const Vector& y) {
  NormStats s;
  const Eigen::Index d = x.cols();
  s.input_shift = Vector::Zero(d);
  s.input_scale = Vector::Ones(d);
  if (x.rows() > 0) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const double lo = x.col(c).minCoeff();
      const double range = x.col(c).maxCoeff() - lo;
      s.input_shift[c] = lo;
      s.input_scale[c] = range > kDegenerateScale * std::max(1.0, std::abs(lo)) ? range : 1.0;
    }
  }
  if (y.size() > 0) {
    s.output_mean = y.mean();
    const double sd = std::sqrt((y.array() - s.output_mean).square().mean());
    s.output_std = sd > kDegenerateScale * std::max(1.0, std::abs(s.output_mean)) ? sd : 1.0;
  }
  return s;
}

Vector NormStats::normalize(const Eigen::Ref<const Vector>& x) const {
  check_dims(input_shift.size(), x.size(), "NormStats::normalize");
  return (x - input_shift).cwiseQuotient(input_scale);
}

Matrix NormStats::normalize_rows(const Matrix& x) const {
  check_dims(input_shift.size(), x.cols(), "NormStats::normalize_rows");
  return (x.rowwise() - input_shift.transpose()).array().rowwise() /
         input_scale.transpose().array();
}

TrainedSurrogate::TrainedSurrogate(Matrix x, Vector y, KernelParams params, NormStats norm)
    : x_(std::move(x)), y_(std::move(y)), params_(std::move(params)), norm_(std::move(norm)) {
  params_.validate();
  if (x_.rows() != y_.size()) {
    throw std::invalid_argument("TrainedSurrogate: inputs and targets disagree in count");
  }
  check_dims(params_.length_scales.size(), x_.cols(), "TrainedSurrogate");
  check_dims(norm_.input_shift.size(), x_.cols(), "TrainedSurrogate");
  x_norm_ = norm_.normalize_rows(x_);
  y_std_ = (y_.array() - norm_.output_mean) / norm_.output_std;
  factorize();
}

TrainedSurrogate TrainedSurrogate::prior(KernelParams params, NormStats norm) {
  params.validate();
  check_dims(params.length_scales.size(), norm.input_shift.size(), "TrainedSurrogate::prior");
  TrainedSurrogate s;
  const Eigen::Index d = norm.input_shift.size();
  s.x_ = Matrix(0, d);
  s.y_ = Vector(0);
  s.x_norm_ = Matrix(0, d);
  s.y_std_ = Vector(0);
  s.params_ = std::move(params);
  s.norm_ = std::move(norm);
  s.chol_ = Matrix(0, 0);
  s.alpha_ = Vector(0);
  return s;
}

void TrainedSurrogate::factorize() {
  Matrix k = kernel_matrix(params_, x_norm_, x_norm_);
  k.diagonal().array() += params_.nugget;
  const Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "Cholesky factorization failed (n=" << x_norm_.rows() << ", nugget=" << params_.nugget
       << ")";
    throw FitError(os.str(), condition_estimate(k));
  }
  chol_ = llt.matrixL();
  alpha_ = llt.solve(y_std_);
}

Vector TrainedSurrogate::solve(const Vector& rhs) const {
  check_dims(chol_.rows(), rhs.size(), "TrainedSurrogate::solve");
  const auto l = chol_.triangularView<Eigen::Lower>();
  return l.transpose().solve(l.solve(rhs));
}

double TrainedSurrogate::standardized_mean(const Eigen::Ref<const Vector>& x_norm) const {
  double m = 0.0;
  const Vector inv_l2 = params_.length_scales.array().square().inverse();
  for (Eigen::Index j = 0; j < x_norm_.rows(); ++j) {
    const double r2 = ((x_norm_.row(j).transpose() - x_norm).array().square() * inv_l2.array()).sum();
    m += alpha_[j] * params_.signal_variance * std::exp(-0.5 * r2);
  }
  return m;
}

double TrainedSurrogate::raw_standardized_variance(const Eigen::Ref<const Vector>& x_norm) const {
  if (x_norm_.rows() == 0) return params_.signal_variance;
  Vector k_star(x_norm_.rows());
  const Vector inv_l2 = params_.length_scales.array().square().inverse();
  for (Eigen::Index j = 0; j < x_norm_.rows(); ++j) {
    const double r2 = ((x_norm_.row(j).transpose() - x_norm).array().square() * inv_l2.array()).sum();
    k_star[j] = params_.signal_variance * std::exp(-0.5 * r2);
  }
  const Vector v = chol_.triangularView<Eigen::Lower>().solve(k_star);
  return params_.signal_variance - v.squaredNorm();
}

double TrainedSurrogate::standardized_variance(const Eigen::Ref<const Vector>& x_norm) const {
  return std::max(0.0, raw_standardized_variance(x_norm));
}

double log_marginal_likelihood(const KernelParams& params, const Matrix& x_norm,
                               const Vector& y_std) {
  params.validate();
  check_dims(x_norm.rows(), y_std.size(), "log_marginal_likelihood");
  Matrix k = kernel_matrix(params, x_norm, x_norm);
  k.diagonal().array() += params.nugget;
  const Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    throw FitError("log_marginal_likelihood: Cholesky factorization failed", condition_estimate(k));
  }
  const Vector alpha = llt.solve(y_std);
  const Matrix& l = llt.matrixLLT();
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) log_det_half += std::log(l(i, i));
  return -0.5 * y_std.dot(alpha) - log_det_half -
         0.5 * static_cast<double>(y_std.size()) * std::log(2.0 * std::numbers::pi);
}

TrainedSurrogate fit(const Matrix& x_in, const Vector& y_in, const FitOptions& options, Rng& rng) {
  if (x_in.rows() != y_in.size()) {
    throw std::invalid_argument("fit: inputs and targets disagree in count");
  }
  if (x_in.rows() < 2) throw std::invalid_argument("fit: at least two training points required");
  if (x_in.cols() < 1) throw std::invalid_argument("fit: inputs need at least one dimension");
  if (!x_in.allFinite() || !y_in.allFinite()) {
    throw std::invalid_argument("fit: training data contains non-finite values");
  }
  if (!(options.hyper_lower > 0.0 && options.hyper_lower < options.hyper_upper)) {
    throw std::invalid_argument("fit: invalid hyperparameter bounds");
  }

  Matrix x = x_in;
  Vector y = y_in;
  deduplicate(x, y, NormStats::from_data(x, y), options.duplicate_tolerance);
  const NormStats norm = NormStats::from_data(x, y);
  const Matrix xn = norm.normalize_rows(x);
  const Vector ys = (y.array() - norm.output_mean) / norm.output_std;

  const Eigen::Index d = x.cols();
  const Eigen::Index n_theta = (options.isotropic ? 1 : d) + 1;
  const Vector lower = Vector::Constant(n_theta, std::log(options.hyper_lower));
  const Vector upper = Vector::Constant(n_theta, std::log(options.hyper_upper));

  std::vector<Vector> starts;
  if (options.warm_start) {
    const KernelParams& w = *options.warm_start;
    if (w.length_scales.size() == d) {
      starts.push_back(pack(w, options.isotropic).cwiseMax(lower).cwiseMin(upper));
    }
  }
  starts.push_back(Vector::Zero(n_theta));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 0; r < options.restarts; ++r) {
    Vector s(n_theta);
    for (Eigen::Index i = 0; i < n_theta; ++i) s[i] = lower[i] + unit(rng) * (upper[i] - lower[i]);
    starts.push_back(std::move(s));
  }

  detail::BoundedLbfgsOptions lbfgs;
  lbfgs.max_iterations = options.max_optimizer_iterations;

  double nugget = options.nugget;
  double last_condition = std::numeric_limits<double>::infinity();
  while (true) {
    const detail::ValueAndGradient objective = [&](const Vector& theta, Vector& grad) {
      return negative_lml(theta, xn, ys, nugget, options.isotropic, grad);
    };
    Vector best_theta;
    double best_value = std::numeric_limits<double>::infinity();
    for (const Vector& start : starts) {
      const auto res = detail::minimize_bounded(objective, start, lower, upper, lbfgs);
      if (res.value < best_value) {
        best_value = res.value;
        best_theta = res.x;
      }
    }
    if (std::isfinite(best_value)) {
      try {
        return TrainedSurrogate(x, y, unpack(best_theta, d, options.isotropic, nugget), norm);
      } catch (const FitError& e) {
        last_condition = e.condition_estimate();
      }
    } else {
      KernelParams p = unpack(Vector::Zero(n_theta), d, options.isotropic, nugget);
      Matrix k = kernel_matrix(p, xn, xn);
      k.diagonal().array() += nugget;
      last_condition = condition_estimate(k);
    }
    if (nugget * 10.0 > options.max_nugget * (1.0 + 1e-12)) break;
    nugget *= 10.0;
  }

  std::ostringstream os;
  os << "fit: kernel matrix not positive definite after nugget escalation to " << nugget
     << " (n=" << x.rows() << ", condition estimate " << last_condition << ")";
  throw FitError(os.str(), last_condition);
}

double posterior_mean(const TrainedSurrogate& s, const Eigen::Ref<const Vector>& x) {
  const Vector xn = s.norm().normalize(x);
  return s.norm().output_mean + s.norm().output_std * s.standardized_mean(xn);
}

double posterior_variance(const TrainedSurrogate& s, const Eigen::Ref<const Vector>& x) {
  const Vector xn = s.norm().normalize(x);
  return s.norm().output_std * s.norm().output_std * s.standardized_variance(xn);
}

}  // namespace mdots::gp
