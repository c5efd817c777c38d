#include <mdots/gp.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mdots;
using mdots::gp::KernelParams;
using mdots::gp::TrainedSurrogate;

namespace {

KernelParams unit_params(int d) {
  KernelParams p;
  p.length_scales = Vector::Ones(d);
  p.signal_variance = 1.0;
  return p;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TrainedSurrogate surrogate_of(const oracle::GpInstance& inst) {
  return TrainedSurrogate(inst.x, inst.y, inst.params, gp::NormStats::from_data(inst.x, inst.y));
}

}  // namespace

TEST(Kernel, DiagonalEqualsSignalVariance) {
  EXPECT_DOUBLE_EQ(gp::kernel_eval(unit_params(1), vec({0.3}), vec({0.3})), 1.0);
  KernelParams p = unit_params(3);
  p.signal_variance = 4.2;
  EXPECT_DOUBLE_EQ(gp::kernel_eval(p, vec({1, 2, 3}), vec({1, 2, 3})), 4.2);
}

TEST(Kernel, ClosedFormValues) {
  EXPECT_NEAR(gp::kernel_eval(unit_params(2), vec({0, 0}), vec({std::sqrt(2.0), 0})), 0.367879441171, 1e-12);
  KernelParams p;
  p.length_scales = vec({2.0, 1.0});
  p.signal_variance = 2.5;
  // 2.5 * exp(-0.5 * ((2/2)^2 + (1/1)^2)) = 2.5 / e
  EXPECT_NEAR(gp::kernel_eval(p, vec({0, 0}), vec({2, 1})), 0.919698602929, 1e-12);
}

TEST(Kernel, Symmetric) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  KernelParams p;
  p.length_scales = vec({0.4, 1.7, 0.9});
  p.signal_variance = 1.3;
  for (int t = 0; t < 50; ++t) {
    const Vector a = vec({n(rng), n(rng), n(rng)});
    const Vector b = vec({n(rng), n(rng), n(rng)});
    EXPECT_EQ(gp::kernel_eval(p, a, b), gp::kernel_eval(p, b, a));
  }
}

TEST(Kernel, DimensionMismatchThrows) {
  EXPECT_THROW(gp::kernel_eval(unit_params(2), vec({0}), vec({0, 1})), std::invalid_argument);
  EXPECT_THROW(gp::kernel_eval(unit_params(1), vec({0, 1}), vec({0, 1})), std::invalid_argument);
}

TEST(KernelParams, ValidateRejectsNonPositive) {
  KernelParams p = unit_params(2);
  EXPECT_NO_THROW(p.validate());
  p.signal_variance = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = unit_params(2);
  p.length_scales[1] = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = unit_params(2);
  p.nugget = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(NormStats, DegenerateColumnsFallBackToUnitScale) {
  Matrix x(3, 2);
  x << 1, 5, 2, 5, 3, 5;
  const Vector y = vec({7, 7, 7});
  const auto s = gp::NormStats::from_data(x, y);
  EXPECT_DOUBLE_EQ(s.input_scale[0], 2.0);
  EXPECT_DOUBLE_EQ(s.input_scale[1], 1.0);
  EXPECT_DOUBLE_EQ(s.output_mean, 7.0);
  EXPECT_DOUBLE_EQ(s.output_std, 1.0);
}

TEST(LogMarginalLikelihood, SinglePointClosedForm) {
  Matrix x(1, 1);
  x << 0.0;
  const double expected = -0.5 * std::log(2.0 * M_PI) - 0.5 * std::log(1.0 + 1e-7);
  EXPECT_NEAR(gp::log_marginal_likelihood(unit_params(1), x, vec({0.0})), expected, 1e-14);
}

TEST(LogMarginalLikelihood, TwoFarApartPoints) {
  // K = I up to exp(-50^2/2): y^T y / 2 = 1, log det = 0, (n/2) log 2 pi = log 2 pi.
  Matrix x(2, 1);
  x << 0.0, 50.0;
  EXPECT_NEAR(gp::log_marginal_likelihood(unit_params(1), x, vec({1.0, -1.0})), -1.0 - std::log(2.0 * M_PI),
              1e-6);
}

TEST(LogMarginalLikelihood, DecreasesForHugeSignalVariance) {
  std::mt19937_64 rng(11);
  const auto inst = oracle::random_instance(rng, 8, 2);
  const Matrix xn = gp::NormStats::from_data(inst.x, inst.y).normalize_rows(inst.x);
  const Vector ys = (inst.y.array() - inst.y.mean()) / std::sqrt((inst.y.array() - inst.y.mean()).square().mean());
  KernelParams p = inst.params;
  p.signal_variance = 1.0;
  const double base = gp::log_marginal_likelihood(p, xn, ys);
  p.signal_variance = 1e6;
  EXPECT_LT(gp::log_marginal_likelihood(p, xn, ys), base);
}

TEST(LogMarginalLikelihood, Deterministic) {
  std::mt19937_64 rng(12);
  const auto inst = oracle::random_instance(rng, 10, 3);
  const Matrix xn = gp::NormStats::from_data(inst.x, inst.y).normalize_rows(inst.x);
  EXPECT_EQ(gp::log_marginal_likelihood(inst.params, xn, inst.y),
            gp::log_marginal_likelihood(inst.params, xn, inst.y));
}

TEST(Fit, ZeroTargetsGiveZeroMean) {
  Matrix x(2, 1);
  x << 0.0, 1.0;
  Rng rng(1);
  const auto s = gp::fit(x, vec({0.0, 0.0}), {}, rng);
  EXPECT_DOUBLE_EQ(s.norm().output_std, 1.0);
  for (double t : {-3.0, 0.0, 0.25, 0.5, 1.0, 7.0}) EXPECT_NEAR(gp::posterior_mean(s, vec({t})), 0.0, 1e-15);
}

TEST(Fit, InterpolatesSine) {
  Matrix x(5, 1);
  Vector y(5);
  for (int i = 0; i < 5; ++i) {
    x(i, 0) = 2.0 * M_PI * i / 4.0;
    y[i] = std::sin(x(i, 0));
  }
  Rng rng(2);
  const auto s = gp::fit(x, y, {}, rng);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(gp::posterior_mean(s, x.row(i).transpose()), y[i], 1e-3);
}

TEST(Fit, QuadraticPredictionMatchesDenseSolve) {
  Matrix x(20, 1);
  Vector y(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = -2.0 + 4.0 * i / 19.0;
    y[i] = x(i, 0) * x(i, 0);
  }
  Rng rng(3);
  const auto s = gp::fit(x, y, {}, rng);
  const double m = gp::posterior_mean(s, vec({0.5}));
  EXPECT_NEAR(m, 0.25, 1e-2);
  const auto oracle = oracle::dense_posterior(x, y, s.params(), vec({0.5}));
  EXPECT_NEAR(m, oracle.mean, 1e-8);
}

TEST(Fit, HyperparametersWithinBox) {
  std::mt19937_64 gen(4);
  for (int t = 0; t < 5; ++t) {
    const auto inst = oracle::random_instance(gen, 12, 2);
    Rng rng(t);
    const auto s = gp::fit(inst.x, inst.y, {}, rng);
    EXPECT_GE(s.params().signal_variance, 1e-2 * (1 - 1e-12));
    EXPECT_LE(s.params().signal_variance, 1e2 * (1 + 1e-12));
    for (Eigen::Index j = 0; j < 2; ++j) {
      EXPECT_GE(s.params().length_scales[j], 1e-2 * (1 - 1e-12));
      EXPECT_LE(s.params().length_scales[j], 1e2 * (1 + 1e-12));
    }
  }
}

TEST(Fit, OptimumBeatsDefaultStart) {
  std::mt19937_64 gen(5);
  const auto inst = oracle::random_instance(gen, 15, 2);
  Rng rng(9);
  const auto s = gp::fit(inst.x, inst.y, {}, rng);
  const double at_fit = gp::log_marginal_likelihood(s.params(), s.normalized_inputs(), s.standardized_targets());
  const double at_unit = gp::log_marginal_likelihood(unit_params(2), s.normalized_inputs(), s.standardized_targets());
  EXPECT_GE(at_fit, at_unit - 1e-9);
}

TEST(Fit, DeterministicForSameSeed) {
  std::mt19937_64 gen(6);
  const auto inst = oracle::random_instance(gen, 10, 3);
  Rng a(77), b(77);
  const auto sa = gp::fit(inst.x, inst.y, {}, a);
  const auto sb = gp::fit(inst.x, inst.y, {}, b);
  EXPECT_TRUE(sa.params() == sb.params());
  EXPECT_EQ(sa.alpha(), sb.alpha());
}

TEST(Fit, DuplicatesKeepLatestTarget) {
  Matrix x(4, 1);
  x << 0.0, 0.5, 1.0, 0.5;
  Rng rng(1);
  const auto s = gp::fit(x, vec({0.0, 1.0, 0.0, 3.0}), {}, rng);
  EXPECT_EQ(s.size(), 3);
  EXPECT_NEAR(gp::posterior_mean(s, vec({0.5})), 3.0, 1e-2);
}

TEST(Fit, RejectsTooFewPoints) {
  Matrix x(1, 1);
  x << 0.0;
  Rng rng(1);
  EXPECT_THROW(gp::fit(x, vec({1.0}), {}, rng), std::invalid_argument);
}

TEST(Fit, IsotropicSharesLengthScale) {
  std::mt19937_64 gen(8);
  const auto inst = oracle::random_instance(gen, 12, 3);
  gp::FitOptions opts;
  opts.isotropic = true;
  Rng rng(2);
  const auto s = gp::fit(inst.x, inst.y, opts, rng);
  EXPECT_EQ(s.params().length_scales[0], s.params().length_scales[1]);
  EXPECT_EQ(s.params().length_scales[0], s.params().length_scales[2]);
}

TEST(TrainedSurrogate, CholeskyReconstructsKernelMatrix) {
  std::mt19937_64 gen(13);
  for (int t = 0; t < 10; ++t) {
    const auto inst = oracle::random_instance(gen, 5 + t * 3, 1 + t % 4);
    const auto s = surrogate_of(inst);
    Matrix k = gp::kernel_matrix(s.params(), s.normalized_inputs(), s.normalized_inputs());
    k.diagonal().array() += s.params().nugget;
    const Matrix l = s.cholesky();
    EXPECT_LE((l * l.transpose() - k).norm() / k.norm(), 1e-8);
  }
}

TEST(Posterior, MatchesDenseOracle) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(-3.5, 3.5);
  for (int t = 0; t < 20; ++t) {
    const int d = 1 + t % 4;
    const auto inst = oracle::random_instance(gen, 10, d);
    const auto s = surrogate_of(inst);
    const double sd = s.norm().output_std;
    for (int q = 0; q < 5; ++q) {
      Vector xs(d);
      for (int j = 0; j < d; ++j) xs[j] = u(gen);
      const auto o = oracle::dense_posterior(inst.x, inst.y, inst.params, xs);
      EXPECT_LE(oracle::rel_diff(gp::posterior_mean(s, xs), o.mean, sd), 1e-10);
      EXPECT_LE(oracle::rel_diff(gp::posterior_variance(s, xs), std::max(o.variance, 0.0),
                                  inst.params.signal_variance * sd * sd),
                1e-10);
    }
  }
}

TEST(Posterior, FittedSurrogateInterpolatesTrainingTargets) {
  std::mt19937_64 gen(22);
  for (int t = 0; t < 10; ++t) {
    const auto inst = oracle::random_instance(gen, 12, 1 + t % 3);
    Rng rng(t);
    const auto s = gp::fit(inst.x, inst.y, {}, rng);
    const double sd = s.norm().output_std;
    for (Eigen::Index i = 0; i < inst.x.rows(); ++i) {
      const Vector xi = inst.x.row(i).transpose();
      EXPECT_LE(std::abs(gp::posterior_mean(s, xi) - inst.y[i]), 1e-2 * sd);
      EXPECT_LE(gp::posterior_variance(s, xi), 2.0 * s.params().nugget * sd * sd);
    }
  }
}

TEST(Posterior, SmoothDataInterpolatedWithinNuggetScale) {
  Matrix x(6, 1);
  Vector y(6);
  for (int i = 0; i < 6; ++i) {
    x(i, 0) = i;
    y[i] = std::cos(0.8 * i);
  }
  Rng rng(3);
  const auto s = gp::fit(x, y, {}, rng);
  const double sd = s.norm().output_std;
  for (int i = 0; i < 6; ++i) {
    EXPECT_LE(std::abs(gp::posterior_mean(s, x.row(i).transpose()) - y[i]), 10.0 * std::sqrt(1e-7) * sd);
  }
}

TEST(Posterior, VarianceAtTrainingPointNearNugget) {
  Matrix x(3, 1);
  x << 0.0, 0.5, 1.0;
  KernelParams p = unit_params(1);
  p.length_scales[0] = 0.05;  // nearly independent points
  const auto s = TrainedSurrogate(x, vec({1.0, -1.0, 2.0}), p, gp::NormStats::from_data(x, vec({1.0, -1.0, 2.0})));
  const double sd2 = s.norm().output_std * s.norm().output_std;
  const double v = gp::posterior_variance(s, vec({0.5}));
  EXPECT_GE(v, 0.5 * 1e-7 * sd2);
  EXPECT_LE(v, 2.0 * 1e-7 * sd2);
}

TEST(Posterior, RevertsToPriorFarFromData) {
  std::mt19937_64 gen(23);
  const auto inst = oracle::random_instance(gen, 10, 2);
  const auto s = surrogate_of(inst);
  // Normalized coordinates are in [0, 1]; 20 length scales beyond in every dimension.
  Vector far(2);
  for (int j = 0; j < 2; ++j) {
    far[j] = s.norm().input_shift[j] + s.norm().input_scale[j] * (1.0 + 20.0 * s.params().length_scales[j]);
  }
  const double sd = s.norm().output_std;
  EXPECT_LE(std::abs(gp::posterior_mean(s, far) - s.norm().output_mean), 1e-3 * sd);
  const double prior = s.params().signal_variance * sd * sd;
  EXPECT_LE(std::abs(gp::posterior_variance(s, far) - prior) / prior, 1e-3);
}

TEST(Posterior, VarianceNonNegativeEverywhere) {
  std::mt19937_64 gen(24);
  std::uniform_int_distribution<int> nd(2, 50), dd(1, 6);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int t = 0; t < 20; ++t) {
    const int n = nd(gen), d = dd(gen);
    auto inst = oracle::random_instance(gen, n, d);
    const auto s = surrogate_of(inst);
    for (int q = 0; q < 500; ++q) {
      Vector xs(d);
      for (int j = 0; j < d; ++j) xs[j] = q % 5 == 0 ? inst.x(q % n, j) : u(gen);
      const Vector xn = s.norm().normalize(xs);
      EXPECT_GE(s.raw_standardized_variance(xn), -1e-9);
      EXPECT_GE(gp::posterior_variance(s, xs), 0.0);
    }
  }
}

TEST(Posterior, AffineTargetMapShiftsMeanExactly) {
  std::mt19937_64 gen(25);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 5; ++t) {
    const auto inst = oracle::random_instance(gen, 10, 2);
    const double a = 0.01 + 50.0 * std::abs(u(gen)), b = 100.0 * u(gen);
    const Vector y2 = (a * inst.y.array() + b).matrix();
    Rng r1(5), r2(5);
    const auto s1 = gp::fit(inst.x, inst.y, {}, r1);
    const auto s2 = gp::fit(inst.x, y2, {}, r2);
    for (int q = 0; q < 5; ++q) {
      const Vector xs = (Vector(2) << u(gen), u(gen)).finished();
      const double expected = a * gp::posterior_mean(s1, xs) + b;
      EXPECT_LE(std::abs(gp::posterior_mean(s2, xs) - expected) / std::max(std::abs(expected), a * s1.norm().output_std),
                1e-8);
    }
  }
}

TEST(Posterior, DimensionMismatchThrows) {
  std::mt19937_64 gen(26);
  const auto s = surrogate_of(oracle::random_instance(gen, 5, 2));
  EXPECT_THROW(gp::posterior_mean(s, vec({1.0})), std::invalid_argument);
}

TEST(TrainedSurrogate, PriorSurrogateHasNoData) {
  gp::NormStats norm;
  norm.input_shift = Vector::Zero(2);
  norm.input_scale = Vector::Ones(2);
  norm.output_mean = 3.0;
  norm.output_std = 2.0;
  const auto s = TrainedSurrogate::prior(unit_params(2), norm);
  EXPECT_EQ(s.size(), 0);
  EXPECT_DOUBLE_EQ(gp::posterior_mean(s, vec({0.1, 0.2})), 3.0);
  EXPECT_DOUBLE_EQ(gp::posterior_variance(s, vec({0.1, 0.2})), 4.0);
}

TEST(Fit, EscalatesNuggetForNearDuplicateInputs) {
  // Points closer than the factorization can resolve at nugget 1e-7 but
  // farther than the dedup tolerance.
  Matrix x(6, 1);
  x << 0.0, 1.0, 0.5, 0.5 + 1e-9, 0.5 + 2e-9, 0.25;
  Rng rng(4);
  gp::FitOptions opts;
  opts.warm_start = unit_params(1);
  opts.warm_start->length_scales[0] = 100.0;
  opts.warm_start->signal_variance = 100.0;
  const auto s = gp::fit(x, vec({0.0, 1.0, 0.5, 0.6, 0.4, 0.2}), opts, rng);
  EXPECT_GE(s.params().nugget, 1e-7);
  EXPECT_LE(s.params().nugget, 1e-3);
  EXPECT_TRUE(s.alpha().allFinite());
}
