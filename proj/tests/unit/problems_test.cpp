#include <mdots/gp.hpp>
#include <mdots/mda.hpp>
#include <mdots/problems.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace mdots;
using problems::MdoProblem;

namespace {

Vector eval(const MdoProblem& p, int i, const Vector& z, const Vector& y_in) {
  const auto out = p.disciplines[static_cast<std::size_t>(i)].evaluate(z, y_in);
  EXPECT_TRUE(out.ok) << out.message;
  return out.y;
}

}  // namespace

TEST(ToyProblem, DisciplineValues) {
  const auto p = problems::toy_problem();
  EXPECT_NEAR(eval(p, 1, Vector{{-2.9989}}, Vector{{9.9607}})[0], 6.9618, 1e-12);
  EXPECT_DOUBLE_EQ(eval(p, 0, Vector{{0.0}}, Vector{{0.0}})[0], -1.0);
}

TEST(ToyProblem, Wiring) {
  const auto p = problems::toy_problem();
  EXPECT_EQ(p.id, "toy");
  EXPECT_EQ(p.design_dim(), 1);
  EXPECT_EQ(p.coupling_dim(), 2);
  EXPECT_EQ(p.discipline_count(), 2);
  EXPECT_EQ(p.z_bounds.lower[0], -5.0);
  EXPECT_EQ(p.z_bounds.upper[0], 5.0);
  EXPECT_NO_THROW(p.validate());
}

TEST(ToyProblem, ObjectiveAtReferenceFixedPoint) {
  const auto p = problems::toy_problem();
  const Vector y = oracle::toy_fixed_point(-2.9989);
  EXPECT_NEAR(p.objective(Vector{{-2.9989}}, y), -1.1497, 5e-4);
  EXPECT_DOUBLE_EQ(p.objective(Vector{{-2.9989}}, y), oracle::toy_objective(-2.9989, y));
}

TEST(ToyProblem, FixedPointsStayInsideCouplingBounds) {
  const auto p = problems::toy_problem();
  for (int k = 0; k <= 100; ++k) {
    const double z = -5.0 + 0.1 * k;
    const Vector y = oracle::toy_fixed_point(z);
    EXPECT_TRUE(p.y_bounds.contains(y)) << "z=" << z;
  }
}

TEST(SellarProblem, DisciplineValues) {
  const auto p = problems::sellar_problem();
  EXPECT_NEAR(eval(p, 0, Vector{{0.0, 2.6345, 0.0}}, Vector{{5.0690}})[0], 5.92679, 1e-5);
  EXPECT_DOUBLE_EQ(eval(p, 1, Vector{{0.0, 0.0, 0.0}}, Vector{{1.0}})[0], 1.0);
}

TEST(SellarProblem, ObjectiveAtReferenceOptimum) {
  const auto p = problems::sellar_problem();
  const Vector z{{0.0, 2.6345, 0.0}};
  EXPECT_NEAR(p.objective(z, Vector{{5.92679, 5.06900}}), -2.8085, 1e-3);
}

TEST(SellarProblem, SecondDisciplineFailsForNegativeCoupling) {
  const auto p = problems::sellar_problem();
  const auto out = p.disciplines[1].evaluate(Vector{{0.0, 0.0, 0.0}}, Vector{{-0.5}});
  EXPECT_FALSE(out.ok);
  EXPECT_FALSE(out.message.empty());
}

TEST(SellarProblem, BoundsAndWiring) {
  const auto p = problems::sellar_problem();
  EXPECT_EQ(p.z_bounds, Box(Vector{{0.0, -10.0, 0.0}}, Vector{{10.0, 10.0, 10.0}}));
  EXPECT_EQ(p.y_bounds, Box(Vector{{1.0, -5.0}}, Vector{{50.0, 24.0}}));
  EXPECT_EQ(p.disciplines[0].inputs, std::vector<int>{1});
  EXPECT_EQ(p.disciplines[0].outputs, std::vector<int>{0});
  EXPECT_EQ(p.disciplines[1].inputs, std::vector<int>{0});
  EXPECT_EQ(p.disciplines[1].outputs, std::vector<int>{1});
  EXPECT_EQ(p.initial_coupling(), (Vector{{25.5, 9.5}}));
  const Box b0 = p.discipline_input_box(0);
  EXPECT_EQ(b0, Box(Vector{{0.0, -10.0, 0.0, -5.0}}, Vector{{10.0, 10.0, 10.0, 24.0}}));
}

TEST(SellarProblem, FixedPointsSatisfyBothEquations) {
  const auto p = problems::sellar_problem();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto cfg = mda::MdaConfig::reference();
  int checked = 0;
  while (checked < 100) {
    Vector z(3);
    for (int j = 0; j < 3; ++j) z[j] = p.z_bounds.lower[j] + u(rng) * p.z_bounds.width()[j];
    const Vector exact = oracle::sellar_fixed_point(z);
    if (!(exact[0] >= 1.0)) continue;  // keep y1 >= 1 so the square root stays defined
    const auto s = mda::gauss_seidel_solve(p.disciplines, z, p.initial_coupling(), cfg);
    ASSERT_TRUE(s.converged()) << s.message;
    const double r1 = z[0] + z[1] * z[1] + z[2] - 0.2 * s.y[1];
    const double r2 = std::sqrt(s.y[0]) + z[0] + z[1];
    EXPECT_LE(std::abs(r1 - s.y[0]) / std::max(std::abs(s.y[0]), 1e-12), 10.0 * cfg.tolerance);
    EXPECT_LE(std::abs(r2 - s.y[1]) / std::max(std::abs(s.y[1]), 1e-12), 10.0 * cfg.tolerance);
    ++checked;
  }
}

TEST(Problems, DisciplinesArePure) {
  for (const auto& p : {problems::toy_problem(), problems::sellar_problem()}) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
      for (int i = 0; i < p.discipline_count(); ++i) {
        const Box box = p.discipline_input_box(i);
        Matrix x = problems::lhs(box, 1, rng);
        const auto [z, y] = problems::split_input(p, x.row(0).transpose());
        const auto a = p.disciplines[static_cast<std::size_t>(i)].evaluate(z, y);
        const auto b = p.disciplines[static_cast<std::size_t>(i)].evaluate(z, y);
        EXPECT_EQ(a.ok, b.ok);
        EXPECT_EQ(a.y, b.y);
      }
    }
  }
}

TEST(Problems, ValidateRejectsBadWiring) {
  auto p = problems::sellar_problem();
  p.disciplines[1].outputs = {0};  // y1 produced twice, y2 never
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = problems::sellar_problem();
  p.disciplines[0].inputs = {5};
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = problems::sellar_problem();
  p.objective = nullptr;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Box, RejectsDegenerateBounds) {
  EXPECT_THROW(Box(Vector{{0.0, 1.0}}, Vector{{1.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(Box(Vector{{0.0}}, Vector{{1.0, 2.0}}), std::invalid_argument);
}

TEST(SplitInput, SeparatesDesignAndCouplingParts) {
  const auto p = problems::sellar_problem();
  const auto [z, y] = problems::split_input(p, Vector{{1.0, 2.0, 3.0, 4.0}});
  EXPECT_EQ(z, (Vector{{1.0, 2.0, 3.0}}));
  EXPECT_EQ(y, (Vector{{4.0}}));
}

TEST(Lhs, SinglePointInsideBounds) {
  Rng rng(1);
  const Box b(Vector{{-1.0, 2.0}}, Vector{{1.0, 3.0}});
  const Matrix x = problems::lhs(b, 1, rng);
  ASSERT_EQ(x.rows(), 1);
  EXPECT_TRUE(b.contains(x.row(0).transpose()));
}

TEST(Lhs, OnePointPerStratum) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = problems::lhs(Box(Vector{{0.0}}, Vector{{10.0}}), 10, rng);
    std::vector<double> v(x.data(), x.data() + x.size());
    std::sort(v.begin(), v.end());
    for (int k = 0; k < 10; ++k) {
      EXPECT_GE(v[static_cast<std::size_t>(k)], k);
      EXPECT_LT(v[static_cast<std::size_t>(k)], k + 1);
    }
  }
}

TEST(Lhs, StratifiedInEveryDimension) {
  Rng rng(3);
  const auto p = problems::sellar_problem();
  const int n = 37;
  const Matrix x = problems::lhs(p.z_bounds, n, rng);
  for (int j = 0; j < 3; ++j) {
    std::vector<int> count(n, 0);
    for (int i = 0; i < n; ++i) {
      const double u = (x(i, j) - p.z_bounds.lower[j]) / p.z_bounds.width()[j];
      ++count[static_cast<std::size_t>(std::min(n - 1, static_cast<int>(u * n)))];
    }
    EXPECT_TRUE(std::all_of(count.begin(), count.end(), [](int c) { return c == 1; })) << "dimension " << j;
  }
}

TEST(Lhs, StrictlyInsideBounds) {
  Rng rng(4);
  const Box b(Vector{{0.0, -1.0}}, Vector{{1e-3, 1.0}});
  const Matrix x = problems::lhs(b, 500, rng);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_GT(x(i, j), b.lower[j]);
      EXPECT_LT(x(i, j), b.upper[j]);
    }
  }
}

TEST(Lhs, ColumnMeansNearMidpoint) {
  // Stratification pins each column mean to the midpoint up to the jitter:
  // |mean - mid| <= width / (2 sqrt(3 n)) at one standard deviation.
  const auto p = problems::sellar_problem();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Matrix x = problems::lhs(p.z_bounds, 100, rng);
    for (int j = 0; j < 3; ++j) {
      EXPECT_LE(std::abs(x.col(j).mean() - p.z_bounds.midpoint()[j]), 0.15 * p.z_bounds.width()[j]);
    }
  }
}

TEST(Lhs, RejectsEmptyDesign) {
  Rng rng(5);
  EXPECT_THROW(problems::lhs(Box(Vector{{0.0}}, Vector{{1.0}}), 0, rng), std::invalid_argument);
}

TEST(InitialDoe, SellarSizesAndBoxes) {
  const auto p = problems::sellar_problem();
  Rng rng(6);
  const auto doe = problems::initial_doe_training_sets(p, 5, rng);
  ASSERT_EQ(doe.sets.size(), 2u);
  EXPECT_TRUE(doe.warnings.empty());
  for (int i = 0; i < 2; ++i) {
    const auto& s = doe.sets[static_cast<std::size_t>(i)];
    EXPECT_EQ(s.inputs.rows(), 5);
    EXPECT_EQ(s.inputs.cols(), 4);
    EXPECT_EQ(s.targets.rows(), 5);
    EXPECT_EQ(s.targets.cols(), 1);
    const Box box = p.discipline_input_box(i);
    for (Eigen::Index r = 0; r < 5; ++r) {
      for (Eigen::Index c = 0; c < 4; ++c) {
        EXPECT_GT(s.inputs(r, c), box.lower[c]);
        EXPECT_LT(s.inputs(r, c), box.upper[c]);
      }
      const auto [z, y] = problems::split_input(p, s.inputs.row(r).transpose());
      EXPECT_EQ(s.targets(r, 0), p.disciplines[static_cast<std::size_t>(i)].evaluate(z, y).y[0]);
    }
  }
  EXPECT_EQ(p.discipline_input_box(0).lower[3], -5.0);
  EXPECT_EQ(p.discipline_input_box(1).upper[3], 50.0);
}

TEST(InitialDoe, ToyFourPointsPerDiscipline) {
  Rng rng(7);
  const auto doe = problems::initial_doe_training_sets(problems::toy_problem(), 4, rng);
  for (const auto& s : doe.sets) EXPECT_EQ(s.inputs.rows(), 4);
}

TEST(InitialDoe, MinimumSizeStillFits) {
  Rng rng(8);
  const auto doe = problems::initial_doe_training_sets(problems::sellar_problem(), 2, rng);
  for (const auto& s : doe.sets) {
    Rng fit_rng(1);
    EXPECT_NO_THROW((void)gp::fit(s.inputs, s.targets.col(0), {}, fit_rng));
  }
  EXPECT_THROW(problems::initial_doe_training_sets(problems::sellar_problem(), 1, rng), std::invalid_argument);
}

TEST(InitialDoe, FailedPointsAreDroppedWithWarning) {
  auto p = problems::toy_problem();
  // fail on the lower half of the design box
  p.disciplines[0].evaluate = [](const Vector& z, const Vector&) {
    if (z[0] < 0.0) return mda::DisciplineOutput::failure("solver crashed");
    return mda::DisciplineOutput::success(Vector{{z[0]}});
  };
  Rng rng(9);
  const auto doe = problems::initial_doe_training_sets(p, 10, rng);
  EXPECT_EQ(doe.sets[0].inputs.rows(), 5);
  EXPECT_EQ(doe.sets[1].inputs.rows(), 10);
  EXPECT_EQ(doe.warnings.size(), 5u);
  EXPECT_NE(doe.warnings.front().find("solver crashed"), std::string::npos);
}

TEST(InitialDoe, TooFewSurvivorsIsAnError) {
  auto p = problems::toy_problem();
  p.disciplines[1].evaluate = [](const Vector&, const Vector&) { return mda::DisciplineOutput::failure("down"); };
  Rng rng(10);
  EXPECT_THROW(problems::initial_doe_training_sets(p, 4, rng), std::runtime_error);
}
