#include "bounded_lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace mdots::detail {
namespace {

Vector project(const Vector& x, const Vector& lower, const Vector& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

// Variables sitting on a bound with the gradient pushing outward stay fixed.
Eigen::Array<bool, Eigen::Dynamic, 1> free_mask(const Vector& x, const Vector& g,
                                                const Vector& lower, const Vector& upper) {
  Eigen::Array<bool, Eigen::Dynamic, 1> mask(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool at_lower = x[i] <= lower[i] && g[i] > 0.0;
    const bool at_upper = x[i] >= upper[i] && g[i] < 0.0;
    mask[i] = !(at_lower || at_upper);
  }
  return mask;
}

struct Pair {
  Vector s;
  Vector y;
};

Vector two_loop(const Vector& g, const std::deque<Pair>& history,
                const Eigen::Array<bool, Eigen::Dynamic, 1>& mask) {
  auto restrict = [&](const Vector& v) {
    Vector r = v;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (!mask[i]) r[i] = 0.0;
    }
    return r;
  };

  Vector q = restrict(g);
  std::vector<double> alphas(history.size(), 0.0);
  std::vector<double> rhos(history.size(), 0.0);
  for (std::size_t k = history.size(); k-- > 0;) {
    const Vector s = restrict(history[k].s);
    const Vector y = restrict(history[k].y);
    const double sy = s.dot(y);
    if (sy <= 1e-12) continue;
    rhos[k] = 1.0 / sy;
    alphas[k] = rhos[k] * s.dot(q);
    q -= alphas[k] * y;
  }
  if (!history.empty()) {
    const Vector s = restrict(history.back().s);
    const Vector y = restrict(history.back().y);
    const double yy = y.squaredNorm();
    if (yy > 0.0 && s.dot(y) > 1e-12) q *= s.dot(y) / yy;
  }
  for (std::size_t k = 0; k < history.size(); ++k) {
    if (rhos[k] == 0.0) continue;
    const Vector s = restrict(history[k].s);
    const Vector y = restrict(history[k].y);
    const double beta = rhos[k] * y.dot(q);
    q += (alphas[k] - beta) * s;
  }
  return -q;
}

}  // namespace

BoundedLbfgsResult minimize_bounded(const ValueAndGradient& objective, Vector x0,
                                    const Vector& lower, const Vector& upper,
                                    const BoundedLbfgsOptions& options) {
  BoundedLbfgsResult result;
  Vector x = project(x0, lower, upper);
  Vector g(x.size());
  double f = objective(x, g);
  if (!std::isfinite(f)) {
    result.x = x;
    result.value = std::numeric_limits<double>::infinity();
    return result;
  }

  std::deque<Pair> history;
  Vector g_new(x.size());
  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it + 1;
    const Vector pg = project(x - g, lower, upper) - x;
    if (pg.lpNorm<Eigen::Infinity>() < options.projected_gradient_tolerance) {
      result.converged = true;
      break;
    }

    const auto mask = free_mask(x, g, lower, upper);
    Vector direction = two_loop(g, history, mask);
    bool steepest = history.empty();
    if (direction.dot(g) >= 0.0) {
      direction = -g;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!mask[i]) direction[i] = 0.0;
      }
      steepest = true;
    }

    double step = 1.0;
    if (steepest) {
      const double norm = direction.lpNorm<Eigen::Infinity>();
      if (norm > 1.0) step = 1.0 / norm;
    }

    bool accepted = false;
    Vector x_new;
    double f_new = f;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = project(x + step * direction, lower, upper);
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }

    if (!accepted) {
      if (history.empty()) break;
      history.clear();
      continue;
    }

    const Vector s = x_new - x;
    const Vector y = g_new - g;
    if (s.dot(y) > 1e-12) {
      history.push_back({s, y});
      if (static_cast<int>(history.size()) > options.memory) history.pop_front();
    }

    const double change = std::abs(f - f_new);
    x = x_new;
    g = g_new;
    const double previous = f;
    f = f_new;
    if (change <= options.relative_function_tolerance * std::max(1.0, std::abs(previous))) {
      result.converged = true;
      break;
    }
  }

  result.x = x;
  result.value = f;
  return result;
}

}  // namespace mdots::detail
