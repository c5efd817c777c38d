#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace mdots {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Random stream shared by every stochastic operation in the library.
using Rng = std::mt19937_64;

/// Axis-aligned box [lower, upper] with lower < upper component-wise.
struct Box {
  Vector lower;
  Vector upper;

  Box() = default;
  Box(Vector lo, Vector hi);

  [[nodiscard]] Eigen::Index dim() const { return lower.size(); }
  [[nodiscard]] Vector midpoint() const { return 0.5 * (lower + upper); }
  [[nodiscard]] Vector width() const { return upper - lower; }
  [[nodiscard]] bool contains(const Vector& x) const;
  [[nodiscard]] Vector clamp(const Vector& x) const;

  /// Cartesian product: this box followed by `other`.
  [[nodiscard]] Box join(const Box& other) const;
  /// Sub-box made of the listed dimensions.
  [[nodiscard]] Box select(const std::vector<int>& dims) const;

  bool operator==(const Box&) const = default;
};

}  // namespace mdots
