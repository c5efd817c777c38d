#include <mdots/types.hpp>

#include <stdexcept>

namespace mdots {

Box::Box(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) {
    throw std::invalid_argument("Box: lower and upper bounds differ in dimension");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) {
      throw std::invalid_argument("Box: lower bound must be strictly below upper bound in dimension " +
                                  std::to_string(i));
    }
  }
}

bool Box::contains(const Vector& x) const {
  if (x.size() != dim()) return false;
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Vector Box::clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

Box Box::join(const Box& other) const {
  Vector lo(dim() + other.dim());
  Vector hi(dim() + other.dim());
  lo << lower, other.lower;
  hi << upper, other.upper;
  return Box(std::move(lo), std::move(hi));
}

Box Box::select(const std::vector<int>& dims) const {
  Vector lo(static_cast<Eigen::Index>(dims.size()));
  Vector hi(static_cast<Eigen::Index>(dims.size()));
  for (std::size_t k = 0; k < dims.size(); ++k) {
    lo[static_cast<Eigen::Index>(k)] = lower[dims[k]];
    hi[static_cast<Eigen::Index>(k)] = upper[dims[k]];
  }
  return Box(std::move(lo), std::move(hi));
}

}  // namespace mdots
