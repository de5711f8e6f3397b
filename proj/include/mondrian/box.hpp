#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>

namespace mondrian {

// Product of D bounded intervals [lower_d, upper_d]. The linear dimension
// (sum of side lengths) is the total rate of the cut clocks attached to it.
struct AxisAlignedBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  AxisAlignedBox() = default;
  AxisAlignedBox(Eigen::VectorXd lo, Eigen::VectorXd hi)
      : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size())
      throw std::invalid_argument("AxisAlignedBox: lower/upper dimension mismatch");
    for (Eigen::Index d = 0; d < lower.size(); ++d)
      if (!(lower[d] <= upper[d]))
        throw std::invalid_argument("AxisAlignedBox: lower[d] > upper[d]");
  }

  int dim() const { return static_cast<int>(lower.size()); }
  double extent(int d) const { return upper[d] - lower[d]; }
  double linear_dimension() const { return (upper - lower).sum(); }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != lower.size()) return false;
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }

  bool contains(const AxisAlignedBox& inner) const {
    return inner.lower.size() == lower.size() &&
           (inner.lower.array() >= lower.array()).all() &&
           (inner.upper.array() <= upper.array()).all();
  }

  AxisAlignedBox expanded_to(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return {lower.cwiseMin(x), upper.cwiseMax(x)};
  }

  // Smallest box containing all rows of `points`.
  static AxisAlignedBox bounding(const Eigen::Ref<const Eigen::MatrixXd>& points) {
    if (points.rows() == 0)
      throw std::invalid_argument("AxisAlignedBox::bounding: empty point set");
    return {points.colwise().minCoeff().transpose(),
            points.colwise().maxCoeff().transpose()};
  }
};

}  // namespace mondrian
