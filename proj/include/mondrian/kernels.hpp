#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mondrian/feature_map.hpp"
#include "mondrian/tree.hpp"

namespace mondrian {

// Isotropic Laplace kernel exp(-lambda * ||x - x'||_1). lambda is the inverse
// kernel width; it matches the lifetime of the Mondrian process approximating
// this kernel.
inline double laplace_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& y, double lambda) {
  if (x.size() != y.size())
    throw std::invalid_argument("laplace_kernel: dimension mismatch");
  if (!(lambda >= 0.0)) throw std::invalid_argument("laplace_kernel: lambda must be >= 0");
  return std::exp(-lambda * (x - y).cwiseAbs().sum());
}

// Mondrian kernel of order M between two feature rows sharing one indexer:
// the fraction of trees in which the points share a cell. Values lie on the
// grid {0, 1/M, ..., 1}.
inline double mondrian_kernel(const SparseVec& phi_x, const SparseVec& phi_y) {
  return sparse_dot(phi_x, phi_y);
}

// Leaf ids of every row in every tree at the given lifetime (N x M).
inline std::vector<std::vector<int>> cell_table(const MondrianForest& forest,
                                                const Eigen::Ref<const Eigen::MatrixXd>& X,
                                                double lambda) {
  std::vector<std::vector<int>> cells(X.rows(), std::vector<int>(forest.size()));
  for (Eigen::Index n = 0; n < X.rows(); ++n)
    for (int m = 0; m < forest.size(); ++m)
      cells[n][m] = cell_lookup(forest.trees[m], X.row(n).transpose(), lambda);
  return cells;
}

// Exact Mondrian kernel Gram matrix on the rows of X (same-cell frequencies).
inline Eigen::MatrixXd mondrian_gram(const MondrianForest& forest,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X, double lambda) {
  auto cells = cell_table(forest, X, lambda);
  const int n = static_cast<int>(X.rows());
  const int m_count = forest.size();
  Eigen::MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i) {
    gram(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      int matches = 0;
      for (int m = 0; m < m_count; ++m)
        if (cells[i][m] == cells[j][m]) ++matches;
      gram(i, j) = gram(j, i) = static_cast<double>(matches) / m_count;
    }
  }
  return gram;
}

// Maximum absolute deviation between the order-M Mondrian kernel and the
// exact Laplace kernel over all pairs of rows of X.
inline double max_abs_error(const Eigen::Ref<const Eigen::MatrixXd>& X,
                            const MondrianForest& forest, double lambda) {
  auto cells = cell_table(forest, X, lambda);
  const int n = static_cast<int>(X.rows());
  const int m_count = forest.size();
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      int matches = 0;
      for (int m = 0; m < m_count; ++m)
        if (cells[i][m] == cells[j][m]) ++matches;
      double approx = static_cast<double>(matches) / m_count;
      double exact = laplace_kernel(X.row(i).transpose(), X.row(j).transpose(), lambda);
      worst = std::max(worst, std::abs(approx - exact));
    }
  }
  return worst;
}

}  // namespace mondrian
