#pragma once

// Shared test utilities: independent oracles and statistical test machinery.
// Everything here stays out of the library so oracle paths cannot leak into
// the implementation they check.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mondrian/feature_map.hpp"
#include "mondrian/rng.hpp"

namespace test_support {

// One-sample Kolmogorov-Smirnov statistic against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double f = cdf(samples[i]);
    worst = std::max(worst, std::abs(f - static_cast<double>(i) / n));
    worst = std::max(worst, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return worst;
}

// Two-sample Kolmogorov-Smirnov statistic; tied values (discrete data) are
// consumed on both sides before the gap is evaluated.
inline double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double worst = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    worst = std::max(worst, std::abs(fa - fb));
  }
  return worst;
}

// Critical values at level 0.01: c(0.01) = 1.628 (asymptotic K-S quantile).
inline double ks_critical_one_sample(std::size_t n, double c = 1.628) {
  return c / std::sqrt(static_cast<double>(n));
}

inline double ks_critical_two_sample(std::size_t n, std::size_t m, double c = 1.628) {
  return c * std::sqrt((static_cast<double>(n) + m) / (static_cast<double>(n) * m));
}

// Dense feature matrix materialized from sparse rows, with columns in label
// order restricted to the labels that appear; returns (matrix, labels).
inline std::pair<Eigen::MatrixXd, std::vector<int>> densify(
    const std::vector<mondrian::SparseVec>& rows) {
  std::vector<int> labels;
  for (const auto& row : rows)
    for (const auto& [label, value] : row) labels.push_back(label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(rows.size(), labels.size());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (const auto& [label, value] : rows[n]) {
      auto it = std::lower_bound(labels.begin(), labels.end(), label);
      dense(n, it - labels.begin()) = value;
    }
  }
  return {std::move(dense), std::move(labels)};
}

// Dense ridge oracle: solves (Phi^T Phi + delta2 I) w = Phi^T y directly.
inline Eigen::VectorXd dense_ridge(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                                   double delta2) {
  Eigen::MatrixXd a = phi.transpose() * phi;
  a.diagonal().array() += delta2;
  return a.ldlt().solve(phi.transpose() * y);
}

// Dual-form Gaussian evidence log N(y; 0, Phi Phi^T + delta2 I).
inline double dual_evidence(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, double delta2) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd cov = phi * phi.transpose();
  cov.diagonal().array() += delta2;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  Eigen::VectorXd alpha = llt.solve(y);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
  constexpr double log_two_pi = 1.8378770664093454835607;
  return -0.5 * y.dot(alpha) - log_det - 0.5 * n * log_two_pi;
}

// Uniform points in [0,1]^dim.
inline Eigen::MatrixXd uniform_points(int n, int dim, std::uint64_t seed) {
  mondrian::Rng rng(seed);
  Eigen::MatrixXd x(n, dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) x(i, d) = rng.uniform01();
  return x;
}

inline mondrian::AxisAlignedBox unit_box(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

}  // namespace test_support
