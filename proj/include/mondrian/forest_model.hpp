#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mondrian/feature_map.hpp"
#include "mondrian/tree.hpp"

namespace mondrian {

// Mondrian forest regression without hierarchical smoothing: each tree's leaf
// parameters are ridge-fitted independently on that tree's indicator features
// and predictions are averaged across trees. Weights are stored per column
// label of the shared feature indexer, in the unnormalized per-tree
// parametrization (leaf indicators, not the M^(-1/2)-scaled features).
struct ForestModel {
  int tree_count = 0;
  double gamma2 = 0.0;
  std::vector<double> weights_by_label;
};

// Within one tree the indicator columns are mutually orthogonal, so the
// per-tree ridge solution is the shrunken per-leaf mean
// w_c = sum_{n in cell} y_n / (count_c + gamma2).
inline ForestModel fit_forest(const FeatureIndexer& indexer,
                              const Eigen::Ref<const Eigen::VectorXd>& y, double gamma2) {
  if (!(gamma2 > 0.0)) throw std::invalid_argument("fit_forest: gamma2 must be > 0");
  ForestModel model;
  model.tree_count = indexer.tree_count();
  model.gamma2 = gamma2;
  model.weights_by_label.assign(indexer.total_columns(), 0.0);
  for (int col = 0; col < indexer.total_columns(); ++col) {
    if (!indexer.column_active(col)) continue;
    const std::vector<int>& rows = indexer.rows_of_column(col);
    if (rows.empty()) continue;
    double sum = 0.0;
    for (int r : rows) sum += y[r];
    model.weights_by_label[col] = sum / (static_cast<double>(rows.size()) + gamma2);
  }
  return model;
}

// Average of the per-tree predictions at x.
inline double predict_forest(const ForestModel& model, const FeatureIndexer& indexer,
                             const MondrianForest& forest,
                             const Eigen::Ref<const Eigen::VectorXd>& x) {
  double acc = 0.0;
  for (const auto& [label, value] : indexer.encode(forest, x))
    acc += model.weights_by_label[label];
  return acc / model.tree_count;
}

// Same average for an indexed training row (its feature row is at hand).
inline double predict_forest_row(const ForestModel& model, const SparseVec& phi) {
  double acc = 0.0;
  for (const auto& [label, value] : phi) acc += model.weights_by_label[label];
  return acc / model.tree_count;
}

// Both training objectives (joint kernel fit vs per-tree forest fit)
// evaluated at both weight vectors, plus per-point convexity facts. Weights
// enter in the unnormalized per-tree parametrization; the concatenated
// vector used inside the objectives is the M^(-1/2)-scaled one.
struct ObjectiveReport {
  double kernel_objective_at_kernel = 0.0;
  double kernel_objective_at_forest = 0.0;
  double forest_objective_at_kernel = 0.0;
  double forest_objective_at_forest = 0.0;
  double min_jensen_gap = 0.0;  // min over points of (mean loss - loss of mean)
  bool jensen_ordering_holds = true;
};

inline ObjectiveReport compare_objectives(const std::vector<double>& kernel_weights_by_label,
                                          const std::vector<double>& forest_weights_by_label,
                                          const std::vector<SparseVec>& rows,
                                          const Eigen::Ref<const Eigen::VectorXd>& y,
                                          int tree_count, double delta2, double gamma2) {
  ObjectiveReport report;
  const double m = static_cast<double>(tree_count);
  auto norm_sq = [&](const std::vector<double>& w) {
    double acc = 0.0;
    for (double v : w) acc += v * v;
    return acc / m;  // ||M^(-1/2) concat(w)||^2
  };
  double kernel_norm = norm_sq(kernel_weights_by_label);
  double forest_norm = norm_sq(forest_weights_by_label);
  double kernel_loss_joint = 0.0, forest_loss_joint = 0.0;
  double kernel_loss_avg = 0.0, forest_loss_avg = 0.0;
  report.min_jensen_gap = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < rows.size(); ++n) {
    double target = y[static_cast<Eigen::Index>(n)];
    double kernel_mean = 0.0, forest_mean = 0.0;
    double kernel_avg = 0.0, forest_avg = 0.0;
    for (const auto& [label, value] : rows[n]) {
      double yk = kernel_weights_by_label[label];
      double yf = forest_weights_by_label[label];
      kernel_mean += yk;
      forest_mean += yf;
      double rk = target - yk;
      double rf = target - yf;
      kernel_avg += rk * rk;
      forest_avg += rf * rf;
    }
    kernel_mean /= m;
    forest_mean /= m;
    kernel_avg /= m;
    forest_avg /= m;
    double rk = target - kernel_mean;
    double rf = target - forest_mean;
    kernel_loss_joint += rk * rk;
    forest_loss_joint += rf * rf;
    kernel_loss_avg += kernel_avg;
    forest_loss_avg += forest_avg;
    double gap = std::min(kernel_avg - rk * rk, forest_avg - rf * rf);
    report.min_jensen_gap = std::min(report.min_jensen_gap, gap);
    double slack = 1e-12 * (1.0 + std::abs(target));
    if (rk * rk > kernel_avg + slack || rf * rf > forest_avg + slack)
      report.jensen_ordering_holds = false;
  }
  report.kernel_objective_at_kernel = kernel_loss_joint + delta2 * kernel_norm;
  report.kernel_objective_at_forest = forest_loss_joint + delta2 * forest_norm;
  report.forest_objective_at_kernel = kernel_loss_avg + gamma2 * kernel_norm;
  report.forest_objective_at_forest = forest_loss_avg + gamma2 * forest_norm;
  return report;
}

// 101-bin histogram over per-coordinate weights on a symmetric range; used
// for the weight-distribution comparison between kernel and forest fits.
struct WeightHistogram {
  double lo = 0.0, hi = 0.0;
  std::vector<int> counts = std::vector<int>(101, 0);
};

inline WeightHistogram weight_histogram(const std::vector<double>& values, double symmetric_max) {
  WeightHistogram hist;
  hist.lo = -symmetric_max;
  hist.hi = symmetric_max;
  if (!(symmetric_max > 0.0)) return hist;
  for (double v : values) {
    double t = (v - hist.lo) / (hist.hi - hist.lo);
    int bin = static_cast<int>(std::floor(t * 101.0));
    bin = std::clamp(bin, 0, 100);
    ++hist.counts[bin];
  }
  return hist;
}

}  // namespace mondrian
