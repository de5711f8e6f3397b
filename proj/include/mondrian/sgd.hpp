#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mondrian/feature_map.hpp"

namespace mondrian {

// Linear model over the sparse features trained by stochastic gradient
// descent on the squared loss. Weights are addressed by column label;
// l2 regularization is applied through lazy scaling, so one step touches
// only the M nonzero coordinates.
class SgdModel {
 public:
  struct Options {
    double eta0 = 0.1;       // step size eta_t = eta0 / (1 + t / t0)
    double t0 = 1.0;
    double l2_per_step = 0.0;  // per-step ridge pressure, typically delta2 / N
  };

  SgdModel(int n_labels, Options options) : opts_(options), w_(n_labels, 0.0) {
    if (!(opts_.eta0 > 0.0) || !(opts_.t0 > 0.0))
      throw std::invalid_argument("SgdModel: step-size parameters must be positive");
  }

  int n_labels() const { return static_cast<int>(w_.size()); }
  std::int64_t iterations() const { return t_; }
  std::int64_t coordinate_touches() const { return touches_; }

  // Appends k zero weights (new feature columns from an online point);
  // predictions on previously seen points are unchanged.
  void pad_for_new_point(int k) {
    if (k < 0) throw std::invalid_argument("pad_for_new_point: k must be >= 0");
    w_.insert(w_.end(), k, 0.0);
  }

  void ensure_labels(int count) {
    if (count > static_cast<int>(w_.size())) w_.resize(count, 0.0);
  }

  double value_of(int label) const { return scale_ * w_[label]; }

  double predict(const SparseVec& phi) const {
    double acc = 0.0;
    for (const auto& [label, value] : phi) acc += w_[label] * value;
    return scale_ * acc;
  }

  // One stochastic step on example (phi, y): squared loss plus lazy l2.
  void sgd_step(const SparseVec& phi, double y) {
    for (const auto& [label, value] : phi)
      if (label < 0 || label >= n_labels())
        throw std::invalid_argument("sgd_step: feature dimension mismatch");
    double eta = opts_.eta0 / (1.0 + static_cast<double>(t_) / opts_.t0);
    double grad = 2.0 * (predict(phi) - y);
    if (opts_.l2_per_step > 0.0) {
      scale_ *= 1.0 - 2.0 * eta * opts_.l2_per_step;
      if (std::abs(scale_) < 1e-100) flush_scale();
    }
    for (const auto& [label, value] : phi) {
      w_[label] -= eta * grad * value / scale_;
      ++touches_;
    }
    ++t_;
  }

  // Weight-splitting reinitialization at a cut: both children inherit the
  // retired column's value, which preserves every existing prediction since
  // each affected point keeps exactly one copy of the old summand.
  void reinit_on_cut(const CutDelta& delta) {
    ensure_labels(std::max(delta.left_col, delta.right_col) + 1);
    if (delta.removed < 0 || delta.removed >= n_labels())
      throw std::invalid_argument("reinit_on_cut: stale event");
    double inherited = w_[delta.removed];
    w_[delta.left_col] = inherited;
    w_[delta.right_col] = inherited;
    w_[delta.removed] = 0.0;
  }

  // Folds the lazy scale into the stored weights.
  void flush_scale() {
    if (scale_ == 1.0) return;
    for (double& w : w_) w *= scale_;
    scale_ = 1.0;
  }

  std::vector<double> dense_weights() const {
    std::vector<double> out(w_);
    for (double& w : out) w *= scale_;
    return out;
  }

 private:
  Options opts_;
  std::vector<double> w_;
  double scale_ = 1.0;
  std::int64_t t_ = 0;
  std::int64_t touches_ = 0;
};

// Ridge objective sum_n (y_n - w.phi_n)^2 + l2 * ||w||^2 for a labelled
// weight vector; used to compare SGD against the exact solver.
inline double ridge_objective(const std::vector<SparseVec>& rows,
                              const Eigen::Ref<const Eigen::VectorXd>& y,
                              const std::vector<double>& w_by_label, double l2) {
  double acc = 0.0;
  for (std::size_t n = 0; n < rows.size(); ++n) {
    double pred = 0.0;
    for (const auto& [label, value] : rows[n]) pred += w_by_label[label] * value;
    double r = y[static_cast<Eigen::Index>(n)] - pred;
    acc += r * r;
  }
  double norm = 0.0;
  for (double w : w_by_label) norm += w * w;
  return acc + l2 * norm;
}

}  // namespace mondrian
