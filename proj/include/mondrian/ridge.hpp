#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "mondrian/feature_map.hpp"

namespace mondrian {

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exact primal ridge regression on sparse feature rows, maintained through
// the Cholesky factor of A = Phi^T Phi + delta2 * I. Columns are addressed by
// the caller's stable labels (the FeatureIndexer's column ids); the internal
// ordering of the factor is hidden behind that mapping.
//
// Supported updates, each O(C^2): column deletion (permute-to-last followed
// by factor truncation, realized as a rank-1 update of the trailing block),
// column append (one forward substitution), and a rank-1 data update for a
// new row. No update loops over rows other than those of the sparse columns
// it is handed.
class RidgeState {
 public:
  explicit RidgeState(double delta2) : delta2_(delta2) {
    if (!(delta2 > 0.0)) throw std::invalid_argument("RidgeState: delta2 must be > 0");
  }

  // Batch fit from feature rows (labels arbitrary but consistent).
  static RidgeState fit(const std::vector<SparseVec>& rows,
                        const Eigen::Ref<const Eigen::VectorXd>& y, double delta2) {
    if (static_cast<Eigen::Index>(rows.size()) != y.size())
      throw std::invalid_argument("RidgeState::fit: rows/targets length mismatch");
    RidgeState state(delta2);
    std::vector<int> labels;
    for (Eigen::Index n = 0; n < y.size(); ++n) {
      if (!std::isfinite(y[n])) throw std::invalid_argument("RidgeState::fit: non-finite target");
      for (const auto& [label, value] : rows[n]) {
        if (!std::isfinite(value))
          throw std::invalid_argument("RidgeState::fit: non-finite feature");
        labels.push_back(label);
      }
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    for (int label : labels) state.add_label_slot(label);
    state.row_entries_.assign(rows.begin(), rows.end());
    state.y_.assign(y.begin(), y.end());
    state.n_rows_ = static_cast<std::int64_t>(rows.size());
    state.y_sq_ = y.squaredNorm();
    for (Eigen::Index n = 0; n < y.size(); ++n) {
      for (const auto& [label, value] : rows[n]) {
        int p = state.ext2int_.at(label);
        state.col_entries_[p].emplace_back(static_cast<int>(n), value);
        state.pty_[p] += value * y[n];
      }
    }
    state.rebuild_factor();
    return state;
  }

  int n_cols() const { return C_; }
  std::int64_t n_rows() const { return n_rows_; }
  double delta2() const { return delta2_; }
  int rebuild_count() const { return rebuilds_; }
  std::int64_t last_op_rows_touched() const { return last_rows_touched_; }
  const std::vector<int>& labels() const { return int2ext_; }
  bool has_label(int label) const { return ext2int_.find(label) != ext2int_.end(); }

  // Lower-triangular factor (C x C copy, internal column order).
  Eigen::MatrixXd chol_factor() const {
    Eigen::MatrixXd out = L_.topLeftCorner(C_, C_);
    out.triangularView<Eigen::StrictlyUpper>().setZero();
    return out;
  }

  double log_det_a() const {
    double acc = 0.0;
    for (int i = 0; i < C_; ++i) acc += std::log(L_(i, i));
    return 2.0 * acc;
  }

  const Eigen::VectorXd& weights() const {
    refresh_weights();
    return w_;
  }

  double weight_of(int label) const {
    refresh_weights();
    return w_[ext2int_.at(label)];
  }

  Eigen::VectorXd phi_t_y() const { return pty_.head(C_); }

  // Removes the column with the given label; remaining columns keep their
  // relative order, matching a from-scratch factorization of the reduced A.
  void delete_column(int label) {
    auto it = ext2int_.find(label);
    if (it == ext2int_.end()) throw std::out_of_range("delete_column: unknown label");
    int p = it->second;
    last_rows_touched_ = static_cast<std::int64_t>(col_entries_[p].size());
    for (const auto& [row, value] : col_entries_[p]) {
      auto& entries = row_entries_[row];
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].first == label) {
          entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(i));
          break;
        }
      }
    }
    const int tail = C_ - p - 1;
    Eigen::VectorXd spike = L_.col(p).segment(p + 1, tail);
    // splice row/column p out of the factor (ascending copies, safe overlap)
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < tail; ++i) L_(p + i, j) = L_(p + 1 + i, j);
    for (int j = 0; j < tail; ++j)
      L_.col(p + j).segment(p + j, tail - j) = L_.col(p + 1 + j).segment(p + 1 + j, tail - j);
    for (Eigen::Index i = p; i + 1 < C_; ++i) pty_[i] = pty_[i + 1];
    col_entries_.erase(col_entries_.begin() + p);
    int2ext_.erase(int2ext_.begin() + p);
    ext2int_.erase(it);
    for (std::size_t i = static_cast<std::size_t>(p); i < int2ext_.size(); ++i)
      ext2int_[int2ext_[i]] = static_cast<int>(i);
    --C_;
    cholupdate(p, spike);
    weights_dirty_ = true;
  }

  // Appends one column of data under a fresh label. Entries reference
  // existing row indices; a data-empty column contributes only sqrt(delta2)
  // on the factor diagonal.
  void append_column(int label, const SparseVec& entries) {
    if (ext2int_.find(label) != ext2int_.end())
      throw std::invalid_argument("append_column: label already present");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(C_);
    double beta = delta2_;
    std::int64_t touched = 0;
    for (const auto& [row, value] : entries) {
      if (row < 0 || row >= static_cast<int>(row_entries_.size()))
        throw std::invalid_argument("append_column: row index out of range");
      beta += value * value;
      ++touched;
      for (const auto& [other_label, other_value] : row_entries_[row])
        b[ext2int_.at(other_label)] += value * other_value;
    }
    last_rows_touched_ = touched;
    grow_capacity(C_ + 1);
    Eigen::VectorXd l(C_);
    forward_solve(b, l);
    double d2 = beta - l.squaredNorm();
    add_label_slot(label);
    int p = C_ - 1;
    col_entries_[p] = entries;
    for (const auto& [row, value] : entries) {
      row_entries_[row].emplace_back(label, value);
      pty_[p] += value * y_[row];
    }
    if (d2 <= degeneracy_floor()) {
      ++rebuilds_;
      rebuild_factor();
    } else {
      L_.row(p).head(p) = l.transpose();
      L_(p, p) = std::sqrt(d2);
    }
    weights_dirty_ = true;
  }

  void append_empty_column(int label) { append_column(label, {}); }

  // Incorporates one new data row: A += phi phi^T, Phi^T y += y_new * phi.
  // phi must already reference columns of the current feature set.
  void rank1_data_update(const SparseVec& phi, double y_new) {
    if (!std::isfinite(y_new))
      throw std::invalid_argument("rank1_data_update: non-finite target");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(C_);
    for (const auto& [label, value] : phi) {
      auto it = ext2int_.find(label);
      if (it == ext2int_.end())
        throw std::invalid_argument("rank1_data_update: feature dimension mismatch");
      x[it->second] = value;
      pty_[it->second] += value * y_new;
    }
    int row = static_cast<int>(row_entries_.size());
    row_entries_.push_back(phi);
    for (const auto& [label, value] : phi)
      col_entries_[ext2int_.at(label)].emplace_back(row, value);
    y_.push_back(y_new);
    y_sq_ += y_new * y_new;
    ++n_rows_;
    last_rows_touched_ = static_cast<std::int64_t>(phi.size());
    cholupdate(0, x);
    weights_dirty_ = true;
  }

  double predict_one(const SparseVec& phi) const {
    refresh_weights();
    double out = 0.0;
    for (const auto& [label, value] : phi) {
      auto it = ext2int_.find(label);
      if (it == ext2int_.end())
        throw std::invalid_argument("predict: feature dimension mismatch");
      out += value * w_[it->second];
    }
    return out;
  }

  Eigen::VectorXd predict(const std::vector<SparseVec>& rows) const {
    Eigen::VectorXd out(rows.size());
    for (std::size_t n = 0; n < rows.size(); ++n) out[n] = predict_one(rows[n]);
    return out;
  }

  // ||y - Phi w||^2 from maintained scalars (no pass over the data).
  double train_residual_sq() const {
    refresh_weights();
    double value = y_sq_ - w_.dot(pty_.head(C_)) - delta2_ * w_.squaredNorm();
    return std::max(value, 0.0);
  }

  double train_rmse() const {
    if (n_rows_ == 0) return 0.0;
    return std::sqrt(train_residual_sq() / static_cast<double>(n_rows_));
  }

  // Log marginal likelihood of Bayesian linear regression with observation
  // noise delta2 and unit prior weight variance. Normalized as the exact
  // Gaussian evidence N(y; 0, Phi Phi^T + delta2 I), so it matches the
  // dual-form computation exactly; the determinant enters as det(A/delta2),
  // which keeps data-empty columns from shifting the value.
  double log_marginal_likelihood() const {
    refresh_weights();
    double resid = train_residual_sq();
    double norm_log_det = log_det_a() - C_ * std::log(delta2_);
    constexpr double log_two_pi = 1.8378770664093454835607;
    return -resid / (2.0 * delta2_) - 0.5 * w_.squaredNorm() - 0.5 * norm_log_det -
           0.5 * static_cast<double>(n_rows_) * (log_two_pi + std::log(delta2_));
  }

 private:
  void add_label_slot(int label) {
    grow_capacity(C_ + 1);
    ext2int_.emplace(label, C_);
    int2ext_.push_back(label);
    col_entries_.emplace_back();
    pty_[C_] = 0.0;
    ++C_;
  }

  void grow_capacity(int needed) {
    Eigen::Index cap = L_.rows();
    if (cap >= needed) return;
    Eigen::Index next = std::max<Eigen::Index>(needed, std::max<Eigen::Index>(2 * cap, 8));
    Eigen::MatrixXd fresh = Eigen::MatrixXd::Zero(next, next);
    fresh.topLeftCorner(C_, C_) = L_.topLeftCorner(C_, C_);
    L_.swap(fresh);
    Eigen::VectorXd pty = Eigen::VectorXd::Zero(next);
    pty.head(C_) = pty_.head(C_);
    pty_.swap(pty);
  }

  double degeneracy_floor() const {
    double tol = 1e-10 * std::sqrt(delta2_);
    return tol * tol;
  }

  // From-scratch factorization of A materialized from the stored columns.
  void rebuild_factor() {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(C_, C_);
    for (const SparseVec& entries : row_entries_) {
      for (const auto& [li, vi] : entries) {
        int i = ext2int_.at(li);
        for (const auto& [lj, vj] : entries) {
          int j = ext2int_.at(lj);
          if (j <= i) a(i, j) += vi * vj;
        }
      }
    }
    a.diagonal().array() += delta2_;
    Eigen::LLT<Eigen::MatrixXd> llt(a.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success)
      throw numerical_error("RidgeState: Cholesky factorization failed");
    grow_capacity(C_);
    L_.topLeftCorner(C_, C_) = llt.matrixL();
    weights_dirty_ = true;
  }

  // Rank-1 update of the trailing block starting at `from`:
  // L[from:, from:] <- chol(L L^T + x x^T) in place.
  void cholupdate(int from, Eigen::VectorXd& x) {
    for (int k = from; k < C_; ++k) {
      double xk = x[k - from];
      if (xk == 0.0) continue;
      double lkk = L_(k, k);
      double r = std::hypot(lkk, xk);
      double c = r / lkk;
      double s = xk / lkk;
      L_(k, k) = r;
      int tail = C_ - k - 1;
      if (tail > 0) {
        auto lcol = L_.col(k).segment(k + 1, tail);
        auto xtail = x.segment(k - from + 1, tail);
        lcol = (lcol + s * xtail) / c;
        xtail = c * xtail - s * lcol;
      }
    }
  }

  // Solves L l = b for the current C x C factor.
  void forward_solve(const Eigen::VectorXd& b, Eigen::VectorXd& l) const {
    l = b;
    if (C_ > 0)
      L_.topLeftCorner(C_, C_).triangularView<Eigen::Lower>().solveInPlace(l);
  }

  void refresh_weights() const {
    if (!weights_dirty_) return;
    w_ = pty_.head(C_);
    if (C_ > 0) {
      const auto block = L_.topLeftCorner(C_, C_);
      block.triangularView<Eigen::Lower>().solveInPlace(w_);
      block.transpose().triangularView<Eigen::Upper>().solveInPlace(w_);
    }
    weights_dirty_ = false;
  }

  double delta2_;
  int C_ = 0;
  std::int64_t n_rows_ = 0;
  double y_sq_ = 0.0;
  Eigen::MatrixXd L_;
  Eigen::VectorXd pty_;
  std::vector<int> int2ext_;
  std::unordered_map<int, int> ext2int_;
  std::vector<SparseVec> col_entries_;   // per internal column: (row, value)
  std::vector<SparseVec> row_entries_;   // per row: (label, value)
  std::vector<double> y_;
  mutable Eigen::VectorXd w_;
  mutable bool weights_dirty_ = true;
  int rebuilds_ = 0;
  std::int64_t last_rows_touched_ = 0;
};

}  // namespace mondrian
