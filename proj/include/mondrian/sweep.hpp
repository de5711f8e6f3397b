#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mondrian/feature_map.hpp"
#include "mondrian/kernels.hpp"
#include "mondrian/ridge.hpp"
#include "mondrian/rng.hpp"
#include "mondrian/sgd.hpp"
#include "mondrian/tree.hpp"

namespace mondrian {

enum class SweepMode { exact, sgd };

struct SweepOptions {
  SweepMode mode = SweepMode::exact;
  double delta2 = 1e-4;
  // SGD budget between cut events: epochs spent per decade of lambda.
  double sgd_epochs_per_decade = 1.0;
  int sgd_initial_epochs = 2;
  double sgd_eta0 = 0.1;
  double sgd_t0 = 0.0;  // 0 selects N
  std::uint64_t sgd_seed = 0;
};

struct TraceRow {
  int event_index = 0;
  double lambda = 0.0;
  int feature_count = 0;
  double train_rmse = 0.0;
  double val_rmse = 0.0;
  double log_marginal_likelihood = std::numeric_limits<double>::quiet_NaN();
};

struct SweepTrace {
  std::vector<TraceRow> rows;
  bool empty() const { return rows.empty(); }
};

struct SweepResult {
  SweepTrace trace;
  FeatureIndexer indexer;
  std::optional<RidgeState> ridge;  // exact mode
  std::optional<SgdModel> sgd;     // sgd mode
};

namespace detail {

// Validation rows are not indexed; the sweep tracks the live column of each
// validation point per tree and reroutes only the rows in a split cell.
struct ValidationTracker {
  Eigen::MatrixXi cols;  // n_val x M, current column label or -1
  std::unordered_map<int, std::vector<int>> rows_at;

  ValidationTracker(const FeatureIndexer& indexer, const MondrianForest& forest,
                    const Eigen::Ref<const Eigen::MatrixXd>& Xv) {
    cols.setConstant(Xv.rows(), forest.size(), -1);
    for (Eigen::Index v = 0; v < Xv.rows(); ++v) {
      SparseVec phi = indexer.encode(forest, Xv.row(v).transpose());
      for (const auto& [label, value] : phi) {
        int m = indexer.column_tree(label);
        cols(v, m) = label;
        rows_at[label].push_back(static_cast<int>(v));
      }
    }
  }

  void route(const CutDelta& delta, const MondrianForest& forest,
             const Eigen::Ref<const Eigen::MatrixXd>& Xv, const CutEvent& event) {
    auto it = rows_at.find(delta.removed);
    if (it == rows_at.end()) return;
    std::vector<int> moved = std::move(it->second);
    rows_at.erase(it);
    const TreeNode& node = forest.trees[event.tree_index].nodes[event.parent];
    for (int v : moved) {
      int side = Xv(v, node.cut_dim) <= node.cut_location ? delta.left_col : delta.right_col;
      cols(v, event.tree_index) = side;
      rows_at[side].push_back(v);
    }
  }

  template <typename WeightOf>
  double rmse(const Eigen::Ref<const Eigen::VectorXd>& yv, double normalizer,
              WeightOf&& weight_of) const {
    if (yv.size() == 0) return 0.0;
    double acc = 0.0;
    for (Eigen::Index v = 0; v < yv.size(); ++v) {
      double pred = 0.0;
      for (Eigen::Index m = 0; m < cols.cols(); ++m) {
        int label = cols(v, m);
        if (label >= 0) pred += weight_of(label);
      }
      pred *= normalizer;
      double r = yv[v] - pred;
      acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(yv.size()));
  }
};

}  // namespace detail

// Renames one nonzero of a feature row after a cut retires its column.
inline void replace_label(SparseVec& phi, int from, int to) {
  for (auto& [label, value] : phi) {
    if (label == from) {
      label = to;
      break;
    }
  }
  std::sort(phi.begin(), phi.end());
}

// Replays the forest's cut events from lambda = 0 to lambda_max, maintaining
// the feature map and the linear model incrementally and recording one trace
// row per applied event (plus the lambda = 0 row). Only cuts splitting a cell
// that holds at least one training point change the model; those are the
// events that retire one feature and append two.
inline SweepResult run_sweep(const Eigen::Ref<const Eigen::MatrixXd>& X,
                             const Eigen::Ref<const Eigen::VectorXd>& y,
                             const Eigen::Ref<const Eigen::MatrixXd>& Xv,
                             const Eigen::Ref<const Eigen::VectorXd>& yv,
                             const MondrianForest& forest, double lambda_max,
                             const SweepOptions& options = {}) {
  if (X.rows() != y.size() || Xv.rows() != yv.size())
    throw std::invalid_argument("run_sweep: rows/targets mismatch");
  if (X.rows() == 0) throw std::invalid_argument("run_sweep: empty training set");
  const int n_train = static_cast<int>(X.rows());
  const double normalizer = 1.0 / std::sqrt(static_cast<double>(forest.size()));

  std::vector<CutEvent> events = cut_events(forest, lambda_max);
  auto [indexer, rows] = build_features(forest, 0.0, X);
  detail::ValidationTracker val(indexer, forest, Xv);

  SweepResult result{SweepTrace{}, std::move(indexer), std::nullopt, std::nullopt};
  FeatureIndexer& index = result.indexer;

  const bool exact = options.mode == SweepMode::exact;
  std::optional<RidgeState> solver;
  std::optional<SgdModel> sgd;
  Rng sgd_rng(derive_seed(options.sgd_seed, 0x5347445357454550ULL));
  double t0 = options.sgd_t0 > 0.0 ? options.sgd_t0 : static_cast<double>(n_train);

  auto run_epochs = [&](double epochs) {
    std::int64_t steps = static_cast<std::int64_t>(std::floor(epochs * n_train));
    for (std::int64_t s = 0; s < steps; ++s) {
      int n = static_cast<int>(sgd_rng.uniform01() * n_train);
      if (n >= n_train) n = n_train - 1;
      sgd->sgd_step(rows[n], y[n]);
    }
  };

  if (exact) {
    solver.emplace(RidgeState::fit(rows, y, options.delta2));
  } else {
    sgd.emplace(index.total_columns(),
                SgdModel::Options{options.sgd_eta0, t0, options.delta2 / n_train});
    run_epochs(options.sgd_initial_epochs);
  }

  auto train_rmse = [&]() {
    if (exact) return solver->train_rmse();
    double acc = 0.0;
    for (int n = 0; n < n_train; ++n) {
      double r = y[n] - sgd->predict(rows[n]);
      acc += r * r;
    }
    return std::sqrt(acc / n_train);
  };
  auto val_rmse = [&]() {
    if (exact)
      return val.rmse(yv, normalizer, [&](int label) { return solver->weight_of(label); });
    return val.rmse(yv, normalizer, [&](int label) { return sgd->value_of(label); });
  };
  auto record = [&](int event_index, double lambda) {
    TraceRow row;
    row.event_index = event_index;
    row.lambda = lambda;
    row.feature_count = index.live_columns();
    row.train_rmse = train_rmse();
    row.val_rmse = val_rmse();
    if (exact) row.log_marginal_likelihood = solver->log_marginal_likelihood();
    result.trace.rows.push_back(row);
  };

  record(0, 0.0);

  double prev_time = 0.0;
  double owed_epochs = 0.0;
  int applied = 0;
  for (const CutEvent& event : events) {
    if (!index.occupied(event.tree_index, event.parent)) continue;
    CutDelta delta = index.apply_cut(event, forest, X);
    for (int r : delta.left_rows) replace_label(rows[r], delta.removed, delta.left_col);
    for (int r : delta.right_rows) replace_label(rows[r], delta.removed, delta.right_col);
    val.route(delta, forest, Xv, event);
    if (exact) {
      solver->delete_column(delta.removed);
      SparseVec left, right;
      left.reserve(delta.left_rows.size());
      right.reserve(delta.right_rows.size());
      for (int r : delta.left_rows) left.emplace_back(r, normalizer);
      for (int r : delta.right_rows) right.emplace_back(r, normalizer);
      solver->append_column(delta.left_col, left);
      solver->append_column(delta.right_col, right);
    } else {
      sgd->reinit_on_cut(delta);
      if (prev_time > 0.0)
        owed_epochs += options.sgd_epochs_per_decade * std::log10(event.time / prev_time);
      double whole = std::floor(owed_epochs * n_train) / n_train;
      if (whole > 0.0) {
        run_epochs(whole);
        owed_epochs -= whole;
      }
    }
    prev_time = event.time;
    ++applied;
    record(applied, event.time);
  }
  if (exact)
    result.ridge = std::move(solver);
  else
    result.sgd = std::move(sgd);
  return result;
}

enum class SelectionCriterion { validation_error, marginal_likelihood };

// Lifetime minimizing validation error (or maximizing the marginal
// likelihood) over the event grid; ties break toward smaller lambda.
inline std::pair<double, double> select_lifetime(
    const SweepTrace& trace, SelectionCriterion criterion = SelectionCriterion::validation_error) {
  if (trace.empty()) throw std::invalid_argument("select_lifetime: empty trace");
  const TraceRow* best = &trace.rows.front();
  for (const TraceRow& row : trace.rows) {
    double value = criterion == SelectionCriterion::validation_error
                       ? row.val_rmse
                       : -row.log_marginal_likelihood;
    double incumbent = criterion == SelectionCriterion::validation_error
                           ? best->val_rmse
                           : -best->log_marginal_likelihood;
    if (value < incumbent) best = &row;
  }
  double value = criterion == SelectionCriterion::validation_error
                     ? best->val_rmse
                     : best->log_marginal_likelihood;
  return {best->lambda, value};
}

// Prior over lambda given through its CDF; support must lie inside
// [0, lambda_max] of the sweep it is combined with.
struct LambdaPrior {
  std::function<double(double)> cdf;
};

inline LambdaPrior uniform_prior(double lambda_max) {
  return {[lambda_max](double t) { return std::clamp(t / lambda_max, 0.0, 1.0); }};
}

inline LambdaPrior truncated_exponential_prior(double rate, double lambda_max) {
  double z = -std::expm1(-rate * lambda_max);
  return {[rate, z](double t) { return -std::expm1(-rate * t) / z; }};
}

// Posterior over lambda: the likelihood is piecewise constant between cut
// times, so the posterior is a mixture over intervals [tau_c, tau_{c+1})
// with weights k_c proportional to exp(L(tau_c)) times the prior mass.
struct LambdaPosterior {
  std::vector<double> boundaries;  // tau_0 = 0 < ... < tau_E, then lambda_max
  std::vector<double> log_marginal;
  std::vector<double> mixing;      // k_c, sums to 1
  int intervals() const { return static_cast<int>(mixing.size()); }
};

inline LambdaPosterior posterior_over_lambda(const SweepTrace& trace, const LambdaPrior& prior,
                                             double lambda_max) {
  if (trace.empty()) throw std::invalid_argument("posterior_over_lambda: empty trace");
  if (std::abs(prior.cdf(lambda_max) - 1.0) > 1e-9 || prior.cdf(0.0) > 1e-12 ||
      prior.cdf(0.0) < -1e-12)
    throw std::invalid_argument("posterior_over_lambda: prior mass outside [0, lambda_max]");
  LambdaPosterior post;
  const std::size_t n = trace.rows.size();
  post.boundaries.reserve(n + 1);
  post.log_marginal.reserve(n);
  for (const TraceRow& row : trace.rows) {
    if (!std::isfinite(row.log_marginal_likelihood))
      throw std::invalid_argument("posterior_over_lambda: trace lacks marginal likelihoods");
    post.boundaries.push_back(row.lambda);
    post.log_marginal.push_back(row.log_marginal_likelihood);
  }
  post.boundaries.push_back(lambda_max);
  std::vector<double> log_terms(n);
  double max_term = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) {
    double mass = prior.cdf(post.boundaries[c + 1]) - prior.cdf(post.boundaries[c]);
    log_terms[c] = mass > 0.0 ? post.log_marginal[c] + std::log(mass)
                              : -std::numeric_limits<double>::infinity();
    max_term = std::max(max_term, log_terms[c]);
  }
  if (!std::isfinite(max_term))
    throw std::invalid_argument("posterior_over_lambda: prior assigns no mass to any interval");
  double z = 0.0;
  for (double t : log_terms) z += std::exp(t - max_term);
  post.mixing.resize(n);
  for (std::size_t c = 0; c < n; ++c) post.mixing[c] = std::exp(log_terms[c] - max_term) / z;
  return post;
}

// Interval-representative model: ridge weights and the feature map frozen at
// the interval's left endpoint tau_c.
struct IntervalState {
  int event_index = 0;
  double tau = 0.0;
  FeatureIndexer indexer;
  std::vector<double> weights_by_label;
};

// Predictive mixture over lambda intervals. States for the top-K posterior
// mass intervals are cached up front; any other interval is materialized by
// replaying the sweep on demand and memoized.
class BayesianSweep {
 public:
  BayesianSweep(const Eigen::Ref<const Eigen::MatrixXd>& X,
                const Eigen::Ref<const Eigen::VectorXd>& y, const MondrianForest& forest,
                double lambda_max, double delta2, LambdaPrior prior, int cache_size = 50)
      : X_(X), y_(y), forest_(&forest), lambda_max_(lambda_max), delta2_(delta2) {
    Eigen::MatrixXd no_val(0, X.cols());
    Eigen::VectorXd no_val_y(0);
    SweepOptions options;
    options.mode = SweepMode::exact;
    options.delta2 = delta2;
    SweepResult sweep = run_sweep(X_, y_, no_val, no_val_y, forest, lambda_max, options);
    trace_ = std::move(sweep.trace);
    posterior_ = posterior_over_lambda(trace_, prior, lambda_max);
    std::vector<int> order(posterior_.intervals());
    for (int c = 0; c < posterior_.intervals(); ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (posterior_.mixing[a] != posterior_.mixing[b])
        return posterior_.mixing[a] > posterior_.mixing[b];
      return a < b;
    });
    std::vector<int> wanted(order.begin(),
                            order.begin() + std::min<std::size_t>(cache_size, order.size()));
    std::sort(wanted.begin(), wanted.end());
    replay_collecting(wanted, /*keep_solver=*/false);
  }

  const LambdaPosterior& posterior() const { return posterior_; }
  const SweepTrace& trace() const { return trace_; }

  double interval_mean(int c, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const IntervalState& state = state_for(c);
    double pred = 0.0;
    for (const auto& [label, value] : state.indexer.encode(*forest_, x))
      pred += state.weights_by_label[label] * value;
    return pred;
  }

  // Posterior-predictive mean; with variance, the spread combines each
  // interval's Gaussian predictive with the mixture spread of the means.
  double predictive_mean(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double acc = 0.0;
    for (int c = 0; c < posterior_.intervals(); ++c) {
      if (posterior_.mixing[c] == 0.0) continue;
      acc += posterior_.mixing[c] * interval_mean(c, x);
    }
    return acc;
  }

  std::pair<double, double> predictive_mean_and_variance(
      const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double mean = 0.0, second = 0.0;
    for (int c = 0; c < posterior_.intervals(); ++c) {
      double k = posterior_.mixing[c];
      if (k == 0.0) continue;
      double m = interval_mean(c, x);
      double v = interval_variance(c, x);
      mean += k * m;
      second += k * (v + m * m);
    }
    return {mean, second - mean * mean};
  }

 private:
  const IntervalState& state_for(int c) const {
    auto it = cache_.find(c);
    if (it == cache_.end()) {
      replay_collecting({c}, /*keep_solver=*/false);
      it = cache_.find(c);
    }
    return it->second;
  }

  // Predictive variance of interval c's Bayesian linear model at x, obtained
  // by replaying to a full solver state.
  double interval_variance(int c, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const RidgeState& solver = solver_for(c);
    const IntervalState& state = state_for(c);
    SparseVec phi = state.indexer.encode(*forest_, x);
    Eigen::MatrixXd l = solver.chol_factor();
    Eigen::VectorXd dense = Eigen::VectorXd::Zero(solver.n_cols());
    const auto& labels = solver.labels();
    std::unordered_map<int, int> pos;
    for (std::size_t i = 0; i < labels.size(); ++i) pos[labels[i]] = static_cast<int>(i);
    for (const auto& [label, value] : phi) dense[pos.at(label)] = value;
    l.triangularView<Eigen::Lower>().solveInPlace(dense);
    return delta2_ * (1.0 + dense.squaredNorm());
  }

  const RidgeState& solver_for(int c) const {
    auto it = solver_cache_.find(c);
    if (it == solver_cache_.end()) {
      replay_collecting({c}, /*keep_solver=*/true);
      it = solver_cache_.find(c);
    }
    return it->second;
  }

  // One replay pass that snapshots every requested interval index. Full
  // solver states (needed for predictive variances) are only kept on request.
  void replay_collecting(const std::vector<int>& wanted, bool keep_solver) const {
    if (wanted.empty()) return;
    std::vector<CutEvent> events = cut_events(*forest_, lambda_max_);
    auto [indexer, rows] = build_features(*forest_, 0.0, X_);
    RidgeState solver = RidgeState::fit(rows, y_, delta2_);
    const double normalizer = indexer.normalizer();
    std::size_t cursor = 0;
    int applied = 0;
    auto snapshot = [&](double tau) {
      while (cursor < wanted.size() && wanted[cursor] == applied) {
        int c = wanted[cursor];
        std::vector<double> w(indexer.total_columns(), 0.0);
        for (int label : solver.labels()) w[label] = solver.weight_of(label);
        cache_.emplace(c, IntervalState{applied, tau, indexer, std::move(w)});
        if (keep_solver) solver_cache_.emplace(c, solver);
        ++cursor;
      }
    };
    snapshot(0.0);
    for (const CutEvent& event : events) {
      if (cursor >= wanted.size()) break;
      if (!indexer.occupied(event.tree_index, event.parent)) continue;
      CutDelta delta = indexer.apply_cut(event, *forest_, X_);
      solver.delete_column(delta.removed);
      SparseVec left, right;
      for (int r : delta.left_rows) left.emplace_back(r, normalizer);
      for (int r : delta.right_rows) right.emplace_back(r, normalizer);
      solver.append_column(delta.left_col, left);
      solver.append_column(delta.right_col, right);
      ++applied;
      snapshot(event.time);
    }
  }

  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  const MondrianForest* forest_;
  double lambda_max_;
  double delta2_;
  SweepTrace trace_;
  LambdaPosterior posterior_;
  mutable std::map<int, IntervalState> cache_;
  mutable std::map<int, RidgeState> solver_cache_;
};

}  // namespace mondrian
