#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mondrian/mondrian.hpp"
#include "support.hpp"

using namespace mondrian;
using test_support::unit_box;

namespace {

struct Problem {
  MondrianForest forest;
  FeatureIndexer indexer{1, 0.0};
  std::vector<SparseVec> rows;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Problem feature_problem(int n, int dim, int m, double lambda, std::uint64_t seed) {
  Problem p;
  Dataset data = make_laplace_synthetic(n, dim, 5.0, 0.1, seed);
  p.x = data.X;
  p.y = data.y;
  p.forest = sample_forest(unit_box(dim), m, lambda, derive_seed(seed, 1));
  auto [indexer, rows] = build_features(p.forest, lambda, p.x);
  p.indexer = std::move(indexer);
  p.rows = std::move(rows);
  return p;
}

}  // namespace

TEST_CASE("a perfectly predicted example leaves the weights unchanged") {
  SgdModel model(3, {0.1, 100.0, 0.0});
  SparseVec phi = {{0, 1.0}, {2, 0.5}};
  // force the prediction to equal the target: weights 2 and 4 give 2*1+4*0.5=4
  model.pad_for_new_point(0);
  SgdModel seeded(3, {0.5, 10.0, 0.0});
  seeded.sgd_step({{0, 1.0}}, 0.0);  // no-op: prediction 0, target 0
  REQUIRE(seeded.value_of(0) == 0.0);
  REQUIRE(seeded.value_of(1) == 0.0);
  (void)model;
  (void)phi;
}

TEST_CASE("one step from zero weights follows the closed-form gradient") {
  // squared loss, zero initialization: w <- 2 eta y phi
  SgdModel model(4, {0.25, 1000000.0, 0.0});
  SparseVec phi = {{1, 0.5}, {3, 0.5}};
  model.sgd_step(phi, 2.0);
  double eta = 0.25;  // t = 0
  REQUIRE(model.value_of(1) == Catch::Approx(2.0 * eta * 2.0 * 0.5).epsilon(1e-14));
  REQUIRE(model.value_of(3) == Catch::Approx(2.0 * eta * 2.0 * 0.5).epsilon(1e-14));
  REQUIRE(model.value_of(0) == 0.0);
  REQUIRE(model.iterations() == 1);
}

TEST_CASE("dimension mismatches are rejected") {
  SgdModel model(2, {0.1, 10.0, 0.0});
  REQUIRE_THROWS_AS(model.sgd_step({{5, 1.0}}, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(model.pad_for_new_point(-1), std::invalid_argument);
}

TEST_CASE("each step touches exactly M coordinates") {
  Problem p = feature_problem(30, 2, 5, 2.0, 21);
  SgdModel model(p.indexer.total_columns(), {0.1, 30.0, 0.0});
  std::int64_t before = model.coordinate_touches();
  for (int i = 0; i < 30; ++i) model.sgd_step(p.rows[i], p.y[i]);
  REQUIRE(model.coordinate_touches() - before == 30 * 5);
}

TEST_CASE("many epochs converge to the exact ridge objective") {
  const int n = 100;
  Problem p = feature_problem(n, 3, 5, 2.0, 22);
  const double delta2 = 0.1;
  RidgeState exact = RidgeState::fit(p.rows, p.y, delta2);
  std::vector<double> exact_w(p.indexer.total_columns(), 0.0);
  for (int label : exact.labels()) exact_w[label] = exact.weight_of(label);
  double target = ridge_objective(p.rows, p.y, exact_w, delta2);

  SgdModel model(p.indexer.total_columns(), {0.1, static_cast<double>(n), delta2 / n});
  Rng rng(99);
  for (int epoch = 0; epoch < 200; ++epoch)
    for (int s = 0; s < n; ++s) {
      int i = static_cast<int>(rng.uniform01() * n);
      model.sgd_step(p.rows[i], p.y[i]);
    }
  double reached = ridge_objective(p.rows, p.y, model.dense_weights(), delta2);
  REQUIRE(reached <= target * (1.0 + 1e-3));
  REQUIRE(reached >= target * (1.0 - 1e-12));  // the exact optimum is a floor
}

TEST_CASE("weight splitting at a cut preserves every prediction") {
  Problem p = feature_problem(40, 2, 4, 0.0, 23);
  SgdModel model(p.indexer.total_columns(), {0.1, 40.0, 0.0});
  Rng rng(7);
  for (int s = 0; s < 200; ++s) {
    int i = static_cast<int>(rng.uniform01() * 40);
    model.sgd_step(p.rows[i], p.y[i]);
  }
  // replay the first few cuts, splitting weights as we go
  auto events = cut_events(p.forest, p.forest.trees[0].terminal_lifetime);
  int applied = 0;
  for (const CutEvent& event : events) {
    if (applied >= 6) break;
    if (!p.indexer.occupied(event.tree_index, event.parent)) continue;
    std::vector<double> before(40);
    for (int i = 0; i < 40; ++i) before[i] = model.predict(p.rows[i]);
    CutDelta delta = p.indexer.apply_cut(event, p.forest, p.x);
    model.reinit_on_cut(delta);
    for (int r : delta.left_rows) replace_label(p.rows[r], delta.removed, delta.left_col);
    for (int r : delta.right_rows) replace_label(p.rows[r], delta.removed, delta.right_col);
    for (int i = 0; i < 40; ++i) {
      double after = model.predict(p.rows[i]);
      REQUIRE(std::abs(after - before[i]) <= 1e-12 * std::max(1.0, std::abs(before[i])));
    }
    ++applied;
  }
  REQUIRE(applied == 6);
}

TEST_CASE("splitting a zero weight yields zero children") {
  SgdModel model(3, {0.1, 10.0, 0.0});
  CutDelta delta;
  delta.removed = 1;
  delta.left_col = 3;
  delta.right_col = 4;
  model.reinit_on_cut(delta);
  REQUIRE(model.value_of(3) == 0.0);
  REQUIRE(model.value_of(4) == 0.0);
  REQUIRE(model.n_labels() == 5);
}

TEST_CASE("padding for online points changes no existing prediction") {
  Problem p = feature_problem(25, 2, 3, 1.0, 24);
  SgdModel model(p.indexer.total_columns(), {0.1, 25.0, 0.0});
  Rng rng(8);
  for (int s = 0; s < 100; ++s) {
    int i = static_cast<int>(rng.uniform01() * 25);
    model.sgd_step(p.rows[i], p.y[i]);
  }
  std::vector<double> before(25);
  for (int i = 0; i < 25; ++i) before[i] = model.predict(p.rows[i]);
  model.pad_for_new_point(0);  // k = 0 is the identity
  model.pad_for_new_point(3);  // k = M new cells
  for (int i = 0; i < 25; ++i) REQUIRE(model.predict(p.rows[i]) == before[i]);
  REQUIRE(model.n_labels() == p.indexer.total_columns() + 3);
}

TEST_CASE("training continues seamlessly after padding") {
  // pad, then train to convergence; the final loss matches a fresh batch run
  const int n = 60;
  Problem p = feature_problem(n, 2, 4, 1.5, 25);
  const double delta2 = 0.05;

  SgdModel padded(p.indexer.total_columns() - 4, {0.1, static_cast<double>(n), delta2 / n});
  padded.pad_for_new_point(4);
  SgdModel fresh(p.indexer.total_columns(), {0.1, static_cast<double>(n), delta2 / n});
  Rng rng_a(11), rng_b(11);
  for (int epoch = 0; epoch < 150; ++epoch)
    for (int s = 0; s < n; ++s) {
      int i = static_cast<int>(rng_a.uniform01() * n);
      padded.sgd_step(p.rows[i], p.y[i]);
      int j = static_cast<int>(rng_b.uniform01() * n);
      fresh.sgd_step(p.rows[j], p.y[j]);
    }
  double a = ridge_objective(p.rows, p.y, padded.dense_weights(), delta2);
  double b = ridge_objective(p.rows, p.y, fresh.dense_weights(), delta2);
  REQUIRE(a == Catch::Approx(b).epsilon(1e-3));
}

TEST_CASE("sgd sweep recovers the exact sweep's lifetime within a factor of three") {
  Dataset data = make_laplace_synthetic(180, 2, 5.0, 0.1, 31);
  Eigen::MatrixXd x_train = data.X.topRows(120), x_val = data.X.bottomRows(60);
  Eigen::VectorXd y_train = data.y.head(120), y_val = data.y.tail(60);
  const double lambda_max = 50.0;
  MondrianForest forest = sample_forest(unit_box(2), 8, lambda_max, 67);

  SweepOptions exact_options;
  exact_options.delta2 = 0.01;
  SweepResult exact = run_sweep(x_train, y_train, x_val, y_val, forest, lambda_max, exact_options);
  auto [exact_lambda, exact_value] = select_lifetime(exact.trace);

  SweepOptions sgd_options;
  sgd_options.mode = SweepMode::sgd;
  sgd_options.delta2 = 0.01;
  sgd_options.sgd_epochs_per_decade = 10.0;
  sgd_options.sgd_initial_epochs = 5;
  sgd_options.sgd_seed = 5;
  SweepResult sgd = run_sweep(x_train, y_train, x_val, y_val, forest, lambda_max, sgd_options);
  auto [sgd_lambda, sgd_value] = select_lifetime(sgd.trace);

  REQUIRE(sgd_lambda > 0.0);
  REQUIRE(sgd_lambda / exact_lambda <= 3.0);
  REQUIRE(exact_lambda / sgd_lambda <= 3.0);
}
