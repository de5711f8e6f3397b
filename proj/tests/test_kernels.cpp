#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mondrian/mondrian.hpp"
#include "support.hpp"

using namespace mondrian;
using test_support::unit_box;

TEST_CASE("laplace kernel basics") {
  Eigen::VectorXd x(3), y(3);
  x << 0.1, 0.5, 0.9;
  y << 0.2, 0.4, 0.8;
  REQUIRE(laplace_kernel(x, x, 3.0) == 1.0);
  REQUIRE(laplace_kernel(x, y, 0.0) == 1.0);
  REQUIRE(laplace_kernel(x, y, 2.0) == laplace_kernel(y, x, 2.0));
  REQUIRE(laplace_kernel(x, y, 2.0) > 0.0);
  REQUIRE(laplace_kernel(x, y, 2.0) <= 1.0);
  Eigen::VectorXd short_vec(2);
  short_vec << 0.1, 0.2;
  REQUIRE_THROWS_AS(laplace_kernel(x, short_vec, 1.0), std::invalid_argument);
}

TEST_CASE("laplace kernel closed form: lambda 10 at l1 distance 0.1") {
  Eigen::VectorXd x(2), y(2);
  x << 0.30, 0.40;
  y << 0.34, 0.46;  // ||x - y||_1 = 0.1
  REQUIRE(laplace_kernel(x, y, 10.0) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("mondrian kernel trivial values") {
  MondrianForest forest = sample_forest(unit_box(2), 4, 0.0, 3);
  Eigen::MatrixXd x = test_support::uniform_points(10, 2, 4);
  auto [indexer, rows] = build_features(forest, 0.0, x);
  for (int i = 0; i < 10; ++i) {
    REQUIRE(mondrian_kernel(rows[i], rows[i]) == Catch::Approx(1.0).epsilon(1e-12));
    for (int j = 0; j < 10; ++j)
      REQUIRE(mondrian_kernel(rows[i], rows[j]) == Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("mondrian kernel values live on the 1/M grid") {
  const int m = 8;
  MondrianForest forest = sample_forest(unit_box(2), m, 5.0, 91);
  Eigen::MatrixXd x = test_support::uniform_points(25, 2, 92);
  auto [indexer, rows] = build_features(forest, 5.0, x);
  for (int i = 0; i < 25; ++i) {
    for (int j = 0; j < 25; ++j) {
      double k = mondrian_kernel(rows[i], rows[j]);
      double scaled = k * m;
      REQUIRE(scaled == Catch::Approx(std::round(scaled)).margin(1e-9));
      REQUIRE(k >= 0.0);
      REQUIRE(k <= 1.0);
    }
  }
}

TEST_CASE("a single pair at high order concentrates near the Laplace value") {
  // k_M is a mean of M Bernoulli(exp(-1)) draws; Hoeffding puts it within
  // 4/sqrt(M) of its mean with overwhelming probability.
  const int m = 10000;
  Eigen::MatrixXd pair(2, 2);
  pair << 0.30, 0.40,
          0.34, 0.46;  // l1 distance 0.1, lambda 10 below
  MondrianForest forest = sample_forest(AxisAlignedBox::bounding(pair), m, 10.0, 2024);
  auto [indexer, rows] = build_features(forest, 10.0, pair);
  double k = mondrian_kernel(rows[0], rows[1]);
  REQUIRE(std::abs(k - std::exp(-1.0)) <= 4.0 / std::sqrt(static_cast<double>(m)));
}

TEST_CASE("max_abs_error is zero at lifetime zero") {
  MondrianForest forest = sample_forest(unit_box(2), 5, 0.0, 7);
  Eigen::MatrixXd x = test_support::uniform_points(30, 2, 8);
  REQUIRE(max_abs_error(x, forest, 0.0) == 0.0);
}

TEST_CASE("single pair, single tree: error equals the indicator deviation") {
  Eigen::MatrixXd pair(2, 2);
  pair << 0.1, 0.1,
          0.8, 0.9;
  const double lambda = 2.0;
  MondrianForest forest;
  forest.trees.push_back(sample_tree(unit_box(2), lambda, 31));
  double exact = laplace_kernel(pair.row(0).transpose(), pair.row(1).transpose(), lambda);
  bool same = cell_lookup(forest.trees[0], pair.row(0).transpose(), lambda) ==
              cell_lookup(forest.trees[0], pair.row(1).transpose(), lambda);
  double expected = std::max(std::abs((same ? 1.0 : 0.0) - exact), std::abs(1.0 - 1.0));
  REQUIRE(max_abs_error(pair, forest, lambda) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("error decreases with order on the unit-square setup") {
  // medians over 5 seeds at M = 100 vs M = 16 (scaled-down sanity version of
  // the acceptance criterion)
  Eigen::MatrixXd x = test_support::uniform_points(40, 2, 77);
  auto median_error = [&](int m, std::uint64_t base) {
    std::vector<double> errors;
    for (int s = 0; s < 5; ++s) {
      MondrianForest forest = sample_forest(unit_box(2), m, 10.0, derive_seed(base, s));
      errors.push_back(max_abs_error(x, forest, 10.0));
    }
    std::sort(errors.begin(), errors.end());
    return errors[2];
  };
  REQUIRE(median_error(100, 500) < median_error(16, 600));
}

TEST_CASE("same-cell frequency is an unbiased estimate of the Laplace kernel") {
  // Scaled-down version of the order-infinity link check (the acceptance
  // suite runs it at 100k samples): empirical same-cell frequency over
  // single-tree samples within 4 standard errors of exp(-lambda ||d||_1).
  const int samples = 20000;
  Eigen::MatrixXd pts = test_support::uniform_points(6, 3, 404);
  AxisAlignedBox box = unit_box(3);
  for (double lambda : {0.5, 2.0}) {
    std::vector<std::vector<int>> cells(samples);
    for (int s = 0; s < samples; ++s) {
      MondrianTree tree = sample_tree(box, lambda, derive_seed(9000 + static_cast<int>(lambda), s));
      std::vector<int> ids(6);
      for (int i = 0; i < 6; ++i) ids[i] = cell_lookup(tree, pts.row(i).transpose(), lambda);
      cells[s] = std::move(ids);
    }
    for (int i = 0; i < 6; ++i) {
      for (int j = i + 1; j < 6; ++j) {
        int together = 0;
        for (int s = 0; s < samples; ++s)
          if (cells[s][i] == cells[s][j]) ++together;
        double freq = static_cast<double>(together) / samples;
        double expected =
            laplace_kernel(pts.row(i).transpose(), pts.row(j).transpose(), lambda);
        double se = std::sqrt(std::max(expected * (1.0 - expected), 1e-12) / samples);
        REQUIRE(std::abs(freq - expected) <= 4.0 * se + 1e-9);
      }
    }
  }
}

TEST_CASE("the Gram matrix is numerically positive semidefinite") {
  const int m = 6;
  MondrianForest forest = sample_forest(unit_box(3), m, 3.0, 111);
  Eigen::MatrixXd x = test_support::uniform_points(50, 3, 112);
  Eigen::MatrixXd gram = mondrian_gram(forest, x, 3.0);
  REQUIRE((gram - gram.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs(gram);
  REQUIRE(eigs.eigenvalues().minCoeff() >= -1e-8);
  // and it coincides with the feature-space inner products
  auto [indexer, rows] = build_features(forest, 3.0, x);
  for (int i = 0; i < 50; i += 7)
    for (int j = 0; j < 50; j += 5)
      REQUIRE(gram(i, j) == Catch::Approx(sparse_dot(rows[i], rows[j])).margin(1e-12));
}
