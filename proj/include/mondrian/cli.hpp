#pragma once

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mondrian/baselines.hpp"
#include "mondrian/dataset.hpp"
#include "mondrian/forest_model.hpp"
#include "mondrian/kernels.hpp"
#include "mondrian/sweep.hpp"

namespace mondrian {

// Exit codes: 0 success, 2 input error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

namespace cli_detail {

inline std::string fmt(double v) { return detail::format_double(v); }

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error(path + ": cannot open file for writing");
  return out;
}

inline std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    values.push_back(detail::parse_number(item, flag, 0));
  }
  if (values.empty()) throw io_error(flag + ": empty list");
  return values;
}

inline Dataset load_dataset(const std::string& path) {
  if (path.size() >= 7 && path.substr(path.size() - 7) == ".libsvm") return read_libsvm(path);
  return read_csv(path);
}

// Forest sampled over the joint bounding box of every dataset involved, so
// no query point needs a domain extension.
inline MondrianForest forest_over(const std::vector<const Dataset*>& sets, int trees,
                                  double lifetime, std::uint64_t seed) {
  Eigen::Index total = 0;
  for (const Dataset* s : sets) total += s->rows();
  if (total == 0) throw io_error("no data points supplied");
  Eigen::Index dim = sets.front()->dim();
  Eigen::MatrixXd all(total, dim);
  Eigen::Index at = 0;
  for (const Dataset* s : sets) {
    if (s->dim() != dim) throw io_error("datasets disagree on feature dimension");
    if (s->rows() > 0) all.middleRows(at, s->rows()) = s->X;
    at += s->rows();
  }
  return sample_forest(AxisAlignedBox::bounding(all), trees, lifetime, seed);
}

inline double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (truth.size() == 0) return 0.0;
  return std::sqrt((pred - truth).squaredNorm() / truth.size());
}

}  // namespace cli_detail

struct GenSyntheticArgs {
  int n_train = 500, n_val = 200, n_test = 200, dim = 2;
  double lambda0 = 10.0, noise = 0.1;
  std::uint64_t seed = 1;
  std::string output = "synthetic";
};

// Writes <output>.train.csv / .val.csv / .test.csv with targets drawn
// jointly from the Laplace-kernel Gaussian at lambda0.
inline int cmd_gen_synthetic(const GenSyntheticArgs& args) {
  const int total = args.n_train + args.n_val + args.n_test;
  if (args.n_train < 1 || args.n_val < 0 || args.n_test < 0)
    throw io_error("gen-synthetic: invalid split sizes");
  if (total > 3000)
    throw io_error("gen-synthetic: N + N_val + N_test must stay <= 3000 (dense Gram)");
  Dataset all = make_laplace_synthetic(total, args.dim, args.lambda0, args.noise, args.seed);
  auto slice = [&](int from, int count) {
    Dataset part;
    part.X = all.X.middleRows(from, count);
    part.y = all.y.segment(from, count);
    return part;
  };
  write_csv(args.output + ".train.csv", slice(0, args.n_train));
  write_csv(args.output + ".val.csv", slice(args.n_train, args.n_val));
  write_csv(args.output + ".test.csv", slice(args.n_train + args.n_val, args.n_test));
  std::cout << "wrote " << args.output << ".{train,val,test}.csv (D=" << args.dim
            << ", lambda0=" << args.lambda0 << ")\n";
  return kExitOk;
}

struct ApproxErrorArgs {
  std::vector<double> m_list{25, 50, 100, 200, 400};
  double lifetime = 10.0;
  int n_points = 100;
  int dim = 2;
  int repetitions = 5;
  std::uint64_t seed = 1;
  std::string output = "approx_error.csv";
};

// Maximum-absolute kernel approximation error over all point pairs, per
// scheme, against the number of nonzero features per data point.
inline int cmd_approx_error(const ApproxErrorArgs& args) {
  Rng rng(derive_seed(args.seed, 0xda7aULL));
  Eigen::MatrixXd X(args.n_points, args.dim);
  for (int n = 0; n < args.n_points; ++n)
    for (int d = 0; d < args.dim; ++d) X(n, d) = rng.uniform01();
  Eigen::MatrixXd exact(args.n_points, args.n_points);
  for (int i = 0; i < args.n_points; ++i)
    for (int j = 0; j < args.n_points; ++j)
      exact(i, j) = laplace_kernel(X.row(i).transpose(), X.row(j).transpose(), args.lifetime);
  const AxisAlignedBox box = AxisAlignedBox::bounding(X);
  auto out = cli_detail::open_output(args.output);
  out << "scheme,features_per_point,repetition,max_abs_error\n";
  for (double m_raw : args.m_list) {
    int m = static_cast<int>(m_raw);
    for (int rep = 0; rep < args.repetitions; ++rep) {
      std::uint64_t rep_seed = derive_seed(args.seed, 1000003ULL * m + rep);
      // Mondrian kernel
      MondrianForest forest = sample_forest(box, m, args.lifetime, rep_seed);
      out << "mondrian," << m << "," << rep << ","
          << cli_detail::fmt(max_abs_error(X, forest, args.lifetime)) << "\n";
      // random Fourier features (m nonzeros per point = m features)
      FourierFeatureSet fourier = FourierFeatureSet::sample(m, args.dim, args.lifetime,
                                                            derive_seed(rep_seed, 1));
      std::vector<Eigen::VectorXd> z(args.n_points);
      for (int n = 0; n < args.n_points; ++n) z[n] = fourier.features(X.row(n).transpose());
      double worst_f = 0.0;
      for (int i = 0; i < args.n_points; ++i)
        for (int j = i; j < args.n_points; ++j)
          worst_f = std::max(worst_f, std::abs(z[i].dot(z[j]) - exact(i, j)));
      out << "fourier," << m << "," << rep << "," << cli_detail::fmt(worst_f) << "\n";
      // random binning (m repetitions = m nonzeros per point)
      BinningFeatureSet binning =
          BinningFeatureSet::sample(m, args.dim, args.lifetime, derive_seed(rep_seed, 2));
      double worst_b = 0.0;
      for (int i = 0; i < args.n_points; ++i) {
        for (int j = i; j < args.n_points; ++j) {
          int matches = 0;
          for (int r = 0; r < m; ++r)
            if (binning.same_bin(X.row(i).transpose(), X.row(j).transpose(), r)) ++matches;
          worst_b = std::max(worst_b, std::abs(static_cast<double>(matches) / m - exact(i, j)));
        }
      }
      out << "binning," << m << "," << rep << "," << cli_detail::fmt(worst_b) << "\n";
    }
  }
  std::cout << "wrote " << args.output << "\n";
  return kExitOk;
}

struct SweepArgs {
  std::string input, validation, test, output = "sweep_trace.csv";
  std::string mode = "exact";
  int trees = 50;
  double terminal_lifetime = 100.0;
  double delta2 = 1e-4;
  std::uint64_t seed = 1;
  double sgd_epochs_per_decade = 1.0;
  std::string timings;  // optional wall-clock file, excluded from determinism
};

inline void write_trace_csv(std::ostream& out, const SweepTrace& trace) {
  out << "event_index,lambda,C,train_rmse,val_rmse,log_marginal_likelihood\n";
  for (const TraceRow& row : trace.rows) {
    out << row.event_index << "," << cli_detail::fmt(row.lambda) << "," << row.feature_count
        << "," << cli_detail::fmt(row.train_rmse) << "," << cli_detail::fmt(row.val_rmse) << ","
        << cli_detail::fmt(row.log_marginal_likelihood) << "\n";
  }
}

// Single pass over all lifetimes in [0, Lambda]; writes the trace and
// reports the selected lifetime. Mode bayes additionally writes the
// posterior over lambda to <output>.posterior.csv.
inline int cmd_sweep(const SweepArgs& args) {
  Dataset train = cli_detail::load_dataset(args.input);
  Dataset val = cli_detail::load_dataset(args.validation);
  std::optional<Dataset> test;
  if (!args.test.empty()) test = cli_detail::load_dataset(args.test);
  std::vector<const Dataset*> sets{&train, &val};
  if (test) sets.push_back(&*test);
  MondrianForest forest =
      cli_detail::forest_over(sets, args.trees, args.terminal_lifetime, args.seed);

  SweepOptions options;
  options.delta2 = args.delta2;
  options.sgd_epochs_per_decade = args.sgd_epochs_per_decade;
  options.sgd_seed = derive_seed(args.seed, 0x5347ULL);
  if (args.mode == "sgd")
    options.mode = SweepMode::sgd;
  else if (args.mode == "exact" || args.mode == "bayes")
    options.mode = SweepMode::exact;
  else
    throw io_error("--mode must be exact, sgd or bayes");

  auto started = std::chrono::steady_clock::now();
  SweepResult result =
      run_sweep(train.X, train.y, val.X, val.y, forest, args.terminal_lifetime, options);
  auto [lambda_hat, best_val] = select_lifetime(result.trace);
  {
    auto out = cli_detail::open_output(args.output);
    write_trace_csv(out, result.trace);
  }
  if (!args.timings.empty()) {
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    auto out = cli_detail::open_output(args.timings);
    out << "events,seconds\n" << result.trace.rows.size() << "," << elapsed << "\n";
  }
  std::cout << "events: " << (result.trace.rows.size() - 1) << "\n";
  std::cout << "lambda_hat: " << cli_detail::fmt(lambda_hat)
            << " (validation rmse " << cli_detail::fmt(best_val) << ")\n";

  if (args.mode == "bayes") {
    BayesianSweep bayes(train.X, train.y, forest, args.terminal_lifetime, args.delta2,
                        uniform_prior(args.terminal_lifetime));
    const LambdaPosterior& post = bayes.posterior();
    auto out = cli_detail::open_output(args.output + ".posterior.csv");
    out << "interval,tau_lower,tau_upper,log_marginal_likelihood,mixing_coefficient\n";
    for (int c = 0; c < post.intervals(); ++c) {
      out << c << "," << cli_detail::fmt(post.boundaries[c]) << ","
          << cli_detail::fmt(post.boundaries[c + 1]) << "," << cli_detail::fmt(post.log_marginal[c])
          << "," << cli_detail::fmt(post.mixing[c]) << "\n";
    }
    if (test) {
      Eigen::VectorXd mix_pred(test->rows());
      for (Eigen::Index n = 0; n < test->rows(); ++n)
        mix_pred[n] = bayes.predictive_mean(test->X.row(n).transpose());
      std::cout << "bayes test rmse: " << cli_detail::fmt(cli_detail::rmse(mix_pred, test->y))
                << "\n";
    }
  } else if (test) {
    // refit at lambda_hat and score the held-out test set
    auto [indexer, rows] = build_features(forest, lambda_hat, train.X);
    RidgeState model = RidgeState::fit(rows, train.y, args.delta2);
    Eigen::VectorXd pred(test->rows());
    for (Eigen::Index n = 0; n < test->rows(); ++n)
      pred[n] = model.predict_one(indexer.encode(forest, test->X.row(n).transpose()));
    std::cout << "test rmse at lambda_hat: " << cli_detail::fmt(cli_detail::rmse(pred, test->y))
              << "\n";
  }
  return kExitOk;
}

struct OnlineArgs {
  std::string input, test, output = "online_trace.csv";
  int trees = 10;
  double lifetime = 2.0;
  double delta2 = 1e-4;
  std::uint64_t seed = 1;
};

// Streams the training set one point at a time: trees are extended to cover
// each arrival (conditional Mondrian), new cells append feature columns, and
// the solver takes a rank-1 update per point.
inline int cmd_online(const OnlineArgs& args) {
  Dataset train = cli_detail::load_dataset(args.input);
  std::optional<Dataset> test;
  if (!args.test.empty()) test = cli_detail::load_dataset(args.test);
  if (train.rows() == 0) throw io_error("online: empty training set");

  MondrianForest forest;
  {
    Eigen::VectorXd x0 = train.X.row(0).transpose();
    AxisAlignedBox seed_box(x0, x0);
    forest = sample_forest(seed_box, args.trees, args.lifetime, args.seed);
  }
  FeatureIndexer indexer(args.trees, args.lifetime);
  RidgeState solver(args.delta2);
  auto out = cli_detail::open_output(args.output);
  out << "step,C,new_columns,train_rmse,test_rmse\n";
  for (Eigen::Index n = 0; n < train.rows(); ++n) {
    Eigen::VectorXd x = train.X.row(n).transpose();
    for (int m = 0; m < forest.size(); ++m) {
      if (!forest.trees[m].root_box.contains(x)) {
        AxisAlignedBox wider = forest.trees[m].root_box.expanded_to(x);
        forest.trees[m] =
            extend_tree(forest.trees[m], wider, derive_seed(args.seed, 7919ULL * n + m));
      }
    }
    auto [phi, created] = indexer.add_point(forest, x, static_cast<int>(n));
    for (const auto& [label, value] : phi)
      if (!solver.has_label(label)) solver.append_empty_column(label);
    solver.rank1_data_update(phi, train.y[n]);
    double test_rmse = 0.0;
    if (test) {
      Eigen::VectorXd pred(test->rows());
      for (Eigen::Index t = 0; t < test->rows(); ++t) {
        Eigen::VectorXd xt = test->X.row(t).transpose();
        SparseVec enc;
        bool covered = true;
        for (int m = 0; m < forest.size() && covered; ++m)
          covered = forest.trees[m].root_box.contains(xt);
        if (covered) enc = indexer.encode(forest, xt);
        pred[t] = solver.predict_one(enc);
      }
      test_rmse = cli_detail::rmse(pred, test->y);
    }
    out << (n + 1) << "," << solver.n_cols() << "," << created << ","
        << cli_detail::fmt(solver.train_rmse()) << "," << cli_detail::fmt(test_rmse) << "\n";
  }
  std::cout << "wrote " << args.output << " (final C=" << solver.n_cols() << ")\n";
  return kExitOk;
}

struct CompareForestArgs {
  std::string input, test, output = "kernel_vs_forest.csv";
  int trees = 50;
  std::vector<double> lifetimes{0.5, 1, 2, 4, 8, 16};
  double delta2 = 1e-4;  // gamma2 is matched to delta2
  std::uint64_t seed = 1;
};

// Kernel (joint fit) versus forest (independent per-tree fits) on the same
// Mondrian samples, across a lifetime grid; also writes the weight
// histograms at the smallest grid lifetime with at least two cuts per tree.
inline int cmd_compare_forest(const CompareForestArgs& args) {
  Dataset train = cli_detail::load_dataset(args.input);
  std::optional<Dataset> test;
  if (!args.test.empty()) test = cli_detail::load_dataset(args.test);
  std::vector<const Dataset*> sets{&train};
  if (test) sets.push_back(&*test);
  std::vector<double> grid = args.lifetimes;
  std::sort(grid.begin(), grid.end());
  MondrianForest forest = cli_detail::forest_over(sets, args.trees, grid.back(), args.seed);

  auto out = cli_detail::open_output(args.output);
  out << "lambda,kernel_train_rmse,kernel_test_rmse,forest_train_rmse,forest_test_rmse\n";
  std::optional<double> histogram_lambda;
  std::vector<double> hist_kernel, hist_forest;
  for (double lambda : grid) {
    auto [indexer, rows] = build_features(forest, lambda, train.X);
    RidgeState kernel = RidgeState::fit(rows, train.y, args.delta2);
    ForestModel forest_model = fit_forest(indexer, train.y, args.delta2);
    Eigen::VectorXd kernel_train(train.rows()), forest_train(train.rows());
    for (Eigen::Index n = 0; n < train.rows(); ++n) {
      kernel_train[n] = kernel.predict_one(rows[n]);
      forest_train[n] = predict_forest_row(forest_model, rows[n]);
    }
    double kernel_test = 0.0, forest_test = 0.0;
    if (test) {
      Eigen::VectorXd kp(test->rows()), fp(test->rows());
      for (Eigen::Index n = 0; n < test->rows(); ++n) {
        Eigen::VectorXd xt = test->X.row(n).transpose();
        kp[n] = kernel.predict_one(indexer.encode(forest, xt));
        fp[n] = predict_forest(forest_model, indexer, forest, xt);
      }
      kernel_test = cli_detail::rmse(kp, test->y);
      forest_test = cli_detail::rmse(fp, test->y);
    }
    out << cli_detail::fmt(lambda) << "," << cli_detail::fmt(cli_detail::rmse(kernel_train, train.y))
        << "," << cli_detail::fmt(kernel_test) << ","
        << cli_detail::fmt(cli_detail::rmse(forest_train, train.y)) << ","
        << cli_detail::fmt(forest_test) << "\n";
    if (!histogram_lambda) {
      double cuts_per_tree =
          static_cast<double>(indexer.nonempty_live_columns() - args.trees) / args.trees;
      if (cuts_per_tree >= 2.0) {
        histogram_lambda = lambda;
        const double root_m = std::sqrt(static_cast<double>(args.trees));
        for (int label : kernel.labels())
          hist_kernel.push_back(root_m * kernel.weight_of(label));  // per-tree parametrization
        for (int col = 0; col < indexer.total_columns(); ++col)
          if (indexer.column_active(col)) hist_forest.push_back(forest_model.weights_by_label[col]);
      }
    }
  }
  if (histogram_lambda) {
    double bound = 0.0;
    for (double v : hist_kernel) bound = std::max(bound, std::abs(v));
    for (double v : hist_forest) bound = std::max(bound, std::abs(v));
    WeightHistogram hk = weight_histogram(hist_kernel, bound);
    WeightHistogram hf = weight_histogram(hist_forest, bound);
    auto wout = cli_detail::open_output(args.output + ".weights.csv");
    wout << "# lambda=" << cli_detail::fmt(*histogram_lambda) << "\n";
    wout << "bin_center,kernel_count,forest_count\n";
    for (int b = 0; b < 101; ++b) {
      double center = hk.lo + (b + 0.5) * (hk.hi - hk.lo) / 101.0;
      wout << cli_detail::fmt(center) << "," << hk.counts[b] << "," << hf.counts[b] << "\n";
    }
  }
  std::cout << "wrote " << args.output << "\n";
  return kExitOk;
}

// Command-line front end. Returns a process exit code.
inline int run_cli(const std::vector<std::string>& arguments) {
  CLI::App app{"Mondrian random features for the Laplace kernel"};
  app.require_subcommand(1);

  GenSyntheticArgs gen;
  CLI::App* cmd_gen = app.add_subcommand(
      "gen-synthetic", "Generate a synthetic regression dataset with known lifetime");
  cmd_gen->add_option("--n-train", gen.n_train);
  cmd_gen->add_option("--n-val", gen.n_val);
  cmd_gen->add_option("--n-test", gen.n_test);
  cmd_gen->add_option("--dim", gen.dim);
  cmd_gen->add_option("--lambda0", gen.lambda0);
  cmd_gen->add_option("--noise", gen.noise);
  cmd_gen->add_option("--seed", gen.seed);
  cmd_gen->add_option("--output", gen.output);

  ApproxErrorArgs approx;
  std::string m_list_text;
  CLI::App* cmd_approx = app.add_subcommand(
      "approx-error", "Kernel approximation error of the random feature schemes");
  cmd_approx->add_option("--m-list", m_list_text, "comma-separated feature counts");
  cmd_approx->add_option("--lifetime", approx.lifetime);
  cmd_approx->add_option("--n-points", approx.n_points);
  cmd_approx->add_option("--dim", approx.dim);
  cmd_approx->add_option("--repetitions", approx.repetitions);
  cmd_approx->add_option("--seed", approx.seed);
  cmd_approx->add_option("--output", approx.output);

  SweepArgs sweep;
  CLI::App* cmd_sw = app.add_subcommand(
      "sweep", "Evaluate every lifetime in [0, Lambda] in a single pass");
  cmd_sw->add_option("--input", sweep.input)->required();
  cmd_sw->add_option("--validation", sweep.validation)->required();
  cmd_sw->add_option("--test", sweep.test);
  cmd_sw->add_option("--output", sweep.output);
  cmd_sw->add_option("--trees", sweep.trees);
  cmd_sw->add_option("--terminal-lifetime", sweep.terminal_lifetime);
  cmd_sw->add_option("--ridge-delta2", sweep.delta2);
  cmd_sw->add_option("--seed", sweep.seed);
  cmd_sw->add_option("--mode", sweep.mode, "exact | sgd | bayes");
  cmd_sw->add_option("--sgd-epochs-per-decade", sweep.sgd_epochs_per_decade);
  cmd_sw->add_option("--timings", sweep.timings);

  OnlineArgs online;
  CLI::App* cmd_on = app.add_subcommand("online", "Stream points with rank-1 model updates");
  cmd_on->add_option("--input", online.input)->required();
  cmd_on->add_option("--test", online.test);
  cmd_on->add_option("--output", online.output);
  cmd_on->add_option("--trees", online.trees);
  cmd_on->add_option("--lifetime", online.lifetime);
  cmd_on->add_option("--ridge-delta2", online.delta2);
  cmd_on->add_option("--seed", online.seed);

  CompareForestArgs compare;
  std::string grid_text;
  CLI::App* cmd_cmp = app.add_subcommand(
      "compare-forest", "Joint kernel fit versus per-tree forest fit on shared samples");
  cmd_cmp->add_option("--input", compare.input)->required();
  cmd_cmp->add_option("--test", compare.test);
  cmd_cmp->add_option("--output", compare.output);
  cmd_cmp->add_option("--trees", compare.trees);
  cmd_cmp->add_option("--lifetime-grid", grid_text, "comma-separated lifetimes");
  cmd_cmp->add_option("--ridge-delta2", compare.delta2);
  cmd_cmp->add_option("--seed", compare.seed);

  try {
    std::vector<std::string> reversed(arguments.rbegin(), arguments.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (cmd_gen->parsed()) return cmd_gen_synthetic(gen);
    if (cmd_approx->parsed()) {
      if (!m_list_text.empty()) approx.m_list = cli_detail::parse_list(m_list_text, "--m-list");
      return cmd_approx_error(approx);
    }
    if (cmd_sw->parsed()) return cmd_sweep(sweep);
    if (cmd_on->parsed()) return cmd_online(online);
    if (cmd_cmp->parsed()) {
      if (!grid_text.empty()) compare.lifetimes = cli_detail::parse_list(grid_text, "--lifetime-grid");
      return cmd_compare_forest(compare);
    }
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const io_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> arguments;
  for (int i = 1; i < argc; ++i) arguments.emplace_back(argv[i]);
  return run_cli(arguments);
}

}  // namespace mondrian
