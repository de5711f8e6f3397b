#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mondrian/kernels.hpp"
#include "mondrian/ridge.hpp"
#include "mondrian/rng.hpp"

namespace mondrian {

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline double parse_number(const std::string& text, const std::string& path, std::size_t line_no) {
  const char* begin = text.c_str();
  char* end = nullptr;
  double value = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0'))
    throw io_error(path + ":" + std::to_string(line_no) + ": malformed numeric field '" + text + "'");
  return value;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Headered CSV with one label column named "y"; every other column is a
// numeric feature, kept in header order. Errors carry the offending line.
inline Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open file");
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw io_error(path + ":1: empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = detail::split_csv_line(line);
  int y_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "y") {
      if (y_col >= 0) throw io_error(path + ":1: duplicate 'y' column");
      y_col = static_cast<int>(i);
    }
  if (y_col < 0) throw io_error(path + ":1: no column named 'y' in header");
  const std::size_t n_fields = header.size();
  std::vector<std::vector<double>> feature_rows;
  std::vector<double> targets;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != n_fields)
      throw io_error(path + ":" + std::to_string(line_no) + ": expected " +
                     std::to_string(n_fields) + " fields, found " + std::to_string(fields.size()));
    std::vector<double> features;
    features.reserve(n_fields - 1);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      double v = detail::parse_number(fields[i], path, line_no);
      if (static_cast<int>(i) == y_col)
        targets.push_back(v);
      else
        features.push_back(v);
    }
    feature_rows.push_back(std::move(features));
  }
  Dataset data;
  data.X.resize(feature_rows.size(), n_fields - 1);
  data.y.resize(targets.size());
  for (std::size_t n = 0; n < feature_rows.size(); ++n) {
    for (std::size_t d = 0; d + 1 < n_fields; ++d) data.X(n, d) = feature_rows[n][d];
    data.y[n] = targets[n];
  }
  return data;
}

// Writes a dataset as headered CSV (y, x1, ..., xD) with 17 significant
// digits, enough for a lossless double round trip.
inline void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw io_error(path + ": cannot open file for writing");
  out << "y";
  for (Eigen::Index d = 0; d < data.dim(); ++d) out << ",x" << (d + 1);
  out << "\n";
  for (Eigen::Index n = 0; n < data.rows(); ++n) {
    out << detail::format_double(data.y[n]);
    for (Eigen::Index d = 0; d < data.dim(); ++d)
      out << "," << detail::format_double(data.X(n, d));
    out << "\n";
  }
  if (!out) throw io_error(path + ": write failed");
}

// Whitespace-separated sparse format: "<label> <index>:<value> ...", indices
// one-based. Used for externally supplied regression sets.
inline Dataset read_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open file");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<std::pair<int, double>>> rows;
  std::vector<double> targets;
  int max_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string token;
    if (!(ss >> token))
      throw io_error(path + ":" + std::to_string(line_no) + ": missing label");
    targets.push_back(detail::parse_number(token, path, line_no));
    std::vector<std::pair<int, double>> entries;
    while (ss >> token) {
      std::size_t colon = token.find(':');
      if (colon == std::string::npos)
        throw io_error(path + ":" + std::to_string(line_no) + ": malformed pair '" + token + "'");
      int index = static_cast<int>(detail::parse_number(token.substr(0, colon), path, line_no));
      double value = detail::parse_number(token.substr(colon + 1), path, line_no);
      if (index < 1)
        throw io_error(path + ":" + std::to_string(line_no) + ": index must be >= 1");
      max_index = std::max(max_index, index);
      entries.emplace_back(index - 1, value);
    }
    rows.push_back(std::move(entries));
  }
  Dataset data;
  data.X = Eigen::MatrixXd::Zero(rows.size(), max_index);
  data.y.resize(targets.size());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    data.y[n] = targets[n];
    for (const auto& [d, v] : rows[n]) data.X(n, d) = v;
  }
  return data;
}

// Draws targets jointly from a centered Gaussian with Laplace-kernel
// covariance exp(-lambda0 ||x_i - x_j||_1) + noise^2 on the diagonal. A
// non-positive-definite Gram picks up a 1e-8 jitter and is retried once.
inline Eigen::VectorXd laplace_gaussian_targets(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                                double lambda0, double noise, Rng& rng) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = 1.0 + noise * noise;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double k = laplace_kernel(X.row(i).transpose(), X.row(j).transpose(), lambda0);
      gram(i, j) = gram(j, i) = k;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    gram.diagonal().array() += 1e-8;
    llt.compute(gram);
    if (llt.info() != Eigen::Success)
      throw numerical_error("laplace_gaussian_targets: Gram matrix not positive definite");
  }
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return llt.matrixL() * z;
}

// Synthetic regression data with known ground-truth lifetime: inputs uniform
// on [0,1]^D, targets jointly Gaussian under the Laplace kernel at lambda0.
inline Dataset make_laplace_synthetic(int n_points, int dim, double lambda0, double noise,
                                      std::uint64_t seed) {
  if (n_points < 1 || dim < 1)
    throw std::invalid_argument("make_laplace_synthetic: need n_points >= 1, dim >= 1");
  Dataset data;
  data.X.resize(n_points, dim);
  Rng rng(derive_seed(seed, 0x53594e5448ULL));
  for (int n = 0; n < n_points; ++n)
    for (int d = 0; d < dim; ++d) data.X(n, d) = rng.uniform01();
  data.y = laplace_gaussian_targets(data.X, lambda0, noise, rng);
  return data;
}

}  // namespace mondrian
