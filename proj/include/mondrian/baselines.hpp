#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "mondrian/feature_map.hpp"
#include "mondrian/rng.hpp"

namespace mondrian {

// Random Fourier features for the isotropic Laplace kernel: frequencies are
// coordinate-wise Cauchy with scale lambda (the Fourier transform of the
// one-dimensional Laplace factor), phases uniform on [0, 2pi).
struct FourierFeatureSet {
  Eigen::MatrixXd omega;  // C x D
  Eigen::VectorXd phase;  // C

  static FourierFeatureSet sample(int feature_count, int dim, double lambda,
                                  std::uint64_t seed) {
    if (feature_count < 1) throw std::invalid_argument("FourierFeatureSet: need >= 1 feature");
    FourierFeatureSet set;
    set.omega.resize(feature_count, dim);
    set.phase.resize(feature_count);
    Rng rng(seed);
    constexpr double pi = 3.14159265358979323846;
    for (int c = 0; c < feature_count; ++c) {
      for (int d = 0; d < dim; ++d)
        set.omega(c, d) = lambda * std::tan(pi * (rng.uniform01() - 0.5));
      set.phase[c] = rng.uniform(0.0, 2.0 * pi);
    }
    return set;
  }

  int feature_count() const { return static_cast<int>(omega.rows()); }

  Eigen::VectorXd features(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != omega.cols())
      throw std::invalid_argument("FourierFeatureSet: dimension mismatch");
    Eigen::VectorXd z = (omega * x + phase).array().cos();
    z *= std::sqrt(2.0 / feature_count());
    return z;
  }
};

// Random binning for the Laplace kernel: each repetition lays down an
// axis-aligned grid with per-dimension pitch drawn from Gamma(2, lambda) and
// uniform offset, and maps a point to the indicator of its grid cell. Points
// carry exactly `repetitions` nonzeros, mirroring the Mondrian sparsity.
class BinningFeatureSet {
 public:
  static BinningFeatureSet sample(int repetitions, int dim, double lambda, std::uint64_t seed) {
    if (repetitions < 1) throw std::invalid_argument("BinningFeatureSet: need >= 1 repetition");
    if (!(lambda >= 0.0)) throw std::invalid_argument("BinningFeatureSet: lambda must be >= 0");
    BinningFeatureSet set;
    set.reps_ = repetitions;
    set.dim_ = dim;
    set.degenerate_ = lambda == 0.0;
    set.pitch_.resize(repetitions, dim);
    set.offset_.resize(repetitions, dim);
    Rng rng(seed);
    for (int r = 0; r < repetitions; ++r) {
      for (int d = 0; d < dim; ++d) {
        // Gamma(shape 2, rate lambda) as the sum of two exponentials
        double pitch = set.degenerate_
                           ? 1.0
                           : rng.exponential(lambda) + rng.exponential(lambda);
        set.pitch_(r, d) = pitch;
        set.offset_(r, d) = rng.uniform(0.0, pitch);
      }
    }
    return set;
  }

  int repetitions() const { return reps_; }

  std::vector<std::int64_t> bin_key(const Eigen::Ref<const Eigen::VectorXd>& x, int rep) const {
    if (x.size() != dim_) throw std::invalid_argument("BinningFeatureSet: dimension mismatch");
    std::vector<std::int64_t> key(dim_);
    for (int d = 0; d < dim_; ++d)
      key[d] = degenerate_
                   ? 0
                   : static_cast<std::int64_t>(std::floor((x[d] - offset_(rep, d)) / pitch_(rep, d)));
    return key;
  }

  bool same_bin(const Eigen::Ref<const Eigen::VectorXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>& y, int rep) const {
    return bin_key(x, rep) == bin_key(y, rep);
  }

  // Assigns columns to the bins occupied by the rows of X (one block of
  // columns per repetition) and returns the sparse rows, each with
  // `repetitions` nonzeros of value repetitions^(-1/2).
  std::pair<std::vector<SparseVec>, int> build(const Eigen::Ref<const Eigen::MatrixXd>& X) {
    bins_.assign(reps_, {});
    columns_ = 0;
    std::vector<SparseVec> rows;
    rows.reserve(X.rows());
    const double value = 1.0 / std::sqrt(static_cast<double>(reps_));
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
      SparseVec phi;
      phi.reserve(reps_);
      for (int r = 0; r < reps_; ++r) {
        auto key = bin_key(X.row(n).transpose(), r);
        auto [it, fresh] = bins_[r].try_emplace(std::move(key), columns_);
        if (fresh) ++columns_;
        phi.emplace_back(it->second, value);
      }
      std::sort(phi.begin(), phi.end());
      rows.push_back(std::move(phi));
    }
    return {std::move(rows), columns_};
  }

  // Encoding of an unseen point against the bins of build(); bins holding no
  // indexed point contribute nothing.
  SparseVec encode(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    SparseVec phi;
    const double value = 1.0 / std::sqrt(static_cast<double>(reps_));
    for (int r = 0; r < reps_; ++r) {
      auto it = bins_[r].find(bin_key(x, r));
      if (it != bins_[r].end()) phi.emplace_back(it->second, value);
    }
    std::sort(phi.begin(), phi.end());
    return phi;
  }

 private:
  int reps_ = 0;
  int dim_ = 0;
  bool degenerate_ = false;
  Eigen::MatrixXd pitch_;
  Eigen::MatrixXd offset_;
  std::vector<std::map<std::vector<std::int64_t>, int>> bins_;
  int columns_ = 0;
};

}  // namespace mondrian
