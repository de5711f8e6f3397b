#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mondrian/tree.hpp"

namespace mondrian {

// One feature row: (column label, value) pairs sorted by label. Indexed data
// points carry exactly M nonzeros, all equal to M^(-1/2).
using SparseVec = std::vector<std::pair<int, double>>;

inline double sparse_dot(const SparseVec& a, const SparseVec& b) {
  double out = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first) {
      out += a[i].second * b[j].second;
      ++i;
      ++j;
    } else if (a[i].first < b[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

// Column delta produced by replaying one cut: the parent column is retired
// and two fresh trailing columns are appended, one per side.
struct CutDelta {
  int tree = -1;
  int removed = -1;
  int left_col = -1;
  int right_col = -1;
  std::vector<int> left_rows;
  std::vector<int> right_rows;
};

// Maps (tree, leaf) pairs to feature columns and tracks which training rows
// occupy each column. Column labels are append-only and never reused;
// retired columns are tombstoned so solver deltas stay unambiguous.
class FeatureIndexer {
 public:
  FeatureIndexer(int tree_count, double lifetime)
      : tree_count_(tree_count),
        lifetime_(lifetime),
        normalizer_(1.0 / std::sqrt(static_cast<double>(tree_count))),
        leaf_cols_(tree_count),
        live_per_tree_(tree_count, 0) {
    if (tree_count < 1) throw std::invalid_argument("FeatureIndexer: tree_count must be >= 1");
    if (!(lifetime >= 0.0)) throw std::invalid_argument("FeatureIndexer: lifetime must be >= 0");
  }

  int tree_count() const { return tree_count_; }
  double lifetime() const { return lifetime_; }
  double normalizer() const { return normalizer_; }
  int total_columns() const { return static_cast<int>(cols_.size()); }
  int live_columns() const { return live_; }
  int live_columns_in_tree(int m) const { return live_per_tree_[m]; }
  std::int64_t retired_columns() const { return retired_; }

  bool has_column(int tree, int leaf) const {
    const auto& map = leaf_cols_[tree];
    return map.find(leaf) != map.end();
  }
  int column_of(int tree, int leaf) const { return leaf_cols_[tree].at(leaf); }
  bool occupied(int tree, int leaf) const {
    auto it = leaf_cols_[tree].find(leaf);
    return it != leaf_cols_[tree].end() && !cols_[it->second].rows.empty();
  }

  int column_tree(int col) const { return cols_[col].tree; }
  int column_leaf(int col) const { return cols_[col].leaf; }
  bool column_active(int col) const { return cols_[col].active; }
  const std::vector<int>& rows_of_column(int col) const { return cols_[col].rows; }

  int nonempty_live_columns() const {
    int count = 0;
    for (const Column& c : cols_)
      if (c.active && !c.rows.empty()) ++count;
    return count;
  }

  // Indexes a new data point: its cell in each tree receives a column if it
  // has none yet. Returns the feature row and the number k of new columns,
  // 0 <= k <= M. Existing rows are implicitly zero in the new columns.
  std::pair<SparseVec, int> add_point(const MondrianForest& forest,
                                      const Eigen::Ref<const Eigen::VectorXd>& x, int row) {
    SparseVec phi;
    phi.reserve(tree_count_);
    int created = 0;
    for (int m = 0; m < tree_count_; ++m) {
      int col = find_column_on_path(forest.trees[m], m, x);
      if (col < 0) {
        int leaf = cell_lookup(forest.trees[m], x, lifetime_);
        col = make_column(m, leaf);
        ++created;
      }
      cols_[col].rows.push_back(row);
      phi.emplace_back(col, normalizer_);
    }
    std::sort(phi.begin(), phi.end());
    return {std::move(phi), created};
  }

  // Feature row for a point that is not indexed (validation/test data).
  // Cells without a column contribute nothing.
  SparseVec encode(const MondrianForest& forest,
                   const Eigen::Ref<const Eigen::VectorXd>& x) const {
    SparseVec phi;
    phi.reserve(tree_count_);
    for (int m = 0; m < tree_count_; ++m) {
      int col = find_column_on_path(forest.trees[m], m, x);
      if (col >= 0) phi.emplace_back(col, normalizer_);
    }
    std::sort(phi.begin(), phi.end());
    return phi;
  }

  // Replays one cut event: retires the split cell's column and appends two
  // columns, one per child, even when a child holds no training point (test
  // points may still land there). Affected rows move to exactly one side.
  CutDelta apply_cut(const CutEvent& event, const MondrianForest& forest,
                     const Eigen::Ref<const Eigen::MatrixXd>& X) {
    auto& map = leaf_cols_[event.tree_index];
    auto it = map.find(event.parent);
    if (it == map.end())
      throw std::invalid_argument("apply_cut: parent leaf has no column");
    int parent_col = it->second;
    const TreeNode& node = forest.trees[event.tree_index].nodes[event.parent];
    CutDelta delta;
    delta.tree = event.tree_index;
    delta.removed = parent_col;
    for (int r : cols_[parent_col].rows) {
      if (X(r, node.cut_dim) <= node.cut_location)
        delta.left_rows.push_back(r);
      else
        delta.right_rows.push_back(r);
    }
    map.erase(it);
    cols_[parent_col].active = false;
    cols_[parent_col].rows.clear();
    cols_[parent_col].rows.shrink_to_fit();
    --live_;
    --live_per_tree_[event.tree_index];
    ++retired_;
    delta.left_col = make_column(event.tree_index, event.left);
    delta.right_col = make_column(event.tree_index, event.right);
    cols_[delta.left_col].rows = delta.left_rows;
    cols_[delta.right_col].rows = delta.right_rows;
    return delta;
  }

 private:
  struct Column {
    int tree;
    int leaf;
    bool active;
    std::vector<int> rows;
  };

  int make_column(int tree, int leaf) {
    int col = static_cast<int>(cols_.size());
    cols_.push_back({tree, leaf, true, {}});
    leaf_cols_[tree].emplace(leaf, col);
    ++live_;
    ++live_per_tree_[tree];
    return col;
  }

  // Walks x's root-to-leaf path and returns the unique live column met along
  // it, or -1. At most one column can sit on any path: columns of one tree
  // always tile the root box during replay, and sit exactly at the
  // lifetime's cells after a batch build.
  int find_column_on_path(const MondrianTree& tree, int m,
                          const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (!tree.root_box.contains(x))
      throw extension_required("FeatureIndexer: point outside the sampled domain");
    const auto& map = leaf_cols_[m];
    int id = tree.root;
    for (;;) {
      auto it = map.find(id);
      if (it != map.end()) return it->second;
      const TreeNode& n = tree.nodes[id];
      if (n.is_leaf()) return -1;
      id = x[n.cut_dim] <= n.cut_location ? n.left : n.right;
    }
  }

  int tree_count_;
  double lifetime_;
  double normalizer_;
  std::vector<Column> cols_;
  std::vector<std::unordered_map<int, int>> leaf_cols_;
  std::vector<int> live_per_tree_;
  int live_ = 0;
  std::int64_t retired_ = 0;
};

// Maps all rows of X through the forest at the given lifetime. Row n carries
// M nonzeros of M^(-1/2), one per tree, at the columns of the cells
// containing x_n; only occupied cells receive columns.
inline std::pair<FeatureIndexer, std::vector<SparseVec>> build_features(
    const MondrianForest& forest, double lifetime, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  FeatureIndexer indexer(forest.size(), lifetime);
  std::vector<SparseVec> rows;
  rows.reserve(X.rows());
  for (Eigen::Index n = 0; n < X.rows(); ++n)
    rows.push_back(indexer.add_point(forest, X.row(n).transpose(), static_cast<int>(n)).first);
  return {std::move(indexer), std::move(rows)};
}

// Coordinate-format text export (row col value per line) for debugging and
// oracle comparisons.
inline void write_coo(std::ostream& os, const std::vector<SparseVec>& rows) {
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (const auto& [col, value] : rows[n]) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu %d %.17g\n", n, col, value);
      os << buf;
    }
  }
}

}  // namespace mondrian
