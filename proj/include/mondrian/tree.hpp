#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "mondrian/box.hpp"
#include "mondrian/rng.hpp"

namespace mondrian {

inline constexpr int kNoChild = -1;

// Thrown by cell_lookup when a query point lies outside the sampled domain;
// callers extend the tree first (see extend_tree).
struct extension_required : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TreeNode {
  double time = 0.0;       // cut time for internal nodes, birth time for leaves
  int cut_dim = -1;        // -1 marks a leaf
  double cut_location = 0.0;
  int left = kNoChild;
  int right = kNoChild;
  bool is_leaf() const { return cut_dim < 0; }
};

// Guillotine partition of root_box, refined over time up to terminal_lifetime.
// Nodes are stored in a flat vector; node ids are stable across extension, so
// they double as partition-cell ids for feature indexing.
struct MondrianTree {
  AxisAlignedBox root_box;
  std::vector<TreeNode> nodes;
  int root = kNoChild;
  double terminal_lifetime = 0.0;
  std::uint64_t seed = 0;

  bool is_leaf(int id) const { return nodes[id].is_leaf(); }
  int node_count() const { return static_cast<int>(nodes.size()); }

  // Number of partition cells at the given lifetime.
  int leaf_count(double lifetime) const {
    if (root == kNoChild) return 0;
    int count = 0;
    std::vector<int> stack{root};
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      const TreeNode& n = nodes[id];
      if (n.is_leaf() || n.time > lifetime) {
        ++count;
      } else {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
    return count;
  }

  // Time of the first cut, or +inf for a cut-less tree.
  double first_cut_time() const {
    if (root == kNoChild || nodes[root].is_leaf())
      return std::numeric_limits<double>::infinity();
    return nodes[root].time;
  }
};

namespace detail {

// Samples a Mondrian subtree on [lo, hi] born at `birth`, appending nodes in
// pre-order; returns the subtree root id.
inline int sample_subtree(MondrianTree& tree, Rng& rng, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi, double birth) {
  struct Frame {
    Eigen::VectorXd lo, hi;
    double birth;
    int parent;   // kNoChild for the subtree root
    bool is_left;
  };
  const double lifetime = tree.terminal_lifetime;
  const int dim = static_cast<int>(lo.size());
  int subtree_root = kNoChild;
  std::vector<Frame> stack;
  stack.push_back({lo, hi, birth, kNoChild, false});
  std::vector<double> extents(dim);
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    double total = 0.0;
    for (int d = 0; d < dim; ++d) {
      extents[d] = f.hi[d] - f.lo[d];
      total += extents[d];
    }
    double cut_time = total > 0.0
                          ? f.birth + rng.exponential(total)
                          : std::numeric_limits<double>::infinity();
    int id = tree.node_count();
    if (cut_time > lifetime) {
      tree.nodes.push_back({f.birth, -1, 0.0, kNoChild, kNoChild});
    } else {
      int d = rng.categorical(extents, total);
      double a = rng.uniform_open(f.lo[d], f.hi[d]);
      tree.nodes.push_back({cut_time, d, a, kNoChild, kNoChild});
      Eigen::VectorXd right_lo = f.lo;
      right_lo[d] = a;
      Eigen::VectorXd left_hi = f.hi;
      left_hi[d] = a;
      // push right first so the left child is emitted next (pre-order)
      stack.push_back({std::move(right_lo), f.hi, cut_time, id, false});
      stack.push_back({f.lo, std::move(left_hi), cut_time, id, true});
    }
    if (f.parent == kNoChild) {
      subtree_root = id;
    } else if (f.is_left) {
      tree.nodes[f.parent].left = id;
    } else {
      tree.nodes[f.parent].right = id;
    }
  }
  return subtree_root;
}

}  // namespace detail

// Samples a Mondrian process on `box` run until `lifetime`. Recursion: the
// box's cut clock rings after Exp(linear dimension); if that exceeds the
// remaining lifetime the cell stays a leaf, otherwise a cut dimension is
// chosen proportional to side length and a location uniformly within it.
inline MondrianTree sample_tree(const AxisAlignedBox& box, double lifetime,
                                std::uint64_t seed) {
  if (!(lifetime >= 0.0))
    throw std::invalid_argument("sample_tree: lifetime must be >= 0");
  MondrianTree tree;
  tree.root_box = box;
  tree.terminal_lifetime = lifetime;
  tree.seed = seed;
  Rng rng(seed);
  tree.root = detail::sample_subtree(tree, rng, box.lower, box.upper, 0.0);
  return tree;
}

// Extends a Mondrian sample from its root box to `outer_box` (conditional
// Mondrian). At each node with cell A inside outer region X, an extra clock
// with rate |X|-|A| competes against the node's recorded cut; if it rings
// first, an outside cut is inserted (location uniform on X_d \ A_d), the
// existing subtree is kept on the side containing A and a fresh Mondrian
// grows on the other side. Node ids of the input tree are preserved.
inline MondrianTree extend_tree(const MondrianTree& tree, const AxisAlignedBox& outer_box,
                                std::uint64_t seed) {
  if (!outer_box.contains(tree.root_box))
    throw std::invalid_argument("extend_tree: outer box does not contain the tree's root box");
  MondrianTree out = tree;
  if (out.root == kNoChild) {
    out.root_box = outer_box;
    return out;
  }
  Rng rng(seed);
  const double lifetime = out.terminal_lifetime;
  const int dim = out.root_box.dim();
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<double> weights(dim);

  // Returns the id of the (possibly new) subtree root covering `outer`.
  std::function<int(int, Eigen::VectorXd, Eigen::VectorXd, Eigen::VectorXd, Eigen::VectorXd, double)>
      extend = [&](int node, Eigen::VectorXd in_lo, Eigen::VectorXd in_hi,
                   Eigen::VectorXd out_lo, Eigen::VectorXd out_hi, double birth) -> int {
    int top = kNoChild;
    int hook_node = kNoChild;  // pending (node, side) to receive the next link
    bool hook_left = false;
    auto attach = [&](int child) {
      if (hook_node == kNoChild) {
        top = child;
      } else if (hook_left) {
        out.nodes[hook_node].left = child;
      } else {
        out.nodes[hook_node].right = child;
      }
    };
    double t = birth;
    for (;;) {
      double rate = 0.0;
      for (int d = 0; d < dim; ++d) {
        weights[d] = (out_hi[d] - out_lo[d]) - (in_hi[d] - in_lo[d]);
        rate += weights[d];
      }
      const TreeNode& cur = out.nodes[node];
      double existing = cur.is_leaf() ? inf : cur.time;
      double bound = std::min(existing, lifetime);
      double outside = rate > 0.0 ? t + rng.exponential(rate) : inf;
      if (outside < bound) {
        int d = rng.categorical(weights, rate);
        double seg_lo = in_lo[d] - out_lo[d];
        double seg_hi = out_hi[d] - in_hi[d];
        double a = std::numeric_limits<double>::quiet_NaN();
        for (int attempt = 0; attempt < 128; ++attempt) {
          double u = rng.uniform(0.0, seg_lo + seg_hi);
          double cand = u < seg_lo ? out_lo[d] + u : in_hi[d] + (u - seg_lo);
          bool in_lower = cand > out_lo[d] && cand < in_lo[d];
          bool in_upper = cand > in_hi[d] && cand < out_hi[d];
          if (in_lower || in_upper) {
            a = cand;
            break;
          }
        }
        if (std::isnan(a))
          a = seg_lo >= seg_hi ? std::midpoint(out_lo[d], in_lo[d])
                               : std::midpoint(in_hi[d], out_hi[d]);
        int id = out.node_count();
        out.nodes.push_back({outside, d, a, kNoChild, kNoChild});
        attach(id);
        if (a < in_lo[d]) {
          // fresh growth on the left, existing cell continues on the right
          Eigen::VectorXd fresh_hi = out_hi;
          fresh_hi[d] = a;
          int fresh = detail::sample_subtree(out, rng, out_lo, fresh_hi, outside);
          out.nodes[id].left = fresh;
          hook_node = id;
          hook_left = false;
          out_lo[d] = a;
        } else {
          Eigen::VectorXd fresh_lo = out_lo;
          fresh_lo[d] = a;
          int fresh = detail::sample_subtree(out, rng, fresh_lo, out_hi, outside);
          out.nodes[id].right = fresh;
          hook_node = id;
          hook_left = true;
          out_hi[d] = a;
        }
        t = outside;
        continue;
      }
      if (cur.is_leaf()) {
        attach(node);
        return top;
      }
      // keep the existing cut; recurse into both children with enlarged outers
      int d0 = cur.cut_dim;
      double a0 = cur.cut_location;
      double cut_time = cur.time;
      int old_left = cur.left;
      int old_right = cur.right;
      Eigen::VectorXd in_lo_r = in_lo, in_hi_l = in_hi;
      Eigen::VectorXd out_lo_r = out_lo, out_hi_l = out_hi;
      in_hi_l[d0] = a0;
      out_hi_l[d0] = a0;
      in_lo_r[d0] = a0;
      out_lo_r[d0] = a0;
      int new_left = extend(old_left, in_lo, in_hi_l, out_lo, out_hi_l, cut_time);
      int new_right = extend(old_right, in_lo_r, in_hi, out_lo_r, out_hi, cut_time);
      out.nodes[node].left = new_left;
      out.nodes[node].right = new_right;
      attach(node);
      return top;
    }
  };

  out.root = extend(out.root, tree.root_box.lower, tree.root_box.upper,
                    outer_box.lower, outer_box.upper, 0.0);
  out.root_box = outer_box;
  return out;
}

// Id of the partition cell containing x at the given lifetime. Points exactly
// on a cut hyperplane route to the left (<) child.
inline int cell_lookup(const MondrianTree& tree, const Eigen::Ref<const Eigen::VectorXd>& x,
                       double lifetime) {
  if (!(lifetime <= tree.terminal_lifetime))
    throw std::invalid_argument("cell_lookup: lifetime exceeds the tree's terminal lifetime");
  if (!tree.root_box.contains(x))
    throw extension_required("cell_lookup: point outside the sampled domain");
  int id = tree.root;
  while (!tree.nodes[id].is_leaf() && tree.nodes[id].time <= lifetime) {
    const TreeNode& n = tree.nodes[id];
    id = x[n.cut_dim] <= n.cut_location ? n.left : n.right;
  }
  return id;
}

struct MondrianForest {
  std::vector<MondrianTree> trees;
  int size() const { return static_cast<int>(trees.size()); }
};

// M independent trees with per-tree seeds derived from `master_seed`; streams
// are independent, so trees could equally be sampled in parallel.
inline MondrianForest sample_forest(const AxisAlignedBox& box, int tree_count, double lifetime,
                                    std::uint64_t master_seed) {
  if (tree_count < 1) throw std::invalid_argument("sample_forest: tree_count must be >= 1");
  MondrianForest forest;
  forest.trees.reserve(tree_count);
  for (int m = 0; m < tree_count; ++m)
    forest.trees.push_back(sample_tree(box, lifetime, derive_seed(master_seed, m)));
  return forest;
}

// A cut appearing at `time` in tree `tree_index`, splitting the cell `parent`
// into `left` and `right`.
struct CutEvent {
  double time = 0.0;
  int tree_index = -1;
  int parent = kNoChild;
  int left = kNoChild;
  int right = kNoChild;
};

// Merged, globally time-ordered stream of all cuts appearing up to
// lambda_max across the forest. Ties break by (tree_index, parent).
inline std::vector<CutEvent> cut_events(std::span<const MondrianTree> trees, double lambda_max) {
  std::vector<CutEvent> events;
  for (std::size_t m = 0; m < trees.size(); ++m) {
    const MondrianTree& tree = trees[m];
    if (tree.terminal_lifetime < lambda_max)
      throw std::invalid_argument("cut_events: tree sampled to a lifetime below lambda_max");
    for (int id = 0; id < tree.node_count(); ++id) {
      const TreeNode& n = tree.nodes[id];
      if (!n.is_leaf() && n.time <= lambda_max)
        events.push_back({n.time, static_cast<int>(m), id, n.left, n.right});
    }
  }
  std::sort(events.begin(), events.end(), [](const CutEvent& a, const CutEvent& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.tree_index != b.tree_index) return a.tree_index < b.tree_index;
    return a.parent < b.parent;
  });
  return events;
}

inline std::vector<CutEvent> cut_events(const MondrianForest& forest, double lambda_max) {
  return cut_events(std::span<const MondrianTree>(forest.trees), lambda_max);
}

// --- serialization -------------------------------------------------------
// Versioned JSON: root box plus the pre-order node list, internal nodes as
// [time, dim, location] triples and leaves as null.

inline nlohmann::json to_json(const MondrianTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  if (tree.root != kNoChild) {
    std::vector<int> stack{tree.root};
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      const TreeNode& n = tree.nodes[id];
      if (n.is_leaf()) {
        nodes.push_back(nullptr);
      } else {
        nodes.push_back({n.time, n.cut_dim, n.cut_location});
        stack.push_back(n.right);
        stack.push_back(n.left);
      }
    }
  }
  return {
      {"format", "mondrian_tree"},
      {"version", 1},
      {"terminal_lifetime", tree.terminal_lifetime},
      {"seed", tree.seed},
      {"root_box",
       {{"lower", std::vector<double>(tree.root_box.lower.begin(), tree.root_box.lower.end())},
        {"upper", std::vector<double>(tree.root_box.upper.begin(), tree.root_box.upper.end())}}},
      {"nodes", nodes},
  };
}

inline std::string serialize_tree(const MondrianTree& tree) { return to_json(tree).dump(); }

inline MondrianTree tree_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != std::string("mondrian_tree") || j.value("version", 0) != 1)
    throw std::invalid_argument("tree_from_json: unrecognized format/version");
  MondrianTree tree;
  tree.terminal_lifetime = j.at("terminal_lifetime").get<double>();
  tree.seed = j.at("seed").get<std::uint64_t>();
  std::vector<double> lo = j.at("root_box").at("lower").get<std::vector<double>>();
  std::vector<double> hi = j.at("root_box").at("upper").get<std::vector<double>>();
  tree.root_box = AxisAlignedBox(Eigen::Map<Eigen::VectorXd>(lo.data(), lo.size()),
                                 Eigen::Map<Eigen::VectorXd>(hi.data(), hi.size()));
  const nlohmann::json& nodes = j.at("nodes");
  std::size_t cursor = 0;
  std::function<int(double)> read = [&](double birth) -> int {
    if (cursor >= nodes.size()) throw std::invalid_argument("tree_from_json: truncated node list");
    const nlohmann::json& entry = nodes[cursor++];
    int id = tree.node_count();
    if (entry.is_null()) {
      tree.nodes.push_back({birth, -1, 0.0, kNoChild, kNoChild});
      return id;
    }
    double time = entry.at(0).get<double>();
    int dim = entry.at(1).get<int>();
    double loc = entry.at(2).get<double>();
    tree.nodes.push_back({time, dim, loc, kNoChild, kNoChild});
    int left = read(time);
    int right = read(time);
    tree.nodes[id].left = left;
    tree.nodes[id].right = right;
    return id;
  };
  if (!nodes.empty()) tree.root = read(0.0);
  if (cursor != nodes.size()) throw std::invalid_argument("tree_from_json: trailing node entries");
  return tree;
}

inline MondrianTree deserialize_tree(const std::string& text) {
  return tree_from_json(nlohmann::json::parse(text));
}

}  // namespace mondrian
