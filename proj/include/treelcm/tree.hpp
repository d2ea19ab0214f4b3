#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace treelcm {

struct TreeNode {
  int parent = -1;
  std::array<int, 2> children{-1, -1};
  // Absolute divergence time in [0, 1]; leaves sit at exactly 1.
  double time = 0.0;
  // Leaves only.
  std::string label;

  bool is_leaf() const { return children[0] < 0; }
};

// Rooted binary tree with absolute divergence times.
//
// Time runs from an implicit origin at t = 0 (where the root location is
// pinned) to the leaves at t = 1. The top divergence node has no parent; the
// edge from the origin to it is the root edge, of length time(root()) >= 0.
// Every other edge has strictly positive length. Internally a single-leaf
// tree (origin -> leaf) is allowed so that subtree fragments are trees too.
class DdtTree {
 public:
  DdtTree() = default;
  // Nodes must form exactly one tree rooted at `root`; throws Error
  // ("invalid_tree") otherwise.
  DdtTree(std::vector<TreeNode> nodes, int root);

  int root() const { return root_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int leaf_count() const { return leaf_count_; }
  const TreeNode& node(int id) const { return nodes_.at(id); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  int parent(int id) const { return nodes_[id].parent; }
  double time(int id) const { return nodes_[id].time; }
  bool is_leaf(int id) const { return nodes_[id].is_leaf(); }
  const std::string& label(int id) const { return nodes_[id].label; }
  int sibling(int id) const;
  // t(v) - t(parent), with the origin standing in for the root's parent.
  double branch_length(int id) const;

  std::vector<int> preorder() const;
  std::vector<int> postorder() const;
  std::vector<int> leaves() const;
  // Leaves in natural label order ("v2" before "v10"); this is the class order.
  std::vector<int> class_leaves() const;
  std::vector<int> internal_nodes() const;
  // Number of leaves below each node.
  std::vector<int> leaf_counts() const;
  int find_leaf(std::string_view label) const;
  int mrca(int a, int b) const;

  DdtTree with_time(int id, double time) const;
  // Leaves named in `from` are renamed to the matching entry of `to`.
  DdtTree relabeled(const std::vector<std::string>& from, const std::vector<std::string>& to) const;

 private:
  std::vector<TreeNode> nodes_;
  int root_ = -1;
  int leaf_count_ = 0;
};

// Same shape, leaf labels and times (exactly, or within `tol`), regardless of
// node numbering or child order.
bool operator==(const DdtTree& a, const DdtTree& b);
bool approx_equal(const DdtTree& a, const DdtTree& b, double tol);

bool natural_less(std::string_view a, std::string_view b);

// Parses a rooted binary Newick tree with branch lengths. Node times are the
// cumulative path lengths (the root branch length, default 0, is the root
// edge). Leaf depths must equal 1 within 1e-9 and are then snapped to 1.
DdtTree parse_newick(std::string_view text);
// Canonical form: children ordered by smallest descendant leaf label, lengths
// with 10 significant digits, root edge always written.
std::string to_newick(const DdtTree& tree);
std::string format_length(double value);

// Result of pruning the subtree below a non-root node. The dissolved parent's
// two incident edges are merged in the remnant.
struct SubtreeDetachment {
  DdtTree remnant;
  DdtTree subtree;
  // Remnant node whose parent edge carried the attachment.
  int edge = -1;
  // Time of the dissolved parent.
  double time = 0.0;
  // Original node id -> id in remnant / subtree, -1 where absent.
  std::vector<int> remnant_index;
  std::vector<int> subtree_index;
};

struct Attachment {
  DdtTree tree;
  std::vector<int> from_remnant;
  std::vector<int> from_subtree;
  // The newly created divergence node.
  int joint = -1;
};

SubtreeDetachment detach_subtree(const DdtTree& tree, int node);
// `time` must lie strictly inside the edge above `edge` (the root edge may
// start at the origin itself) and strictly before the subtree root's time.
Attachment attach(const DdtTree& remnant, const DdtTree& subtree, int edge, double time);
DdtTree attach_subtree(const DdtTree& remnant, const DdtTree& subtree, int edge, double time);

// Divergence time of the most recent common ancestor; 1 when a == b.
double path_shared_length(const DdtTree& tree, std::string_view leaf_a, std::string_view leaf_b);

}  // namespace treelcm
