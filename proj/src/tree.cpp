#include "treelcm/tree.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>

#include "treelcm/error.hpp"

namespace treelcm {

namespace {

constexpr double kLeafDepthTolerance = 1e-9;

[[noreturn]] void invalid(const std::string& what) { throw Error("invalid_tree", what); }

// Renumbers the nodes reachable from `root` in preorder. `index` maps old ids
// to new ids (-1 for unreachable nodes).
DdtTree compact(const std::vector<TreeNode>& nodes, int root, std::vector<int>& index) {
  index.assign(nodes.size(), -1);
  std::vector<int> order;
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    index[v] = static_cast<int>(order.size());
    order.push_back(v);
    if (!nodes[v].is_leaf()) {
      stack.push_back(nodes[v].children[1]);
      stack.push_back(nodes[v].children[0]);
    }
  }
  std::vector<TreeNode> out(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const TreeNode& src = nodes[order[i]];
    TreeNode& dst = out[i];
    dst.time = src.time;
    dst.label = src.label;
    dst.parent = (order[i] == root) ? -1 : index[src.parent];
    if (!src.is_leaf()) dst.children = {index[src.children[0]], index[src.children[1]]};
  }
  return DdtTree(std::move(out), 0);
}

std::vector<std::string> min_leaf_labels(const DdtTree& tree) {
  std::vector<std::string> best(tree.size());
  for (int v : tree.postorder()) {
    if (tree.is_leaf(v)) {
      best[v] = tree.label(v);
    } else {
      const auto& ch = tree.node(v).children;
      best[v] = natural_less(best[ch[1]], best[ch[0]]) ? best[ch[1]] : best[ch[0]];
    }
  }
  return best;
}

// Children of every node in canonical order.
std::vector<std::array<int, 2>> canonical_children(const DdtTree& tree) {
  const auto keys = min_leaf_labels(tree);
  std::vector<std::array<int, 2>> out(tree.size(), {-1, -1});
  for (int v = 0; v < tree.size(); ++v) {
    if (tree.is_leaf(v)) continue;
    auto ch = tree.node(v).children;
    if (natural_less(keys[ch[1]], keys[ch[0]])) std::swap(ch[0], ch[1]);
    out[v] = ch;
  }
  return out;
}

bool trees_match(const DdtTree& a, const DdtTree& b, double tol) {
  if (a.size() != b.size() || a.leaf_count() != b.leaf_count()) return false;
  const auto ca = canonical_children(a);
  const auto cb = canonical_children(b);
  std::vector<std::pair<int, int>> stack{{a.root(), b.root()}};
  while (!stack.empty()) {
    auto [u, v] = stack.back();
    stack.pop_back();
    if (a.is_leaf(u) != b.is_leaf(v)) return false;
    if (std::abs(a.time(u) - b.time(v)) > tol) return false;
    if (a.is_leaf(u)) {
      if (a.label(u) != b.label(v)) return false;
      continue;
    }
    stack.emplace_back(ca[u][0], cb[v][0]);
    stack.emplace_back(ca[u][1], cb[v][1]);
  }
  return true;
}

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  DdtTree parse() {
    const int root = parse_subtree();
    skip_space();
    double root_length = 0.0;
    if (peek() == ':') {
      ++pos_;
      root_length = parse_length();
    }
    skip_space();
    expect(';');
    skip_space();
    if (pos_ != text_.size()) fail("unexpected text after ';'");
    if (nodes_[root].is_leaf()) fail("tree must have at least two leaves");

    // Cumulative path sums; preorder guarantees parents are set first.
    std::vector<int> stack{root};
    nodes_[root].time = root_length;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (nodes_[v].is_leaf()) continue;
      for (int c : nodes_[v].children) {
        nodes_[c].time = nodes_[v].time + lengths_[c];
        stack.push_back(c);
      }
    }
    for (auto& n : nodes_) {
      if (!n.is_leaf()) continue;
      if (std::abs(n.time - 1.0) > kLeafDepthTolerance) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "leaf '%s' has depth %.12g; all leaf depths must equal 1",
                      n.label.c_str(), n.time);
        throw Error("invalid_tree", buf);
      }
      n.time = 1.0;
    }
    std::vector<int> index;
    return compact(nodes_, root, index);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error("newick_syntax", what + " at position " + std::to_string(pos_));
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_space() {
    for (;;) {
      while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (peek() != '[') return;
      const auto close = text_.find(']', pos_);
      if (close == std::string_view::npos) fail("unterminated comment");
      pos_ = close + 1;
    }
  }

  void expect(char c) {
    skip_space();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string parse_label() {
    skip_space();
    std::string out;
    if (peek() == '\'') {
      ++pos_;
      for (;;) {
        if (pos_ >= text_.size()) fail("unterminated quoted label");
        if (text_[pos_] == '\'') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
            out.push_back('\'');
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        out.push_back(text_[pos_++]);
      }
      return out;
    }
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' ||
          std::isspace(static_cast<unsigned char>(c))) {
        break;
      }
      out.push_back(c);
      ++pos_;
    }
    return out;
  }

  double parse_length() {
    skip_space();
    const std::string rest(text_.substr(pos_, 64));
    char* end = nullptr;
    const double value = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) fail("expected branch length");
    if (!std::isfinite(value)) fail("branch length is not finite");
    if (value < 0.0) throw Error("invalid_tree", "negative branch length at position " + std::to_string(pos_));
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return value;
  }

  int parse_subtree() {
    skip_space();
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    lengths_.push_back(0.0);
    if (peek() == '(') {
      const std::size_t open = pos_;
      ++pos_;
      std::vector<int> kids;
      for (;;) {
        const int child = parse_subtree();
        skip_space();
        if (peek() != ':') fail("missing branch length");
        ++pos_;
        lengths_[child] = parse_length();
        kids.push_back(child);
        skip_space();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ')') {
          ++pos_;
          break;
        }
        fail("expected ',' or ')'");
      }
      if (kids.size() != 2) {
        throw Error("newick_syntax", "non-binary node with " + std::to_string(kids.size()) +
                                         " children at position " + std::to_string(open));
      }
      nodes_[id].children = {kids[0], kids[1]};
      nodes_[kids[0]].parent = id;
      nodes_[kids[1]].parent = id;
      parse_label();  // internal labels are accepted and dropped
    } else {
      nodes_[id].label = parse_label();
      if (nodes_[id].label.empty()) fail("expected leaf label");
    }
    return id;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<TreeNode> nodes_;
  std::vector<double> lengths_;
};

}  // namespace

DdtTree::DdtTree(std::vector<TreeNode> nodes, int root) : nodes_(std::move(nodes)), root_(root) {
  const int n = size();
  if (root_ < 0 || root_ >= n) invalid("root index out of range");
  if (nodes_[root_].parent != -1) invalid("root has a parent");
  if (nodes_[root_].time < 0.0) invalid("root time is negative");

  std::vector<int> seen(n, 0);
  std::set<std::string> labels;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (seen[v]++) invalid("node reached twice");
    const TreeNode& node = nodes_[v];
    if (!std::isfinite(node.time)) invalid("non-finite time");
    const bool leftmost_leaf = node.children[0] < 0;
    if (leftmost_leaf != (node.children[1] < 0)) invalid("internal node without exactly two children");
    if (leftmost_leaf) {
      if (node.time != 1.0) invalid("leaf '" + node.label + "' not at time 1");
      if (node.label.empty()) invalid("unlabeled leaf");
      if (!labels.insert(node.label).second) invalid("duplicate leaf label '" + node.label + "'");
      ++leaf_count_;
      continue;
    }
    if (!(node.time < 1.0)) invalid("internal node at time >= 1");
    for (int c : node.children) {
      if (c < 0 || c >= n) invalid("child index out of range");
      if (nodes_[c].parent != v) invalid("inconsistent parent link");
      if (!(nodes_[c].time > node.time)) invalid("times must strictly increase from root to leaves");
      stack.push_back(c);
    }
  }
  for (int v = 0; v < n; ++v)
    if (!seen[v]) invalid("unreachable node");
}

int DdtTree::sibling(int id) const {
  const int p = parent(id);
  if (p < 0) return -1;
  const auto& ch = nodes_[p].children;
  return ch[0] == id ? ch[1] : ch[0];
}

double DdtTree::branch_length(int id) const {
  const int p = parent(id);
  return time(id) - (p < 0 ? 0.0 : time(p));
}

std::vector<int> DdtTree::preorder() const {
  std::vector<int> out;
  out.reserve(nodes_.size());
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    out.push_back(v);
    if (!is_leaf(v)) {
      stack.push_back(nodes_[v].children[1]);
      stack.push_back(nodes_[v].children[0]);
    }
  }
  return out;
}

std::vector<int> DdtTree::postorder() const {
  auto order = preorder();
  // Reversed preorder visits children before parents.
  std::reverse(order.begin(), order.end());
  return order;
}

std::vector<int> DdtTree::leaves() const {
  std::vector<int> out;
  for (int v : preorder())
    if (is_leaf(v)) out.push_back(v);
  return out;
}

std::vector<int> DdtTree::class_leaves() const {
  auto out = leaves();
  std::sort(out.begin(), out.end(), [&](int a, int b) { return natural_less(label(a), label(b)); });
  return out;
}

std::vector<int> DdtTree::internal_nodes() const {
  std::vector<int> out;
  for (int v : preorder())
    if (!is_leaf(v)) out.push_back(v);
  return out;
}

std::vector<int> DdtTree::leaf_counts() const {
  std::vector<int> counts(nodes_.size(), 0);
  for (int v : postorder()) {
    counts[v] = is_leaf(v) ? 1 : counts[nodes_[v].children[0]] + counts[nodes_[v].children[1]];
  }
  return counts;
}

int DdtTree::find_leaf(std::string_view name) const {
  for (int v = 0; v < size(); ++v)
    if (is_leaf(v) && nodes_[v].label == name) return v;
  throw Error("unknown_leaf", "no leaf labeled '" + std::string(name) + "'");
}

int DdtTree::mrca(int a, int b) const {
  std::vector<char> on_path(nodes_.size(), 0);
  for (int v = a; v >= 0; v = parent(v)) on_path[v] = 1;
  for (int v = b; v >= 0; v = parent(v))
    if (on_path[v]) return v;
  return root_;
}

DdtTree DdtTree::with_time(int id, double t) const {
  auto copy = nodes_;
  copy.at(id).time = t;
  return DdtTree(std::move(copy), root_);
}

DdtTree DdtTree::relabeled(const std::vector<std::string>& from, const std::vector<std::string>& to) const {
  auto copy = nodes_;
  for (auto& n : copy) {
    if (!n.is_leaf()) continue;
    const auto it = std::find(from.begin(), from.end(), n.label);
    if (it != from.end()) n.label = to.at(static_cast<std::size_t>(it - from.begin()));
  }
  return DdtTree(std::move(copy), root_);
}

bool operator==(const DdtTree& a, const DdtTree& b) { return trees_match(a, b, 0.0); }

bool approx_equal(const DdtTree& a, const DdtTree& b, double tol) { return trees_match(a, b, tol); }

bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    const bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      std::size_t ie = i;
      std::size_t je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      auto na = a.substr(i, ie - i);
      auto nb = b.substr(j, je - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
      continue;
    }
    if (a[i] != b[j]) return a[i] < b[j];
    ++i;
    ++j;
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

DdtTree parse_newick(std::string_view text) { return NewickParser(text).parse(); }

std::string format_length(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

std::string to_newick(const DdtTree& tree) {
  const auto order = canonical_children(tree);
  std::string out;
  std::function<void(int)> emit = [&](int v) {
    if (tree.is_leaf(v)) {
      out += tree.label(v);
    } else {
      out += '(';
      emit(order[v][0]);
      out += ',';
      emit(order[v][1]);
      out += ')';
    }
    out += ':';
    out += format_length(tree.branch_length(v));
  };
  emit(tree.root());
  out += ';';
  return out;
}

SubtreeDetachment detach_subtree(const DdtTree& tree, int node) {
  if (node < 0 || node >= tree.size()) throw Error("invalid_argument", "node index out of range");
  if (node == tree.root()) throw Error("invalid_argument", "cannot detach the root");
  if (tree.leaf_count() < 3) throw Error("invalid_argument", "detaching requires at least 3 leaves");

  const int p = tree.parent(node);
  const int s = tree.sibling(node);
  std::vector<TreeNode> work = tree.nodes();
  int new_root = tree.root();
  if (p == tree.root()) {
    new_root = s;
    work[s].parent = -1;
  } else {
    const int g = tree.parent(p);
    auto& ch = work[g].children;
    (ch[0] == p ? ch[0] : ch[1]) = s;
    work[s].parent = g;
  }

  SubtreeDetachment out;
  out.time = tree.time(p);
  out.remnant = compact(work, new_root, out.remnant_index);
  out.edge = out.remnant_index[s];

  work = tree.nodes();
  work[node].parent = -1;
  out.subtree = compact(work, node, out.subtree_index);
  return out;
}

Attachment attach(const DdtTree& remnant, const DdtTree& subtree, int edge, double time) {
  if (edge < 0 || edge >= remnant.size()) throw Error("invalid_argument", "edge index out of range");
  const int above = remnant.parent(edge);
  const double lo = above < 0 ? 0.0 : remnant.time(above);
  const double hi = remnant.time(edge);
  const bool inside = (above < 0 ? time >= lo : time > lo) && time < hi;
  if (!inside) throw Error("invalid_argument", "attachment time outside the chosen edge");
  if (!(time < subtree.time(subtree.root())))
    throw Error("invalid_argument", "attachment time must precede the subtree's first divergence");

  const int offset = remnant.size();
  std::vector<TreeNode> work = remnant.nodes();
  for (TreeNode n : subtree.nodes()) {
    if (n.parent >= 0) n.parent += offset;
    if (!n.is_leaf()) {
      n.children[0] += offset;
      n.children[1] += offset;
    }
    work.push_back(std::move(n));
  }
  const int joint = static_cast<int>(work.size());
  TreeNode j;
  j.time = time;
  j.parent = above;
  j.children = {edge, subtree.root() + offset};
  work.push_back(j);
  work[edge].parent = joint;
  work[subtree.root() + offset].parent = joint;
  int new_root = remnant.root();
  if (above < 0) {
    new_root = joint;
  } else {
    auto& ch = work[above].children;
    (ch[0] == edge ? ch[0] : ch[1]) = joint;
  }

  std::vector<int> index;
  Attachment out;
  out.tree = compact(work, new_root, index);
  out.from_remnant.assign(index.begin(), index.begin() + offset);
  out.from_subtree.assign(index.begin() + offset, index.begin() + offset + subtree.size());
  out.joint = index[joint];
  return out;
}

DdtTree attach_subtree(const DdtTree& remnant, const DdtTree& subtree, int edge, double time) {
  return attach(remnant, subtree, edge, time).tree;
}

double path_shared_length(const DdtTree& tree, std::string_view leaf_a, std::string_view leaf_b) {
  const int a = tree.find_leaf(leaf_a);
  const int b = tree.find_leaf(leaf_b);
  return tree.time(tree.mrca(a, b));
}

}  // namespace treelcm
