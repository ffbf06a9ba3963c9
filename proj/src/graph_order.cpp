#include "pinla/graph_order.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace pinla {

AdjacencyGraph AdjacencyGraph::from_edges(Index n, const std::vector<std::pair<Index, Index>>& edges) {
  std::vector<std::vector<Index>> lists(static_cast<std::size_t>(n));
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) throw StructuralError("edge endpoint out of range");
    if (a == b) continue;
    lists[a].push_back(b);
    lists[b].push_back(a);
  }
  AdjacencyGraph g;
  g.n = n;
  g.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index v = 0; v < n; ++v) {
    auto& l = lists[v];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    g.offsets[v + 1] = g.offsets[v] + static_cast<Index>(l.size());
  }
  g.neighbors.reserve(static_cast<std::size_t>(g.offsets[n]));
  for (auto& l : lists) g.neighbors.insert(g.neighbors.end(), l.begin(), l.end());
  return g;
}

AdjacencyGraph AdjacencyGraph::from_lower_pattern(Index n, const std::vector<Index>& col_ptr,
                                                  const std::vector<Index>& row_idx) {
  if (static_cast<Index>(col_ptr.size()) != n + 1) throw StructuralError("column pointer length mismatch");
  std::vector<Index> count(static_cast<std::size_t>(n), 0);
  for (Index j = 0; j < n; ++j) {
    if (col_ptr[j] == col_ptr[j + 1] || row_idx[col_ptr[j]] != j)
      throw StructuralError("missing diagonal entry in column " + std::to_string(j));
    for (Index p = col_ptr[j] + 1; p < col_ptr[j + 1]; ++p) {
      const Index i = row_idx[p];
      if (i <= j || i >= n) throw StructuralError("entry (" + std::to_string(i) + "," + std::to_string(j) +
                                                   ") is not strictly lower / sorted");
      ++count[i];
      ++count[j];
    }
  }
  AdjacencyGraph g;
  g.n = n;
  g.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index v = 0; v < n; ++v) g.offsets[v + 1] = g.offsets[v] + count[v];
  g.neighbors.assign(static_cast<std::size_t>(g.offsets[n]), 0);
  std::vector<Index> next(g.offsets.begin(), g.offsets.end() - 1);
  // Column order visits the neighbors of each vertex in ascending order: for
  // vertex v, first the columns j < v (as a row), then its own rows i > v.
  for (Index j = 0; j < n; ++j) {
    for (Index p = col_ptr[j] + 1; p < col_ptr[j + 1]; ++p) {
      const Index i = row_idx[p];
      g.neighbors[next[i]++] = j;
    }
    for (Index p = col_ptr[j] + 1; p < col_ptr[j + 1]; ++p) g.neighbors[next[j]++] = row_idx[p];
  }
  return g;
}

void AdjacencyGraph::validate() const {
  if (static_cast<Index>(offsets.size()) != n + 1) throw StructuralError("offsets length mismatch");
  for (Index v = 0; v < n; ++v) {
    for (Index p = offsets[v]; p < offsets[v + 1]; ++p) {
      const Index u = neighbors[p];
      if (u == v) throw StructuralError("self-loop at " + std::to_string(v));
      if (p > offsets[v] && neighbors[p - 1] >= u) throw StructuralError("neighbor list not sorted");
      if (!std::binary_search(neighbors.begin() + offsets[u], neighbors.begin() + offsets[u + 1], v))
        throw StructuralError("graph not symmetric");
    }
  }
}

Permutation Permutation::identity(Index n) {
  Permutation p;
  p.perm.resize(static_cast<std::size_t>(n));
  std::iota(p.perm.begin(), p.perm.end(), Index{0});
  p.iperm = p.perm;
  return p;
}

Permutation Permutation::from_new_to_old(std::vector<Index> new_to_old) {
  const Index n = static_cast<Index>(new_to_old.size());
  Permutation p;
  p.iperm.assign(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    const Index old = new_to_old[i];
    if (old < 0 || old >= n || p.iperm[old] != -1) throw StructuralError("not a permutation");
    p.iperm[old] = i;
  }
  p.perm = std::move(new_to_old);
  return p;
}

SeparatorTree SeparatorTree::single_leaf(Index n) {
  SeparatorTree t;
  t.nodes.push_back(SeparatorNode{0, 0, n, -1, -1, -1, SeparatorKind::LeafBlock});
  t.root = 0;
  return t;
}

int SeparatorTree::depth() const {
  if (root < 0) return 0;
  int best = 0;
  std::vector<std::pair<int, int>> stack{{root, 1}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto& node = nodes[id];
    if (!node.is_leaf()) {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return best;
}

Index SeparatorTree::num_leaves() const {
  return std::count_if(nodes.begin(), nodes.end(), [](const SeparatorNode& s) { return s.is_leaf(); });
}

void SeparatorTree::validate(Index n) const {
  if (root < 0) throw StructuralError("separator tree has no root");
  const auto& r = nodes[root];
  if (r.begin != 0 || r.end != n) throw StructuralError("root does not cover all columns");
  std::vector<int> stack{root};
  Index visited_cols = 0;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const auto& node = nodes[id];
    if (!(node.begin <= node.sep_begin && node.sep_begin <= node.end))
      throw StructuralError("separator node with inverted range");
    visited_cols += node.own_size();
    if (node.is_leaf()) {
      if (node.right >= 0) throw StructuralError("node with a single child");
      continue;
    }
    const auto& a = nodes[node.left];
    const auto& b = nodes[node.right];
    if (a.begin != node.begin || a.end != b.begin || b.end != node.sep_begin)
      throw StructuralError("children ranges do not tile the parent subtree");
    if (a.parent != id || b.parent != id) throw StructuralError("broken parent link");
    stack.push_back(node.left);
    stack.push_back(node.right);
  }
  if (visited_cols != n) throw StructuralError("separator ranges do not cover all columns");
}

Permutation minimum_degree_order(const AdjacencyGraph& graph) {
  const Index n = graph.n;
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
  std::vector<Index> degree(static_cast<std::size_t>(n)), initial(static_cast<std::size_t>(n));
  for (Index v = 0; v < n; ++v) {
    adj[v].assign(graph.neighbors.begin() + graph.offsets[v], graph.neighbors.begin() + graph.offsets[v + 1]);
    degree[v] = initial[v] = static_cast<Index>(adj[v].size());
  }
  using Key = std::tuple<Index, Index, Index>;
  std::set<Key> queue;
  for (Index v = 0; v < n; ++v) queue.emplace(degree[v], initial[v], v);

  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(n));
  std::vector<Index> merged;
  while (!queue.empty()) {
    const Index v = std::get<2>(*queue.begin());
    queue.erase(queue.begin());
    order.push_back(v);
    const std::vector<Index> clique = std::move(adj[v]);
    adj[v].clear();
    for (Index u : clique) {
      queue.erase(Key{degree[u], initial[u], u});
      merged.clear();
      std::set_union(adj[u].begin(), adj[u].end(), clique.begin(), clique.end(), std::back_inserter(merged));
      std::erase_if(merged, [&](Index w) { return w == u || w == v; });
      adj[u].swap(merged);
      degree[u] = static_cast<Index>(adj[u].size());
      queue.emplace(degree[u], initial[u], u);
    }
  }
  return Permutation::from_new_to_old(std::move(order));
}

namespace {

class Dissector {
 public:
  Dissector(const AdjacencyGraph& g, const NestedDissectionOptions& opt)
      : g_(g), opt_(opt), stamp_(static_cast<std::size_t>(g.n), 0), label_(static_cast<std::size_t>(g.n), 0),
        level_(static_cast<std::size_t>(g.n), -1) {
    order_.reserve(static_cast<std::size_t>(g.n));
  }

  NestedDissection run() {
    const Index threshold =
        std::max<Index>(opt_.dense_min, static_cast<Index>(opt_.dense_factor * std::sqrt(double(g_.n))));
    std::vector<Index> sparse, dense;
    for (Index v = 0; v < g_.n; ++v) (g_.degree(v) > threshold ? dense : sparse).push_back(v);
    if (sparse.empty()) std::swap(sparse, dense);
    tree_.root = g_.n == 0 ? add_empty_leaf() : build(std::move(sparse), std::move(dense), -1);
    return NestedDissection{Permutation::from_new_to_old(std::move(order_)), std::move(tree_)};
  }

 private:
  int add_empty_leaf() {
    tree_.nodes.push_back(SeparatorNode{0, 0, 0, -1, -1, -1, SeparatorKind::LeafBlock});
    return 0;
  }

  void mark(const std::vector<Index>& verts) {
    ++current_;
    for (Index v : verts) stamp_[v] = current_;
  }
  bool marked(Index v) const { return stamp_[v] == current_; }

  int build(std::vector<Index> verts, std::vector<Index> extra, int parent) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(SeparatorNode{});
    const Index begin = static_cast<Index>(order_.size());

    int left = -1, right = -1;
    std::vector<Index> separator;
    if (static_cast<Index>(verts.size()) > opt_.leaf_cutoff) {
      auto components = connected_components(verts);
      if (components.size() >= 2) {
        auto [a, b] = split_components(components);
        left = build(std::move(a), {}, id);
        right = build(std::move(b), {}, id);
      } else {
        std::vector<Index> a, b;
        bisect(verts, a, b, separator);
        if (!a.empty() && !b.empty()) {
          left = build(std::move(a), {}, id);
          right = build(std::move(b), {}, id);
        } else {
          separator.clear();
        }
      }
    }

    SeparatorNode node;
    node.begin = begin;
    node.parent = parent;
    if (left < 0) {
      node.kind = SeparatorKind::LeafBlock;
      node.sep_begin = begin;
      append_min_degree(verts);
    } else {
      node.kind = SeparatorKind::Separator;
      node.left = left;
      node.right = right;
      node.sep_begin = static_cast<Index>(order_.size());
      std::sort(separator.begin(), separator.end());
      order_.insert(order_.end(), separator.begin(), separator.end());
    }
    std::sort(extra.begin(), extra.end());
    order_.insert(order_.end(), extra.begin(), extra.end());
    node.end = static_cast<Index>(order_.size());
    tree_.nodes[id] = node;
    return id;
  }

  void append_min_degree(const std::vector<Index>& verts) {
    mark(verts);
    for (std::size_t k = 0; k < verts.size(); ++k) label_[verts[k]] = static_cast<Index>(k);
    std::vector<std::pair<Index, Index>> edges;
    for (std::size_t k = 0; k < verts.size(); ++k) {
      g_.for_each_neighbor(verts[k], [&](Index u) {
        if (marked(u) && label_[u] > static_cast<Index>(k)) edges.emplace_back(static_cast<Index>(k), label_[u]);
      });
    }
    const auto sub = AdjacencyGraph::from_edges(static_cast<Index>(verts.size()), edges);
    const auto md = minimum_degree_order(sub);
    for (Index k : md.perm) order_.push_back(verts[k]);
  }

  // Components of the induced subgraph, each sorted, ordered by smallest vertex.
  std::vector<std::vector<Index>> connected_components(const std::vector<Index>& verts) {
    mark(verts);
    const int seen = ++current_;  // vertices move from the set stamp to `seen`
    const int in_set = seen - 1;
    std::vector<std::vector<Index>> out;
    std::vector<Index> queue;
    for (Index s : verts) {
      if (stamp_[s] != in_set) continue;
      std::vector<Index> comp;
      queue.assign(1, s);
      stamp_[s] = seen;
      for (std::size_t h = 0; h < queue.size(); ++h) {
        const Index v = queue[h];
        comp.push_back(v);
        g_.for_each_neighbor(v, [&](Index u) {
          if (stamp_[u] == in_set) {
            stamp_[u] = seen;
            queue.push_back(u);
          }
        });
      }
      std::sort(comp.begin(), comp.end());
      out.push_back(std::move(comp));
    }
    return out;
  }

  // Contiguous split of the component list at the most balanced point.
  static std::pair<std::vector<Index>, std::vector<Index>> split_components(
      const std::vector<std::vector<Index>>& comps) {
    Index total = 0;
    for (const auto& c : comps) total += static_cast<Index>(c.size());
    Index acc = 0, best_gap = total + 1;
    std::size_t cut = 1;
    for (std::size_t k = 0; k + 1 < comps.size(); ++k) {
      acc += static_cast<Index>(comps[k].size());
      const Index gap = std::abs(total - 2 * acc);
      if (gap < best_gap) {
        best_gap = gap;
        cut = k + 1;
      }
    }
    std::vector<Index> a, b;
    for (std::size_t k = 0; k < comps.size(); ++k) {
      auto& dst = k < cut ? a : b;
      dst.insert(dst.end(), comps[k].begin(), comps[k].end());
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return {std::move(a), std::move(b)};
  }

  // BFS level structure inside the current marked set. Returns the levels.
  std::vector<std::vector<Index>> level_structure(Index root) {
    std::vector<std::vector<Index>> levels;
    std::vector<Index> frontier{root};
    level_[root] = 0;
    touched_.assign(1, root);
    while (!frontier.empty()) {
      std::vector<Index> next;
      for (Index v : frontier) {
        g_.for_each_neighbor(v, [&](Index u) {
          if (marked(u) && level_[u] < 0) {
            level_[u] = static_cast<Index>(levels.size()) + 1;
            touched_.push_back(u);
            next.push_back(u);
          }
        });
      }
      std::sort(frontier.begin(), frontier.end());
      levels.push_back(std::move(frontier));
      frontier = std::move(next);
    }
    return levels;
  }

  void clear_levels() {
    for (Index v : touched_) level_[v] = -1;
    touched_.clear();
  }

  void bisect(const std::vector<Index>& verts, std::vector<Index>& a, std::vector<Index>& b,
              std::vector<Index>& sep) {
    mark(verts);
    auto in_degree = [&](Index v) {
      Index d = 0;
      g_.for_each_neighbor(v, [&](Index u) { d += marked(u) ? 1 : 0; });
      return d;
    };

    // Pseudo-peripheral root.
    Index root = verts.front();
    auto levels = level_structure(root);
    for (int round = 0; round < 8; ++round) {
      const auto& last = levels.back();
      Index candidate = last.front();
      for (Index v : last)
        if (in_degree(v) < in_degree(candidate)) candidate = v;
      clear_levels();
      auto trial = level_structure(candidate);
      if (trial.size() <= levels.size()) {
        clear_levels();
        levels = level_structure(root);
        break;
      }
      root = candidate;
      levels = std::move(trial);
    }

    const Index total = static_cast<Index>(verts.size());
    const Index h = static_cast<Index>(levels.size());
    if (h < 2) {
      clear_levels();
      return;
    }
    Index median = 0, cum = 0;
    for (; median < h; ++median) {
      cum += static_cast<Index>(levels[median].size());
      if (2 * cum >= total) break;
    }
    median = std::min(median, h - 2);

    auto touches_level = [&](Index v, Index lvl) {
      bool hit = false;
      g_.for_each_neighbor(v, [&](Index u) { hit = hit || (marked(u) && level_[u] == lvl); });
      return hit;
    };
    std::vector<Index> s1, s2;
    for (Index v : levels[median])
      if (touches_level(v, median + 1)) s1.push_back(v);
    for (Index v : levels[median + 1])
      if (touches_level(v, median)) s2.push_back(v);
    const bool upper = s2.size() < s1.size();
    const Index sep_level = upper ? median + 1 : median;

    // 1 = A, 2 = B, 3 = separator.
    for (Index v : verts) {
      const Index lvl = level_[v];
      if (lvl < sep_level) label_[v] = 1;
      else if (lvl > sep_level) label_[v] = 2;
      else label_[v] = upper ? 2 : 1;
    }
    for (Index v : upper ? s2 : s1) label_[v] = 3;
    clear_levels();

    Index size_a = 0, size_b = 0;
    for (Index v : verts) {
      size_a += label_[v] == 1;
      size_b += label_[v] == 2;
    }
    for (Index v : upper ? s2 : s1) {
      Index na = 0, nb = 0;
      g_.for_each_neighbor(v, [&](Index u) {
        if (!marked(u)) return;
        na += label_[u] == 1;
        nb += label_[u] == 2;
      });
      if (nb == 0 && (na > 0 || size_a <= size_b)) {
        label_[v] = 1;
        ++size_a;
      } else if (na == 0) {
        label_[v] = 2;
        ++size_b;
      }
    }
    for (Index v : verts) {
      if (label_[v] == 1) a.push_back(v);
      else if (label_[v] == 2) b.push_back(v);
      else sep.push_back(v);
    }
  }

  const AdjacencyGraph& g_;
  NestedDissectionOptions opt_;
  std::vector<int> stamp_;
  int current_ = 0;
  std::vector<Index> label_;
  std::vector<Index> level_;
  std::vector<Index> touched_;
  std::vector<Index> order_;
  SeparatorTree tree_;
};

}  // namespace

NestedDissection nested_dissection_order(const AdjacencyGraph& graph, const NestedDissectionOptions& options) {
  if (options.leaf_cutoff < 1) throw ConfigError("leaf_cutoff", "must be >= 1");
  Dissector d(graph, options);
  return d.run();
}

Index symbolic_factor_nnz(const AdjacencyGraph& graph, const Permutation& order) {
  const Index n = graph.n;
  std::vector<Index> parent(static_cast<std::size_t>(n), -1), ancestor(static_cast<std::size_t>(n), -1),
      flag(static_cast<std::size_t>(n), -1);
  // Elimination tree (Liu) on the permuted graph.
  for (Index k = 0; k < n; ++k) {
    graph.for_each_neighbor(order.perm[k], [&](Index old) {
      Index i = order.iperm[old];
      while (i != -1 && i < k) {
        const Index next = ancestor[i];
        ancestor[i] = k;
        if (next == -1) parent[i] = k;
        i = next;
      }
    });
  }
  Index nnz = n;
  for (Index k = 0; k < n; ++k) {
    flag[k] = k;
    graph.for_each_neighbor(order.perm[k], [&](Index old) {
      for (Index i = order.iperm[old]; i < k && flag[i] != k; i = parent[i]) {
        flag[i] = k;
        ++nnz;
      }
    });
  }
  return nnz;
}

std::string to_json_array(const std::vector<Index>& values) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  os << ']';
  return os.str();
}

}  // namespace pinla
