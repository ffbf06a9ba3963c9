#pragma once

// Fill-reducing symmetric orderings: greedy minimum degree and recursive
// nested dissection, plus the separator tree that schedules the tree-parallel
// factorization and selected inversion.

#include <string>
#include <vector>

#include "pinla/common.hpp"

namespace pinla {

// Undirected graph of the off-diagonal structure of a symmetric matrix, in
// compressed (CSR) form. Neighbor lists are sorted and contain no self-loops.
struct AdjacencyGraph {
  Index n = 0;
  std::vector<Index> offsets{0};
  std::vector<Index> neighbors;

  Index degree(Index v) const { return offsets[v + 1] - offsets[v]; }
  Index num_edges() const { return static_cast<Index>(neighbors.size()) / 2; }

  template <typename F>
  void for_each_neighbor(Index v, F&& f) const {
    for (Index p = offsets[v]; p < offsets[v + 1]; ++p) f(neighbors[p]);
  }

  // Builds from an undirected edge list; duplicates and self-loops are dropped.
  static AdjacencyGraph from_edges(Index n, const std::vector<std::pair<Index, Index>>& edges);

  // Builds from lower-triangular CSC structure. Every column must start with
  // its diagonal entry; entries above the diagonal are rejected.
  static AdjacencyGraph from_lower_pattern(Index n, const std::vector<Index>& col_ptr,
                                           const std::vector<Index>& row_idx);

  // Throws StructuralError unless the invariants hold.
  void validate() const;
};

// perm maps new index -> old index, iperm old -> new.
struct Permutation {
  std::vector<Index> perm;
  std::vector<Index> iperm;

  Index size() const { return static_cast<Index>(perm.size()); }

  static Permutation identity(Index n);
  // Validates that `new_to_old` is a bijection on {0..n-1}.
  static Permutation from_new_to_old(std::vector<Index> new_to_old);
};

enum class SeparatorKind { LeafBlock, Separator };

// Node of the nested-dissection recursion. A node owns the permuted columns
// [sep_begin, end); its subtree covers [begin, end). For a separator node the
// left child covers [begin, mid) and the right child [mid, sep_begin).
struct SeparatorNode {
  Index begin = 0;
  Index sep_begin = 0;
  Index end = 0;
  int left = -1;
  int right = -1;
  int parent = -1;
  SeparatorKind kind = SeparatorKind::LeafBlock;

  bool is_leaf() const { return left < 0; }
  Index own_size() const { return end - sep_begin; }
  Index subtree_size() const { return end - begin; }
};

struct SeparatorTree {
  std::vector<SeparatorNode> nodes;
  int root = -1;

  // One leaf block covering every column.
  static SeparatorTree single_leaf(Index n);

  int depth() const;
  Index num_leaves() const;
  // Throws StructuralError if ranges overlap, leave gaps or are misordered.
  void validate(Index n) const;
};

// Elimination order: at each step a vertex of minimum current degree in the
// elimination graph; ties go to the vertex with the smaller degree in the
// input graph, then to the smaller index.
Permutation minimum_degree_order(const AdjacencyGraph& graph);

struct NestedDissectionOptions {
  Index leaf_cutoff = 64;
  // Vertices with degree above max(dense_min, dense_factor * sqrt(n)) are
  // pulled out before partitioning and ordered in the root separator.
  Index dense_min = 16;
  double dense_factor = 10.0;
};

struct NestedDissection {
  Permutation permutation;
  SeparatorTree tree;
};

NestedDissection nested_dissection_order(const AdjacencyGraph& graph,
                                         const NestedDissectionOptions& options = {});

// Number of nonzeros (diagonal included) in the Cholesky factor of the
// matrix with `graph` as off-diagonal structure, under `order`.
Index symbolic_factor_nnz(const AdjacencyGraph& graph, const Permutation& order);

std::string to_json_array(const std::vector<Index>& values);

}  // namespace pinla
