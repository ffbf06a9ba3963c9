#include "pinla/cholesky.hpp"

#include <sstream>

namespace pinla {

namespace {
std::atomic<long long> g_analyze_calls{0};
}

long long analyze_calls() { return g_analyze_calls.load(); }

Ordering parse_ordering(const std::string& name) {
  if (name == "natural") return Ordering::Natural;
  if (name == "mindegree" || name == "minimum-degree") return Ordering::MinimumDegree;
  if (name == "nd" || name == "nested-dissection") return Ordering::NestedDissection;
  throw ConfigError("ordering", "unknown ordering '" + name + "'");
}

std::string FactorStats::to_json() const {
  std::ostringstream os;
  os << "{\"n\":" << n << ",\"nnz_q\":" << nnz_q << ",\"nnz_l\":" << nnz_l << ",\"fill_ratio\":" << fill_ratio
     << ",\"tree_depth\":" << tree_depth << ",\"tree_nodes\":" << tree_nodes << ",\"tree_leaves\":" << tree_leaves
     << "}";
  return os.str();
}

FactorStats SymbolicFactor::stats() const {
  FactorStats st;
  st.n = n;
  st.nnz_q = nnz_q();
  st.nnz_l = nnz_l();
  st.fill_ratio = st.nnz_q > 0 ? double(st.nnz_l) / double(st.nnz_q) : 0.0;
  st.tree_depth = tree.depth();
  st.tree_nodes = static_cast<Index>(tree.nodes.size());
  st.tree_leaves = tree.num_leaves();
  return st;
}

std::shared_ptr<const SymbolicFactor> analyze_pattern(Index n, const std::vector<Index>& col_ptr,
                                                      const std::vector<Index>& row_idx,
                                                      const OrderingChoice& choice) {
  ++g_analyze_calls;
  const AdjacencyGraph graph = AdjacencyGraph::from_lower_pattern(n, col_ptr, row_idx);

  auto sym = std::make_shared<SymbolicFactor>();
  sym->n = n;
  sym->q_col_ptr = col_ptr;
  sym->q_row_idx = row_idx;
  switch (choice.method) {
    case Ordering::Natural:
      sym->permutation = Permutation::identity(n);
      sym->tree = SeparatorTree::single_leaf(n);
      break;
    case Ordering::MinimumDegree:
      sym->permutation = minimum_degree_order(graph);
      sym->tree = SeparatorTree::single_leaf(n);
      break;
    case Ordering::NestedDissection: {
      auto nd = nested_dissection_order(graph, choice.nested_dissection);
      sym->permutation = std::move(nd.permutation);
      sym->tree = std::move(nd.tree);
      break;
    }
  }
  const auto& iperm = sym->permutation.iperm;

  // Upper triangle of the permuted matrix, columns with ascending rows.
  auto& ucp = sym->qu_col_ptr;
  ucp.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index j = 0; j < n; ++j)
    for (Index p = col_ptr[j]; p < col_ptr[j + 1]; ++p)
      ++ucp[std::max(iperm[row_idx[p]], iperm[j]) + 1];
  for (Index k = 0; k < n; ++k) ucp[k + 1] += ucp[k];
  {
    std::vector<std::pair<Index, Index>> entries(static_cast<std::size_t>(ucp[n]));
    std::vector<Index> next(ucp.begin(), ucp.end() - 1);
    for (Index j = 0; j < n; ++j)
      for (Index p = col_ptr[j]; p < col_ptr[j + 1]; ++p) {
        const Index a = iperm[row_idx[p]], b = iperm[j];
        entries[next[std::max(a, b)]++] = {std::min(a, b), p};
      }
    for (Index k = 0; k < n; ++k) std::sort(entries.begin() + ucp[k], entries.begin() + ucp[k + 1]);
    sym->qu_row_idx.resize(entries.size());
    sym->qu_source.resize(entries.size());
    for (std::size_t e = 0; e < entries.size(); ++e) {
      sym->qu_row_idx[e] = entries[e].first;
      sym->qu_source[e] = entries[e].second;
    }
  }

  // Elimination tree (Liu's algorithm with path compression).
  auto& parent = sym->etree;
  parent.assign(static_cast<std::size_t>(n), -1);
  {
    std::vector<Index> ancestor(static_cast<std::size_t>(n), -1);
    for (Index k = 0; k < n; ++k) {
      for (Index p = ucp[k]; p < ucp[k + 1]; ++p) {
        Index i = sym->qu_row_idx[p];
        while (i != -1 && i < k) {
          const Index next = ancestor[i];
          ancestor[i] = k;
          if (next == -1) parent[i] = k;
          i = next;
        }
      }
    }
  }

  // Row patterns via elimination-tree reaches, then the column pattern.
  std::vector<Index> flag(static_cast<std::size_t>(n), -1);
  auto& rp = sym->row_ptr;
  auto& rc = sym->row_col;
  rp.assign(static_cast<std::size_t>(n) + 1, 0);
  std::vector<Index> col_count(static_cast<std::size_t>(n), 1);
  for (Index k = 0; k < n; ++k) {
    flag[k] = k;
    const std::size_t start = rc.size();
    for (Index p = ucp[k]; p < ucp[k + 1]; ++p) {
      for (Index i = sym->qu_row_idx[p]; i < k && flag[i] != k; i = parent[i]) {
        flag[i] = k;
        rc.push_back(i);
        ++col_count[i];
      }
    }
    std::sort(rc.begin() + static_cast<std::ptrdiff_t>(start), rc.end());
    rp[k + 1] = static_cast<Index>(rc.size());
  }

  auto& lcp = sym->l_col_ptr;
  lcp.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index j = 0; j < n; ++j) lcp[j + 1] = lcp[j] + col_count[j];
  sym->l_row_idx.assign(static_cast<std::size_t>(lcp[n]), 0);
  sym->row_slot.assign(rc.size(), 0);
  std::vector<Index> next(lcp.begin(), lcp.end() - 1);
  for (Index j = 0; j < n; ++j) sym->l_row_idx[next[j]++] = j;
  for (Index k = 0; k < n; ++k) {
    for (Index r = rp[k]; r < rp[k + 1]; ++r) {
      const Index j = rc[r];
      sym->row_slot[r] = next[j];
      sym->l_row_idx[next[j]++] = k;
    }
  }
  return sym;
}

}  // namespace pinla
