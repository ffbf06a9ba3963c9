#pragma once

// Sparse Cholesky factorization Q = P^T L L^T P.
//
// analyze() runs once per sparsity pattern: ordering, elimination tree and
// the full pattern of L. factorize() is an up-looking kernel scheduled over
// the separator tree: sibling subtrees are independent tasks and a node's own
// columns are processed in ascending order after both children finish. Each
// entry of L is written by exactly one task with a fixed operation order, so
// the result does not depend on the thread count.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pinla/common.hpp"
#include "pinla/graph_order.hpp"
#include "pinla/parallel.hpp"
#include "pinla/sparse_matrix.hpp"

namespace pinla {

enum class Ordering { Natural, MinimumDegree, NestedDissection };

struct OrderingChoice {
  Ordering method = Ordering::NestedDissection;
  NestedDissectionOptions nested_dissection{};
};

Ordering parse_ordering(const std::string& name);

struct FactorStats {
  Index n = 0;
  Index nnz_q = 0;  // lower triangle of Q, diagonal included
  Index nnz_l = 0;
  double fill_ratio = 0.0;  // nnz_l / nnz_q
  int tree_depth = 0;
  Index tree_nodes = 0;
  Index tree_leaves = 0;

  std::string to_json() const;
};

struct SymbolicFactor {
  Index n = 0;
  Permutation permutation;
  SeparatorTree tree;
  // Elimination tree over permuted indices; -1 marks a root.
  std::vector<Index> etree;

  // Pattern of L (CSC, diagonal first, rows ascending).
  std::vector<Index> l_col_ptr;
  std::vector<Index> l_row_idx;

  // Strictly lower rows of L: row k touches columns row_col[row_ptr[k]..]
  // (ascending); row_slot gives the position of L(k, j) in the values array.
  std::vector<Index> row_ptr;
  std::vector<Index> row_col;
  std::vector<Index> row_slot;

  // Upper triangle of P Q P^T by columns, as indices into Q's value array.
  std::vector<Index> qu_col_ptr;
  std::vector<Index> qu_row_idx;
  std::vector<Index> qu_source;

  // Structure of the analyzed Q, to reject mismatched inputs.
  std::vector<Index> q_col_ptr;
  std::vector<Index> q_row_idx;

  Index nnz_l() const { return static_cast<Index>(l_row_idx.size()); }
  Index nnz_q() const { return static_cast<Index>(q_row_idx.size()); }
  FactorStats stats() const;

  template <typename Scalar>
  bool matches(const SparseSymMatrix<Scalar>& q) const {
    return q.rows() == n && q.col_ptr() == q_col_ptr && q.row_idx() == q_row_idx;
  }
};

// Number of analyze() calls made by this process.
long long analyze_calls();

std::shared_ptr<const SymbolicFactor> analyze_pattern(Index n, const std::vector<Index>& col_ptr,
                                                      const std::vector<Index>& row_idx,
                                                      const OrderingChoice& choice);

template <typename Scalar>
std::shared_ptr<const SymbolicFactor> analyze(const SparseSymMatrix<Scalar>& q, const OrderingChoice& choice = {}) {
  return analyze_pattern(q.rows(), q.col_ptr(), q.row_idx(), choice);
}

// Relative pivot threshold: the factorization fails when a squared pivot
// falls to or below this fraction of the matching diagonal entry of Q.
inline constexpr double kPivotTolerance = 1e-13;

template <typename Scalar>
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  CholeskyFactor(std::shared_ptr<const SymbolicFactor> symbolic, std::vector<Scalar> values)
      : symbolic_(std::move(symbolic)), values_(std::move(values)) {
    log_det_ = Scalar(0);
    for (Index j = 0; j < symbolic_->n; ++j) log_det_ += Scalar(2) * std::log(values_[symbolic_->l_col_ptr[j]]);
  }

  const SymbolicFactor& symbolic() const { return *symbolic_; }
  const std::shared_ptr<const SymbolicFactor>& symbolic_ptr() const { return symbolic_; }
  const std::vector<Scalar>& values() const { return values_; }
  Index size() const { return symbolic_->n; }
  Scalar log_det() const { return log_det_; }
  Scalar diagonal(Index j) const { return values_[symbolic_->l_col_ptr[j]]; }

  // L in permuted ordering as a dense matrix (tests and diagnostics).
  MatrixX<Scalar> dense_l() const {
    const auto& s = *symbolic_;
    MatrixX<Scalar> l = MatrixX<Scalar>::Zero(s.n, s.n);
    for (Index j = 0; j < s.n; ++j)
      for (Index p = s.l_col_ptr[j]; p < s.l_col_ptr[j + 1]; ++p) l(s.l_row_idx[p], j) = values_[p];
    return l;
  }

 private:
  std::shared_ptr<const SymbolicFactor> symbolic_;
  std::vector<Scalar> values_;
  Scalar log_det_{};
};

namespace detail {

// Tree nodes whose children both have at least this many columns are split
// across threads; smaller subtrees run on the calling thread.
inline constexpr Index kMinForkColumns = 128;

template <typename Scalar>
struct FactorKernel {
  const SymbolicFactor& s;
  const std::vector<Scalar>& q_values;
  std::vector<Scalar>& l;
  std::vector<std::vector<Scalar>>& work;
  std::atomic<bool> failed{false};

  void row(Index k, std::vector<Scalar>& x) {
    for (Index p = s.qu_col_ptr[k]; p < s.qu_col_ptr[k + 1]; ++p) x[s.qu_row_idx[p]] = q_values[s.qu_source[p]];
    const Scalar qkk = x[k];
    Scalar d = qkk;
    x[k] = Scalar(0);
    for (Index r = s.row_ptr[k]; r < s.row_ptr[k + 1]; ++r) {
      const Index j = s.row_col[r];
      const Index slot = s.row_slot[r];
      const Scalar lkj = x[j] / l[s.l_col_ptr[j]];
      x[j] = Scalar(0);
      for (Index p = s.l_col_ptr[j] + 1; p < slot; ++p) x[s.l_row_idx[p]] -= l[p] * lkj;
      d -= lkj * lkj;
      l[slot] = lkj;
    }
    if (!(d > Scalar(kPivotTolerance) * std::abs(qkk))) throw NotPositiveDefinite(k, s.permutation.perm[k]);
    l[s.l_col_ptr[k]] = std::sqrt(d);
  }

  void node(int id, int slot_begin, int slot_count) {
    const auto& nd = s.tree.nodes[id];
    if (!nd.is_leaf()) {
      const auto& a = s.tree.nodes[nd.left];
      const auto& b = s.tree.nodes[nd.right];
      const bool fork =
          slot_count >= 2 && a.subtree_size() >= kMinForkColumns && b.subtree_size() >= kMinForkColumns;
      const int left_count = fork ? slot_count / 2 : slot_count;
      const int right_count = fork ? slot_count - left_count : slot_count;
      fork_join(
          fork, [&] { node(nd.left, fork ? slot_begin + right_count : slot_begin, left_count); },
          [&] { node(nd.right, slot_begin, right_count); });
    }
    auto& x = work[slot_begin];
    for (Index k = nd.sep_begin; k < nd.end; ++k) {
      if (failed.load(std::memory_order_relaxed)) return;
      try {
        row(k, x);
      } catch (...) {
        failed.store(true);
        throw;
      }
    }
  }
};

}  // namespace detail

// Numeric factorization of Q on the pattern fixed by `symbolic`. Uses up to
// `threads` workers (the level-2 budget).
template <typename Scalar>
CholeskyFactor<Scalar> factorize(const std::shared_ptr<const SymbolicFactor>& symbolic,
                                 const SparseSymMatrix<Scalar>& q, int threads = 1) {
  const auto& s = *symbolic;
  if (!s.matches(q)) throw StructuralError("factorize: matrix pattern differs from the analyzed pattern");
  std::vector<Scalar> l(static_cast<std::size_t>(s.nnz_l()), Scalar(0));
  const int slots = std::max(1, threads);
  std::vector<std::vector<Scalar>> work(static_cast<std::size_t>(slots),
                                        std::vector<Scalar>(static_cast<std::size_t>(s.n), Scalar(0)));
  detail::FactorKernel<Scalar> kernel{s, q.values(), l, work};
  if (s.n > 0) kernel.node(s.tree.root, 0, slots);
  return CholeskyFactor<Scalar>(symbolic, std::move(l));
}

template <typename Scalar>
CholeskyFactor<Scalar> factorize(const SparseSymMatrix<Scalar>& q, const OrderingChoice& choice = {},
                                 int threads = 1) {
  return factorize(analyze(q, choice), q, threads);
}

// Solves L y = b in place (permuted ordering).
template <typename Scalar>
void lower_solve_in_place(const CholeskyFactor<Scalar>& f, VectorX<Scalar>& x) {
  const auto& s = f.symbolic();
  const auto& l = f.values();
  for (Index j = 0; j < s.n; ++j) {
    x[j] /= l[s.l_col_ptr[j]];
    const Scalar xj = x[j];
    for (Index p = s.l_col_ptr[j] + 1; p < s.l_col_ptr[j + 1]; ++p) x[s.l_row_idx[p]] -= l[p] * xj;
  }
}

// Solves L^T x = y in place (permuted ordering).
template <typename Scalar>
void upper_solve_in_place(const CholeskyFactor<Scalar>& f, VectorX<Scalar>& x) {
  const auto& s = f.symbolic();
  const auto& l = f.values();
  for (Index j = s.n - 1; j >= 0; --j) {
    Scalar acc = x[j];
    for (Index p = s.l_col_ptr[j] + 1; p < s.l_col_ptr[j + 1]; ++p) acc -= l[p] * x[s.l_row_idx[p]];
    x[j] = acc / l[s.l_col_ptr[j]];
  }
}

template <typename Scalar>
VectorX<Scalar> to_permuted(const Permutation& order, const VectorX<Scalar>& v) {
  VectorX<Scalar> out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = v[order.perm[i]];
  return out;
}

template <typename Scalar>
VectorX<Scalar> from_permuted(const Permutation& order, const VectorX<Scalar>& v) {
  VectorX<Scalar> out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[order.perm[i]] = v[i];
  return out;
}

// x with Q x = b, both in the caller's ordering.
template <typename Scalar>
VectorX<Scalar> solve(const CholeskyFactor<Scalar>& f, const VectorX<Scalar>& b) {
  if (b.size() != f.size()) throw DimensionError("solve: right-hand side has wrong length");
  VectorX<Scalar> x = to_permuted(f.symbolic().permutation, b);
  lower_solve_in_place(f, x);
  upper_solve_in_place(f, x);
  return from_permuted(f.symbolic().permutation, x);
}

// x solving L^T x = z. With z ~ N(0, I) the result is a draw from N(0, Q^-1).
// z and x are in the caller's ordering.
template <typename Scalar>
VectorX<Scalar> sample_gmrf(const CholeskyFactor<Scalar>& f, const VectorX<Scalar>& z) {
  if (z.size() != f.size()) throw DimensionError("sample_gmrf: z has wrong length");
  VectorX<Scalar> x = to_permuted(f.symbolic().permutation, z);
  upper_solve_in_place(f, x);
  return from_permuted(f.symbolic().permutation, x);
}

}  // namespace pinla
