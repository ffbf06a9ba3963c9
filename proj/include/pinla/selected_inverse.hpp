#pragma once

// Selected inversion: Sigma = Q^-1 restricted to the pattern of L.
//
// With Q = V D V^T (V unit lower triangular, L = V D^{1/2}) the entries obey
//
//   Sigma_ij = delta_ij / D_ii - sum_{k > i, V_ki != 0} V_ki Sigma_kj,   i <= j,
//
// and every Sigma_kj needed on the right-hand side lies on the pattern of L,
// so the recursion closes on that pattern. Columns are visited from n-1 down
// to 0; over the separator tree a node's own columns are finished before its
// two children, which then run as independent tasks.

#include <atomic>
#include <memory>
#include <vector>

#include "pinla/cholesky.hpp"

namespace pinla {

template <typename Scalar>
class SelectedInverse {
 public:
  SelectedInverse() = default;
  SelectedInverse(std::shared_ptr<const SymbolicFactor> symbolic, std::vector<Scalar> values, Index computed)
      : symbolic_(std::move(symbolic)), values_(std::move(values)), entries_computed_(computed) {
    const auto& s = *symbolic_;
    variances_.resize(s.n);
    for (Index j = 0; j < s.n; ++j) variances_[s.permutation.perm[j]] = values_[s.l_col_ptr[j]];
  }

  const SymbolicFactor& symbolic() const { return *symbolic_; }
  // Values on the pattern of L (permuted ordering).
  const std::vector<Scalar>& values() const { return values_; }
  // diag(Sigma) in the caller's ordering.
  const VectorX<Scalar>& variances() const { return variances_; }
  // Number of Sigma entries the recursion produced; equals nnz(L).
  Index entries_computed() const { return entries_computed_; }

  // Sigma(i, j) in permuted indices; requires (max, min) on the pattern of L.
  Scalar permuted_coeff(Index i, Index j) const {
    if (i < j) std::swap(i, j);
    const auto& s = *symbolic_;
    const auto first = s.l_row_idx.begin() + s.l_col_ptr[j];
    const auto last = s.l_row_idx.begin() + s.l_col_ptr[j + 1];
    const auto it = std::lower_bound(first, last, i);
    if (it == last || *it != i) throw StructuralError("entry is not on the pattern of L");
    return values_[it - s.l_row_idx.begin()];
  }

  // Sigma(i, j) in the caller's ordering.
  Scalar coeff(Index i, Index j) const {
    const auto& ip = symbolic_->permutation.iperm;
    return permuted_coeff(ip[i], ip[j]);
  }

 private:
  std::shared_ptr<const SymbolicFactor> symbolic_;
  std::vector<Scalar> values_;
  VectorX<Scalar> variances_;
  Index entries_computed_ = 0;
};

namespace detail {

template <typename Scalar>
struct InverseWorkspace {
  std::vector<Index> position;  // row -> local index in the current column, -1 otherwise
  std::vector<Scalar> acc;
  std::vector<Scalar> v;
  explicit InverseWorkspace(Index n)
      : position(static_cast<std::size_t>(n), -1),
        acc(static_cast<std::size_t>(n), Scalar(0)),
        v(static_cast<std::size_t>(n), Scalar(0)) {}
};

template <typename Scalar>
struct InverseKernel {
  const SymbolicFactor& s;
  const std::vector<Scalar>& l;
  std::vector<Scalar>& sigma;
  std::vector<InverseWorkspace<Scalar>>& work;
  std::atomic<Index> computed{0};

  void column(Index i, InverseWorkspace<Scalar>& w) {
    const Index first = s.l_col_ptr[i] + 1;
    const Index last = s.l_col_ptr[i + 1];
    const Index count = last - first;
    const Scalar lii = l[s.l_col_ptr[i]];
    for (Index a = 0; a < count; ++a) {
      w.position[s.l_row_idx[first + a]] = a;
      w.v[a] = l[first + a] / lii;  // V_ki
      w.acc[a] = Scalar(0);
    }
    // acc[j] = sum_k V_ki Sigma_kj over k, j in the pattern of column i.
    for (Index a = 0; a < count; ++a) {
      const Index k = s.l_row_idx[first + a];
      const Scalar vk = w.v[a];
      w.acc[a] += vk * sigma[s.l_col_ptr[k]];
      for (Index p = s.l_col_ptr[k] + 1; p < s.l_col_ptr[k + 1]; ++p) {
        const Index b = w.position[s.l_row_idx[p]];
        if (b < 0) continue;
        w.acc[b] += vk * sigma[p];
        w.acc[a] += w.v[b] * sigma[p];
      }
    }
    Scalar diag = Scalar(1) / (lii * lii);
    for (Index a = 0; a < count; ++a) {
      sigma[first + a] = -w.acc[a];
      diag += w.v[a] * w.acc[a];
    }
    sigma[s.l_col_ptr[i]] = diag;
    for (Index a = 0; a < count; ++a) w.position[s.l_row_idx[first + a]] = -1;
    computed.fetch_add(count + 1, std::memory_order_relaxed);
  }

  void node(int id, int slot_begin, int slot_count) {
    const auto& nd = s.tree.nodes[id];
    auto& w = work[slot_begin];
    for (Index i = nd.end - 1; i >= nd.sep_begin; --i) column(i, w);
    if (nd.is_leaf()) return;
    const auto& a = s.tree.nodes[nd.left];
    const auto& b = s.tree.nodes[nd.right];
    const bool fork = slot_count >= 2 && a.subtree_size() >= kMinForkColumns && b.subtree_size() >= kMinForkColumns;
    const int left_count = fork ? slot_count / 2 : slot_count;
    const int right_count = fork ? slot_count - left_count : slot_count;
    // Right child first when serial: it holds the larger column indices.
    fork_join(
        fork, [&] { node(nd.right, slot_begin, right_count); },
        [&] { node(nd.left, fork ? slot_begin + right_count : slot_begin, left_count); });
  }
};

}  // namespace detail

template <typename Scalar>
SelectedInverse<Scalar> selected_inverse(const CholeskyFactor<Scalar>& factor, int threads = 1) {
  const auto& s = factor.symbolic();
  std::vector<Scalar> sigma(static_cast<std::size_t>(s.nnz_l()), Scalar(0));
  const int slots = std::max(1, threads);
  std::vector<detail::InverseWorkspace<Scalar>> work;
  work.reserve(static_cast<std::size_t>(slots));
  for (int k = 0; k < slots; ++k) work.emplace_back(s.n);
  detail::InverseKernel<Scalar> kernel{s, factor.values(), sigma, work};
  if (s.n > 0) kernel.node(s.tree.root, 0, slots);
  return SelectedInverse<Scalar>(factor.symbolic_ptr(), std::move(sigma), kernel.computed.load());
}

}  // namespace pinla
