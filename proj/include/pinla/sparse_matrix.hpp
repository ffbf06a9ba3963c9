#pragma once

// Symmetric sparse matrix stored as its lower triangle in compressed sparse
// column form. Row indices are sorted within each column and the diagonal is
// always the first entry of its column.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "pinla/common.hpp"
#include "pinla/graph_order.hpp"

namespace pinla {

template <typename Scalar>
struct Triplet {
  Index row;
  Index col;
  Scalar value;
};

template <typename Scalar>
class SparseSymMatrix {
 public:
  SparseSymMatrix() = default;

  // Sums duplicates. Upper entries (row < col) are mirrored into the lower
  // triangle. The diagonal is not added implicitly.
  static SparseSymMatrix from_triplets(Index n, std::vector<Triplet<Scalar>> triplets) {
    for (auto& t : triplets) {
      if (t.row < 0 || t.col < 0 || t.row >= n || t.col >= n) throw DimensionError("triplet index out of range");
      if (t.row < t.col) std::swap(t.row, t.col);
    }
    std::sort(triplets.begin(), triplets.end(),
              [](const auto& a, const auto& b) { return std::tie(a.col, a.row) < std::tie(b.col, b.row); });
    SparseSymMatrix m;
    m.n_ = n;
    m.col_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (std::size_t k = 0; k < triplets.size(); ++k) {
      const auto& t = triplets[k];
      if (k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
        m.values_.back() += t.value;
        continue;
      }
      m.row_idx_.push_back(t.row);
      m.values_.push_back(t.value);
      ++m.col_ptr_[t.col + 1];
    }
    for (Index j = 0; j < n; ++j) m.col_ptr_[j + 1] += m.col_ptr_[j];
    return m;
  }

  static SparseSymMatrix from_parts(Index n, std::vector<Index> col_ptr, std::vector<Index> row_idx,
                                    std::vector<Scalar> values) {
    SparseSymMatrix m;
    m.n_ = n;
    m.col_ptr_ = std::move(col_ptr);
    m.row_idx_ = std::move(row_idx);
    m.values_ = std::move(values);
    if (static_cast<Index>(m.col_ptr_.size()) != n + 1 || m.row_idx_.size() != m.values_.size() ||
        static_cast<Index>(m.row_idx_.size()) != m.col_ptr_.back())
      throw StructuralError("inconsistent compressed storage");
    return m;
  }

  static SparseSymMatrix identity(Index n, Scalar scale = Scalar(1)) {
    std::vector<Index> cp(static_cast<std::size_t>(n) + 1), ri(static_cast<std::size_t>(n));
    for (Index j = 0; j <= n; ++j) cp[j] = j;
    for (Index j = 0; j < n; ++j) ri[j] = j;
    return from_parts(n, std::move(cp), std::move(ri), std::vector<Scalar>(static_cast<std::size_t>(n), scale));
  }

  // Lower triangle of a dense symmetric matrix; zeros are dropped except on
  // the diagonal.
  static SparseSymMatrix from_dense(const MatrixX<Scalar>& dense) {
    const Index n = dense.rows();
    std::vector<Triplet<Scalar>> t;
    for (Index j = 0; j < n; ++j)
      for (Index i = j; i < n; ++i)
        if (i == j || dense(i, j) != Scalar(0)) t.push_back({i, j, dense(i, j)});
    return from_triplets(n, std::move(t));
  }

  Index rows() const { return n_; }
  Index cols() const { return n_; }
  Index nnz() const { return static_cast<Index>(row_idx_.size()); }

  const std::vector<Index>& col_ptr() const { return col_ptr_; }
  const std::vector<Index>& row_idx() const { return row_idx_; }
  const std::vector<Scalar>& values() const { return values_; }
  std::vector<Scalar>& values() { return values_; }

  // Entry (i, j) of the symmetric matrix; structural zeros read as 0.
  Scalar coeff(Index i, Index j) const {
    if (i < j) std::swap(i, j);
    const auto first = row_idx_.begin() + col_ptr_[j];
    const auto last = row_idx_.begin() + col_ptr_[j + 1];
    const auto it = std::lower_bound(first, last, i);
    return (it != last && *it == i) ? values_[it - row_idx_.begin()] : Scalar(0);
  }

  // Throws StructuralError unless every column starts with its diagonal and
  // rows are strictly increasing.
  void validate() const {
    for (Index j = 0; j < n_; ++j) {
      if (col_ptr_[j] == col_ptr_[j + 1] || row_idx_[col_ptr_[j]] != j)
        throw StructuralError("missing diagonal entry in column " + std::to_string(j));
      for (Index p = col_ptr_[j] + 1; p < col_ptr_[j + 1]; ++p)
        if (row_idx_[p] <= row_idx_[p - 1] || row_idx_[p] >= n_)
          throw StructuralError("rows not strictly increasing in column " + std::to_string(j));
    }
  }

  bool same_pattern(const SparseSymMatrix& other) const {
    return n_ == other.n_ && col_ptr_ == other.col_ptr_ && row_idx_ == other.row_idx_;
  }

  // FNV-1a over the structure only.
  std::uint64_t pattern_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](Index v) {
      auto u = static_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (u >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    };
    mix(n_);
    for (Index v : col_ptr_) mix(v);
    for (Index v : row_idx_) mix(v);
    return h;
  }

  MatrixX<Scalar> to_dense() const {
    MatrixX<Scalar> d = MatrixX<Scalar>::Zero(n_, n_);
    for (Index j = 0; j < n_; ++j)
      for (Index p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
        d(row_idx_[p], j) = values_[p];
        d(j, row_idx_[p]) = values_[p];
      }
    return d;
  }

  // y = Q x using both triangles.
  VectorX<Scalar> multiply(const VectorX<Scalar>& x) const {
    if (x.size() != n_) throw DimensionError("multiply: dimension mismatch");
    VectorX<Scalar> y = VectorX<Scalar>::Zero(n_);
    for (Index j = 0; j < n_; ++j) {
      for (Index p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
        const Index i = row_idx_[p];
        y[i] += values_[p] * x[j];
        if (i != j) y[j] += values_[p] * x[i];
      }
    }
    return y;
  }

  Scalar max_abs() const {
    Scalar m(0);
    for (const auto& v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  AdjacencyGraph graph() const { return AdjacencyGraph::from_lower_pattern(n_, col_ptr_, row_idx_); }

 private:
  Index n_ = 0;
  std::vector<Index> col_ptr_{0};
  std::vector<Index> row_idx_;
  std::vector<Scalar> values_;
};

// Off-diagonal structure of Q as an undirected graph.
template <typename Scalar>
AdjacencyGraph build_adjacency(const SparseSymMatrix<Scalar>& q) {
  return q.graph();
}

// P Q P^T for the permutation (new -> old) held by `order`.
template <typename Scalar>
SparseSymMatrix<Scalar> permute(const SparseSymMatrix<Scalar>& q, const Permutation& order) {
  std::vector<Triplet<Scalar>> t;
  t.reserve(static_cast<std::size_t>(q.nnz()));
  for (Index j = 0; j < q.rows(); ++j)
    for (Index p = q.col_ptr()[j]; p < q.col_ptr()[j + 1]; ++p)
      t.push_back({order.iperm[q.row_idx()[p]], order.iperm[j], q.values()[p]});
  return SparseSymMatrix<Scalar>::from_triplets(q.rows(), std::move(t));
}

// Matrix Market coordinate format, "symmetric" qualifier, lower entries.
template <typename Scalar>
void write_matrix_market(std::ostream& os, const SparseSymMatrix<Scalar>& q) {
  os << "%%MatrixMarket matrix coordinate real symmetric\n";
  os << q.rows() << ' ' << q.cols() << ' ' << q.nnz() << '\n';
  os << std::setprecision(std::numeric_limits<Scalar>::max_digits10);
  for (Index j = 0; j < q.rows(); ++j)
    for (Index p = q.col_ptr()[j]; p < q.col_ptr()[j + 1]; ++p)
      os << q.row_idx()[p] + 1 << ' ' << j + 1 << ' ' << q.values()[p] << '\n';
}

template <typename Scalar>
SparseSymMatrix<Scalar> read_matrix_market(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("%%MatrixMarket", 0) != 0)
    throw StructuralError("matrix market: missing banner");
  std::string lower = line;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower.find("coordinate") == std::string::npos) throw StructuralError("matrix market: only coordinate format");
  if (lower.find("complex") != std::string::npos) throw StructuralError("matrix market: complex not supported");
  const bool pattern = lower.find("pattern") != std::string::npos;
  const bool general = lower.find("general") != std::string::npos;
  while (std::getline(is, line) && (line.empty() || line[0] == '%')) {
  }
  std::istringstream header(line);
  Index rows = 0, cols = 0, entries = 0;
  if (!(header >> rows >> cols >> entries) || rows != cols || rows < 0)
    throw StructuralError("matrix market: bad size line");
  std::vector<Triplet<Scalar>> t;
  t.reserve(static_cast<std::size_t>(entries));
  for (Index k = 0; k < entries; ++k) {
    Index i = 0, j = 0;
    double v = 1.0;
    if (!(is >> i >> j)) throw StructuralError("matrix market: truncated entries");
    if (!pattern && !(is >> v)) throw StructuralError("matrix market: missing value");
    // A general file lists both triangles; keep one copy of each pair.
    if (general && i < j) continue;
    t.push_back({i - 1, j - 1, static_cast<Scalar>(v)});
  }
  return SparseSymMatrix<Scalar>::from_triplets(rows, std::move(t));
}

template <typename Scalar>
SparseSymMatrix<Scalar> read_matrix_market_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("matrix", "cannot open '" + path + "'");
  return read_matrix_market<Scalar>(in);
}

}  // namespace pinla
