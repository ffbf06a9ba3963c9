#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pinla/cholesky.hpp"
#include "pinla/selected_inverse.hpp"

using namespace pinla;
using oracle::Mat;
using oracle::Vec;

namespace {

SparseSymMatrix<double> two_by_two() { return SparseSymMatrix<double>::from_triplets(2, {{0, 0, 4}, {1, 0, 2}, {1, 1, 3}}); }

std::vector<std::vector<char>> l_pattern(const SymbolicFactor& s) {
  std::vector<std::vector<char>> p(s.n, std::vector<char>(s.n, 0));
  for (Index j = 0; j < s.n; ++j)
    for (Index k = s.l_col_ptr[j]; k < s.l_col_ptr[j + 1]; ++k) p[s.l_row_idx[k]][j] = 1;
  return p;
}

}  // namespace

TEST_CASE("analyze: arrowhead fill under natural order and hub-last order") {
  const auto q1 = oracle::arrowhead4();
  CHECK(analyze(q1, {Ordering::Natural})->nnz_l() == 10);
  // Q2: hub moved to the last position.
  const auto q2 = permute(q1, Permutation::from_new_to_old({1, 2, 3, 0}));
  CHECK(analyze(q2, {Ordering::Natural})->nnz_l() == 7);
  CHECK(analyze(q1, {Ordering::MinimumDegree})->nnz_l() == 7);
  CHECK(analyze(SparseSymMatrix<double>::identity(6))->nnz_l() == 6);
}

TEST_CASE("analyze: elimination tree parent is the first off-diagonal row of L") {
  std::mt19937_64 rng(5);
  const auto q = oracle::random_gmrf(rng, 300);
  const auto s = analyze(q);
  for (Index j = 0; j < s->n; ++j) {
    const Index first = s->l_col_ptr[j] + 1;
    const Index expect = first < s->l_col_ptr[j + 1] ? s->l_row_idx[first] : -1;
    CHECK(s->etree[j] == expect);
  }
  // Pattern of L contains the permuted lower triangle of Q.
  const auto qp = permute(q, s->permutation);
  const auto pat = l_pattern(*s);
  for (Index j = 0; j < qp.rows(); ++j)
    for (Index p = qp.col_ptr()[j]; p < qp.col_ptr()[j + 1]; ++p) CHECK(pat[qp.row_idx()[p]][j]);
  CHECK(s->nnz_l() == oracle::symbolic_nnz(build_adjacency(q), s->permutation.perm));
}

TEST_CASE("factorize: 2x2 hand example") {
  const auto f = factorize(two_by_two(), {Ordering::Natural});
  const Mat l = f.dense_l();
  CHECK(l(0, 0) == doctest::Approx(2.0));
  CHECK(l(1, 0) == doctest::Approx(1.0));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(f.log_det() == doctest::Approx(std::log(8.0)).epsilon(1e-12));

  const auto id = factorize(SparseSymMatrix<double>::identity(7));
  CHECK(id.log_det() == 0.0);
  CHECK(id.dense_l().isIdentity());
}

TEST_CASE("factorize: RW1 plus noise matches the dense log-determinant") {
  const Index n = 200;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<Triplet<double>> t;
  oracle::add_rw(t, 0, n, 1, 3.0);
  for (Index i = 0; i < n; ++i) t.push_back({i, i, u(rng)});
  const auto q = SparseSymMatrix<double>::from_triplets(n, t);
  const auto f = factorize(q);
  const double ref = oracle::dense_log_det(q.to_dense());
  CHECK(std::abs(f.log_det() - ref) <= 1e-9 * std::abs(ref));
}

TEST_CASE("factorize: reconstruction P Q P^T = L L^T") {
  std::mt19937_64 rng(2);
  for (Index n : {50, 400, 1000}) {
    const auto q = oracle::random_gmrf(rng, n);
    const auto f = factorize(q, {}, 3);
    const Mat l = f.dense_l();
    const Mat qp = permute(q, f.symbolic().permutation).to_dense();
    CHECK((qp - l * l.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * q.max_abs());
  }
}

TEST_CASE("factorize: non-positive pivot is reported") {
  const auto q = SparseSymMatrix<double>::from_triplets(2, {{0, 0, 1}, {1, 0, 2}, {1, 1, 1}});
  try {
    factorize(q, {Ordering::Natural});
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.column() == 1);
  }
  const auto wrong = SparseSymMatrix<double>::identity(2);
  CHECK_THROWS_AS(factorize(analyze(two_by_two()), wrong), StructuralError);
}

TEST_CASE("factorize and selected inverse are bit-identical across thread counts") {
  std::mt19937_64 rng(9);
  const auto q = oracle::grid_laplacian(40, 0.05);
  const auto sym = analyze(q, {Ordering::NestedDissection, {.leaf_cutoff = 32}});
  const auto ref = factorize(sym, q, 1);
  const auto ref_inv = selected_inverse(ref, 1);
  for (int threads : {2, 4, 8}) {
    const auto f = factorize(sym, q, threads);
    CHECK(f.values() == ref.values());
    CHECK(f.log_det() == ref.log_det());
    const auto inv = selected_inverse(f, threads);
    CHECK(inv.values() == ref_inv.values());
  }
}

TEST_CASE("log_det scales with n log c") {
  std::mt19937_64 rng(4);
  const auto q = oracle::random_gmrf(rng, 150);
  const double base = factorize(q).log_det();
  for (double c : {0.5, 2.0, 10.0}) {
    auto qc = q;
    for (auto& v : qc.values()) v *= c;
    CHECK(factorize(qc).log_det() == doctest::Approx(base + 150 * std::log(c)).epsilon(1e-12));
  }
}

TEST_CASE("solve: 2x2, identity and residual on random SPD") {
  const auto f = factorize(two_by_two());
  const Vec x = solve(f, Vec{{8.0, 7.0}});
  CHECK(x[0] == doctest::Approx(1.25));
  CHECK(x[1] == doctest::Approx(1.5));

  const Vec b = Vec::LinSpaced(5, 1, 5);
  CHECK(solve(factorize(SparseSymMatrix<double>::identity(5)), b) == b);

  std::mt19937_64 rng(8);
  const auto q = oracle::random_gmrf(rng, 100);
  std::normal_distribution<double> z;
  Vec rhs(100);
  for (auto& v : rhs) v = z(rng);
  const Vec sol = solve(factorize(q), rhs);
  CHECK((q.multiply(sol) - rhs).cwiseAbs().maxCoeff() / rhs.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK_THROWS_AS(solve(f, Vec(Vec::Zero(3))), DimensionError);
}

TEST_CASE("sample_gmrf: backward solve and Monte Carlo covariance") {
  const auto f1 = factorize(SparseSymMatrix<double>::from_triplets(1, {{0, 0, 4.0}}));
  CHECK(sample_gmrf(f1, Vec(Vec::Ones(1)))[0] == doctest::Approx(0.5));

  const auto f = factorize(two_by_two());
  CHECK(sample_gmrf(f, Vec(Vec::Zero(2))).isZero());

  std::mt19937_64 rng(123);
  std::normal_distribution<double> z;
  const int draws = 100000;
  Mat cov = Mat::Zero(2, 2);
  for (int s = 0; s < draws; ++s) {
    const Vec x = sample_gmrf(f, Vec{{z(rng), z(rng)}});
    cov += x * x.transpose();
  }
  cov /= draws;
  const Mat truth = oracle::dense_inverse(two_by_two().to_dense());
  CHECK((cov - truth).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("selected inverse: 2x2 and identity") {
  const auto inv = selected_inverse(factorize(two_by_two(), {Ordering::Natural}));
  CHECK(inv.variances()[0] == doctest::Approx(0.375));
  CHECK(inv.variances()[1] == doctest::Approx(0.5));
  CHECK(inv.coeff(1, 0) == doctest::Approx(-0.25));

  const auto id = selected_inverse(factorize(SparseSymMatrix<double>::identity(4)));
  CHECK(id.variances().isOnes());
}

TEST_CASE("selected inverse: RW2 + jitter matches the dense inverse on the pattern") {
  const Index n = 300;
  std::vector<Triplet<double>> t;
  oracle::add_rw(t, 0, n, 2, 1.0);
  for (Index i = 0; i < n; ++i) t.push_back({i, i, 1e-3});
  const auto q = SparseSymMatrix<double>::from_triplets(n, t);
  const auto f = factorize(q);
  const auto inv = selected_inverse(f);
  const Mat dense = oracle::dense_inverse(q.to_dense());
  const auto& s = f.symbolic();
  double worst = 0.0;
  for (Index j = 0; j < n; ++j)
    for (Index p = s.l_col_ptr[j]; p < s.l_col_ptr[j + 1]; ++p) {
      const double ref = dense(s.permutation.perm[s.l_row_idx[p]], s.permutation.perm[j]);
      worst = std::max(worst, std::abs(inv.values()[p] - ref) / std::abs(ref));
    }
  CHECK(worst <= 1e-9);
  CHECK(inv.entries_computed() == s.nnz_l());
}

TEST_CASE("selected inverse: takahashi form agrees with the covariance recursion") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const auto q = oracle::random_gmrf(rng, 120);
    const auto f = factorize(q, {}, 2);
    const auto inv = selected_inverse(f, 2);
    const auto& s = f.symbolic();
    const Mat ref = oracle::covariance_recursion(f.dense_l(), l_pattern(s));
    for (Index j = 0; j < s.n; ++j)
      for (Index p = s.l_col_ptr[j]; p < s.l_col_ptr[j + 1]; ++p) {
        const double a = inv.values()[p], b = ref(s.l_row_idx[p], j);
        CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
      }
  }
}

TEST_CASE("float instantiation factorizes and inverts") {
  const auto q = SparseSymMatrix<float>::from_triplets(2, {{0, 0, 4.f}, {1, 0, 2.f}, {1, 1, 3.f}});
  const auto f = factorize(q);
  CHECK(f.log_det() == doctest::Approx(std::log(8.0)).epsilon(1e-6));
  CHECK(selected_inverse(f).variances()[0] == doctest::Approx(0.375f));
}

TEST_CASE("matrix market round trip and general-format input") {
  std::mt19937_64 rng(21);
  const auto q = oracle::random_gmrf(rng, 60);
  std::stringstream ss;
  write_matrix_market(ss, q);
  const auto back = read_matrix_market<double>(ss);
  CHECK(back.same_pattern(q));
  CHECK(back.values() == q.values());

  std::stringstream general("%%MatrixMarket matrix coordinate real general\n% c\n2 2 4\n1 1 4\n1 2 2\n2 1 2\n2 2 3\n");
  const auto g = read_matrix_market<double>(general);
  CHECK(g.coeff(1, 0) == 2.0);
  CHECK(g.nnz() == 3);
  std::stringstream bad("not a banner\n");
  CHECK_THROWS_AS(read_matrix_market<double>(bad), StructuralError);
}

TEST_CASE("factor statistics") {
  const auto s = analyze(oracle::grid_laplacian(16));
  const auto st = s->stats();
  CHECK(st.n == 256);
  CHECK(st.nnz_l >= st.nnz_q);
  CHECK(st.tree_depth >= 2);
  CHECK(st.to_json().find("\"fill_ratio\"") != std::string::npos);
}
