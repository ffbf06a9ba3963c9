#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "pinla/optimizer.hpp"
#include "pinla/pipeline.hpp"
#include "pinla/rng.hpp"
#include "pinla/synth.hpp"

using namespace pinla;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace {

ObjectiveFn plain(std::function<double(const Vector&)> f) {
  return [f = std::move(f)](const Vector& x, const TaskContext&) { return f(x); };
}

// Deterministic noise in [-amp, amp] keyed on the bits of theta.
double hashed_noise(const Vector& theta, std::uint64_t seed, double amp) {
  std::uint64_t h = seed;
  for (Index i = 0; i < theta.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &theta[i], sizeof bits);
    h = splitmix64(h ^ bits);
  }
  return amp * (2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0);
}

}  // namespace

TEST_CASE("fd_gradient of a sum of squares with central differences") {
  const auto f = plain([](const Vector& x) { return x.squaredNorm(); });
  const auto g = fd_gradient(f, (Vec(2) << 1, 2).finished(), DiffScheme::Central, 1e-4, {1, 1});
  CHECK(std::abs(g.gradient[0] - 2.0) < 1e-7);
  CHECK(std::abs(g.gradient[1] - 4.0) < 1e-7);
  CHECK(g.evaluations == 5);
  CHECK(g.f == 5.0);
}

TEST_CASE("fd_gradient truncation error orders on a cubic") {
  const auto f = plain([](const Vector& x) { return x[0] * x[0] * x[0]; });
  const Vec one = Vec::Ones(1);
  const double central = fd_gradient(f, one, DiffScheme::Central, 1e-4, {1, 1}).gradient[0] - 3.0;
  const double forward = fd_gradient(f, one, DiffScheme::Forward, 1e-4, {1, 1}).gradient[0] - 3.0;
  CHECK(central == doctest::Approx(1e-8).epsilon(0.01));  // eps^2 f'''/6
  CHECK(forward == doctest::Approx(3e-4).epsilon(0.01));  // eps f''/2
  CHECK_THROWS_AS(fd_gradient(f, one, DiffScheme::Mixed, 1e-4, {1, 1}), ConfigError);
  CHECK_THROWS_AS(fd_gradient(f, one, DiffScheme::Central, 0.0, {1, 1}), ConfigError);
}

TEST_CASE("fd_gradient dispatches all evaluations as one concurrent batch") {
  std::atomic<int> calls{0};
  const auto f = [&](const Vector& x, const TaskContext&) {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(40));
    return x.squaredNorm();
  };
  const Vec theta = Vec::Ones(3);
  const auto t0 = std::chrono::steady_clock::now();
  f(theta, TaskContext{});
  const double single = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  calls = 0;
  const auto t1 = std::chrono::steady_clock::now();
  fd_gradient(f, theta, DiffScheme::Central, 5e-3, {7, 1});
  const double batch = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  CHECK(calls == 7);
  CHECK(batch <= 3.0 * single);
}

TEST_CASE("fd_gradient reports the failing theta") {
  const auto f = plain([](const Vector& x) -> double {
    if (x[1] > 1.0) throw InvalidData("boom");
    return x.sum();
  });
  try {
    fd_gradient(f, (Vec(2) << 0.0, 1.0).finished(), DiffScheme::Central, 0.5, {2, 1});
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(std::string(e.what()).find("theta = (0, 1.5)") != std::string::npos);
  }
}

TEST_CASE("robust fit: exact quadratic is recovered with unit weights") {
  std::vector<double> t, f;
  for (int i = 0; i < 7; ++i) {
    t.push_back(-1.0 + 0.5 * i);
    f.push_back(t.back() * t.back() - 2.0 * t.back() + 1.0);
  }
  const auto fit = robust_quadratic_fit(t, f);
  CHECK(std::abs(fit.coef[0] - 1.0) < 1e-10);
  CHECK(std::abs(fit.coef[1] + 2.0) < 1e-10);
  CHECK(std::abs(fit.coef[2] - 1.0) < 1e-10);
  CHECK(fit.weights.minCoeff() > 1.0 - 1e-8);

  f[3] += 100.0;
  const auto robust = robust_quadratic_fit(t, f);
  CHECK((robust.coef - Eigen::Vector3d(1, -2, 1)).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(robust.weights[3] == 0.0);
}

TEST_CASE("robust fit: a line gives a zero quadratic coefficient") {
  const auto fit = robust_quadratic_fit({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(std::abs(fit.coef[2]) < 1e-10);
  CHECK(std::abs(fit.coef[1] - 2.0) < 1e-10);
}

TEST_CASE("robust fit: breakdown invariance under any single corruption") {
  std::vector<double> t, f;
  for (int i = 0; i < 9; ++i) {
    t.push_back(0.25 * i - 0.5);
    f.push_back(3.0 - 1.5 * t.back() + 2.0 * t.back() * t.back());
  }
  const auto clean = robust_quadratic_fit(t, f);
  const double range = *std::max_element(f.begin(), f.end()) - *std::min_element(f.begin(), f.end());
  for (std::size_t k = 0; k < t.size(); ++k)
    for (double sign : {1.0, -1.0}) {
      auto g = f;
      g[k] += sign * 10.0 * range;
      const auto fit = robust_quadratic_fit(t, g);
      CHECK((fit.coef - clean.coef).lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("robust fit: too few or collinear abscissae") {
  CHECK_THROWS_AS(robust_quadratic_fit({0, 1, 2}, {0, 1, 4}), FitError);
  CHECK_THROWS_AS(robust_quadratic_fit({1, 1, 2, 2}, {0, 1, 4, 5}), FitError);
  CHECK_THROWS_AS(robust_quadratic_fit({0, 1, 2, 3}, {0, 1, 4}), DimensionError);
}

TEST_CASE("parallel line search on (theta - 3)^2 lands on the minimum") {
  const auto f = plain([](const Vector& x) { return (x[0] - 3.0) * (x[0] - 3.0); });
  const auto ls = parallel_line_search(f, Vec::Zero(1), Vec::Constant(1, -6.0), 9.0, 1.0, {}, {1, 1});
  REQUIRE(ls.ok);
  CHECK(ls.step == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(std::abs(ls.theta[0] - 3.0) < 1e-9);
  CHECK(ls.f < 1e-16);
  CHECK_FALSE(ls.fallback);
}

TEST_CASE("parallel line search with a concave fit takes the far endpoint") {
  const auto f = plain([](const Vector& x) { return 10.0 - (x[0] + 0.1) * (x[0] + 0.1); });
  const auto ls = parallel_line_search(f, Vec::Zero(1), Vec::Constant(1, -1.0), f(Vec::Zero(1), {}), 1.0, {}, {1, 1});
  REQUIRE(ls.ok);
  CHECK(ls.step == 1.0);
  CHECK(ls.theta[0] == 1.0);
}

TEST_CASE("parallel line search tolerates bounded evaluation noise") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto f = [seed](const Vector& x, const TaskContext&) {
      return (x[0] - 3.0) * (x[0] - 3.0) + hashed_noise(x, seed, 1e-3);
    };
    const Vec x0 = Vec::Zero(1);
    const auto ls = parallel_line_search(f, x0, Vec::Constant(1, -6.0), f(x0, {}), 1.0, {}, {1, 1});
    REQUIRE(ls.ok);
    CHECK(std::abs(ls.theta[0] - 3.0) < 0.02);
  }
}

TEST_CASE("parallel line search falls back, shrinks, then fails") {
  // Steep wall right after theta: only the shrunken interval has a decrease.
  const auto f = plain([](const Vector& x) { return x[0] < 0.05 ? -x[0] : 100.0; });
  const auto ls = parallel_line_search(f, Vec::Zero(1), Vec::Constant(1, -1.0), 0.0, 0.2, {}, {1, 1});
  REQUIRE(ls.ok);
  CHECK(ls.f < 0.0);
  const auto up = plain([](const Vector& x) { return std::abs(x[0]) + 1.0; });
  const auto bad = parallel_line_search(up, Vec::Zero(1), Vec::Constant(1, -1.0), 1.0, 1.0, {}, {1, 1});
  CHECK_FALSE(bad.ok);
}

TEST_CASE("candidate count follows the level-1 budget unless pinned") {
  std::atomic<int> calls{0};
  const auto f = [&](const Vector& x, const TaskContext&) {
    ++calls;
    return (x[0] - 0.37) * (x[0] - 0.37);
  };
  const Vec x0 = Vec::Zero(1), p = Vec::Constant(1, -1.0);
  auto count = [&](const LineSearchConfig& cfg, ThreadBudget b) {
    calls = 0;
    parallel_line_search(f, x0, p, 0.37 * 0.37, 1.0, cfg, b);
    return calls.load();
  };
  // k candidates + 2 stabilizers (+1 when the fitted minimum is new).
  CHECK(count({}, {1, 1}) >= 7);
  CHECK(count({}, {1, 1}) <= 8);
  CHECK(count({}, {8, 1}) >= 10);
  LineSearchConfig pinned;
  pinned.candidates = 6;
  CHECK(count(pinned, {1, 1}) == count(pinned, {8, 1}));
}

TEST_CASE("armijo backtracking") {
  const auto f = plain([](const Vector& x) { return 0.5 * x.squaredNorm(); });
  const Vec x = Vec::Constant(1, 4.0);
  const Vec g = x;
  const auto ls = armijo_line_search(f, x, 4.0 * g, 8.0, g, {}, {1, 1});
  REQUIRE(ls.ok);
  CHECK(ls.step == 0.25);
  CHECK(ls.theta[0] == 0.0);
}

TEST_CASE("bfgs: secant condition, skip rule, quadratic recovery") {
  const Mat h0 = Mat::Identity(2, 2);
  const Vec s = (Vec(2) << 0.3, -0.7).finished();
  const Mat h1 = bfgs_update(h0, s, s);
  CHECK((h1 * s - s).lpNorm<Eigen::Infinity>() < 1e-14);
  bool skipped = false;
  const Mat h2 = bfgs_update(h0, s, (Vec(2) << 0.7, 0.3).finished(), &skipped);
  CHECK(skipped);
  CHECK(h2 == h0);

  // Exact line searches on a quadratic: H equals A^-1 after d updates.
  Mat a(2, 2);
  a << 3, 1, 1, 2;
  Vec x = (Vec(2) << 1.0, -2.0).finished();
  Mat h = Mat::Identity(2, 2);
  for (int it = 0; it < 2; ++it) {
    const Vec g = a * x;
    const Vec p = h * g;
    const double t = g.dot(p) / p.dot(a * p);
    const Vec step = -t * p;
    h = bfgs_update(h, step, a * step);
    x += step;
  }
  CHECK((h - a.inverse()).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("fd_hessian: exact on quadratics, symmetric, eigen-floored") {
  Mat a(3, 3);
  a << 4, 1, 0.5, 1, 3, -0.2, 0.5, -0.2, 2;
  const auto f = plain([&](const Vector& x) { return 0.5 * x.dot(a * x) + x.sum(); });
  Index evals = 0;
  const Mat h = fd_hessian(f, Vec::Constant(3, 0.2), 5e-3, {2, 1}, std::nullopt, &evals);
  CHECK((h - a).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(h == h.transpose());
  CHECK(evals == 1 + 2 * 3 + 4 * 3);

  const auto saddle = plain([](const Vector& x) { return x[0] * x[0] - x[1] * x[1]; });
  const Mat hs = fd_hessian(saddle, Vec::Zero(2), 1e-2, {1, 1});
  Eigen::SelfAdjointEigenSolver<Mat> es(hs);
  CHECK(es.eigenvalues().minCoeff() >= 1e-8 * (1 - 1e-12));
}

TEST_CASE("optimize: separable quadratic from (2, 2)") {
  const auto f = plain([](const Vector& x) { return 0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1]); });
  const auto r = optimize({f, {}}, Vec::Constant(2, 2.0), {}, {1, 1});
  CHECK(r.status == OptimizeStatus::Converged);
  CHECK(r.iterations <= 10);
  CHECK(r.theta.lpNorm<Eigen::Infinity>() < 1e-5);
  CHECK(std::abs(r.hessian(0, 0) - 1.0) < 1e-3);
  CHECK(std::abs(r.hessian(1, 1) - 4.0) < 1e-3);
  CHECK(std::abs(r.hessian(0, 1)) < 1e-3);
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].f <= r.trace[k - 1].f);
}

TEST_CASE("optimize: serial armijo also converges") {
  const auto f = plain([](const Vector& x) { return std::cosh(x[0] - 1.0) + 2.0 * (x[1] + 0.5) * (x[1] + 0.5); });
  OptimizerConfig cfg;
  cfg.line_search.parallel = false;
  const auto r = optimize({f, {}}, Vec::Zero(2), cfg, {1, 1});
  CHECK(r.status == OptimizeStatus::Converged);
  CHECK(std::abs(r.theta[0] - 1.0) < 1e-4);
  CHECK(std::abs(r.theta[1] + 0.5) < 1e-4);
}

TEST_CASE("optimize: 1:1 and 8:1 produce identical iterates with pinned candidates") {
  const Mat a = (Mat(3, 3) << 5, 1, 0, 1, 2, 0.3, 0, 0.3, 1).finished();
  const auto f = [&](const Vector& x, const TaskContext&) {
    const Vec d = x - Vec::Constant(3, 0.7);
    return 0.5 * d.dot(a * d) + 0.1 * std::pow(d.squaredNorm(), 2) + hashed_noise(x, 11, 1e-6);
  };
  OptimizerConfig cfg;
  cfg.line_search.candidates = 8;
  const auto r1 = optimize({f, {}}, Vec::Zero(3), cfg, {1, 1});
  const auto r8 = optimize({f, {}}, Vec::Zero(3), cfg, {8, 1});
  REQUIRE(r1.trace.size() == r8.trace.size());
  for (std::size_t k = 0; k < r1.trace.size(); ++k)
    CHECK((r1.trace[k].theta - r8.trace[k].theta).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((r1.hessian - r8.hessian).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("optimize: on_accept sees theta0 and every accepted iterate in order") {
  std::vector<Vector> accepted;
  const auto f = plain([](const Vector& x) { return (x - Vec::Constant(2, 1.0)).squaredNorm(); });
  const auto r = optimize({f, [&](const Vector& x) { accepted.push_back(x); }}, Vec::Zero(2), {}, {1, 1});
  REQUIRE(!accepted.empty());
  CHECK(accepted.front() == Vec::Zero(2));
  CHECK(accepted.back() == r.theta);
}

TEST_CASE("optimize: conjugate scalar model") {
  SynthOptions o;
  o.kind = SynthKind::Conjugate;
  o.size = 1;
  o.seed = 7;
  const auto synth = synthesize(o);
  const double y = synth.data.y[0];
  // Golden-section oracle on the exact negative log posterior.
  auto exact = [y](double t) {
    const double v = 1.0 + std::exp(-t);
    return -(t - std::exp(t) - 0.5 * std::log(v) - 0.5 * y * y / v);
  };
  double lo = -10.0, hi = 10.0;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  while (hi - lo > 1e-12) {
    const double c = hi - r * (hi - lo), d = lo + r * (hi - lo);
    (exact(c) < exact(d) ? hi : lo) = exact(c) < exact(d) ? d : c;
  }
  const double mode = 0.5 * (lo + hi);

  LaplaceProblem problem(synth.model());
  LaplaceObjective obj(problem);
  const auto res = optimize(obj.objective(), Vec::Zero(1), {}, {1, 1});
  CHECK(res.status == OptimizeStatus::Converged);
  CHECK(std::abs(res.theta[0] - mode) < 1e-4);

  LaplaceObjective again(problem);
  const auto at_mode = optimize(again.objective(), Vec::Constant(1, mode), {}, {1, 1});
  CHECK(at_mode.status == OptimizeStatus::Converged);
  CHECK(at_mode.iterations <= 2);
}

TEST_CASE("optimize: mixed differences reach central on a badly scaled objective") {
  // Forward-difference error (eps * curvature / 2 = 5) dwarfs the switch threshold.
  const auto f = plain([](const Vector& x) { return 1000.0 * (x[0] - 0.3) * (x[0] - 0.3) + 2000.0 * x[1] * x[1]; });
  const auto r = optimize({f, {}}, Vec::Constant(2, 0.5), {}, {1, 1});
  CHECK(r.status == OptimizeStatus::Converged);
  CHECK(r.trace.back().central);
  CHECK(std::abs(r.theta[0] - 0.3) < 1e-5);
}
