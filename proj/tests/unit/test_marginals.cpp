#include <doctest.h>

#include <cmath>

#include "model_oracles.hpp"
#include "pinla/marginals.hpp"
#include "pinla/pipeline.hpp"
#include "pinla/selected_inverse.hpp"
#include "pinla/synth.hpp"

using namespace pinla;
using oracle::Mat;
using oracle::Vec;

namespace {

ObjectiveFn quadratic(const Mat& h, const Vec& center) {
  return [h, center](const Vector& x, const TaskContext&) {
    const Vec d = x - center;
    return 0.5 * d.dot(h * d);
  };
}

SynthResult small_leukemia(Index w = 8, Index h = 6, std::uint64_t seed = 5) {
  SynthOptions o;
  o.kind = SynthKind::LeukemiaLike;
  o.width = w;
  o.height = h;
  o.seed = seed;
  return synthesize(o);
}

}  // namespace

TEST_CASE("eb strategy keeps the mode only") {
  const Mat h = Mat::Identity(2, 2);
  const auto g = explore_grid(quadratic(h, Vec::Zero(2)), Vec::Zero(2), 0.0, h, Strategy::EmpiricalBayes, {1, 1});
  REQUIRE(g.points.size() == 1);
  CHECK(g.points[0].weight == 1.0);
  CHECK(g.points[0].axis == -1);
  CHECK(g.evaluations == 0);
}

TEST_CASE("grid on an exact quadratic: |z| = 1, 2 accepted, 3 rejected") {
  const Mat h = (Mat(2, 2) << 1, 0, 0, 4).finished();
  const Vec mode = (Vec(2) << 0.3, -0.2).finished();
  const auto g = explore_grid(quadratic(h, mode), mode, 0.0, h, Strategy::Grid, {1, 1});
  CHECK(g.points.size() == 9);
  for (const auto& p : g.points) CHECK(p.z.lpNorm<Eigen::Infinity>() <= 2.0);
  double total = 0.0;
  for (const auto& p : g.points) total += p.weight;
  CHECK(std::abs(total - 1.0) <= 1e-12);
  // Equal |z| gives equal weight.
  for (const auto& a : g.points)
    for (const auto& b : g.points)
      if (std::abs(a.z.norm() - b.z.norm()) < 1e-12) CHECK(std::abs(a.weight - b.weight) <= 1e-12);
  // theta(z) = mode + V Lambda^-1/2 z.
  for (const auto& p : g.points) {
    const Vec back = g.eigenvectors * g.eigenvalues.cwiseInverse().cwiseSqrt().asDiagonal() * p.z + mode;
    CHECK((back - p.theta).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK(p.log_post == doctest::Approx(-0.5 * p.z.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("grid respects the step cap") {
  const Mat h = Mat::Identity(1, 1);
  // Flat direction: every step stays under the threshold.
  const auto flat = [](const Vector&, const TaskContext&) { return 0.0; };
  GridConfig cfg;
  cfg.max_steps = 3;
  const auto g = explore_grid(flat, Vec::Zero(1), 0.0, h, Strategy::Grid, {1, 1}, cfg);
  CHECK(g.points.size() == 1 + 2 * 3);
}

TEST_CASE("eigenvectors are sign-normalized") {
  const Mat h = (Mat(2, 2) << 2, -1, -1, 3).finished();
  const auto g = explore_grid(quadratic(h, Vec::Zero(2)), Vec::Zero(2), 0.0, h, Strategy::Grid, {1, 1});
  for (Index k = 0; k < 2; ++k) {
    Index arg;
    g.eigenvectors.col(k).cwiseAbs().maxCoeff(&arg);
    CHECK(g.eigenvectors(arg, k) > 0.0);
  }
  CHECK(g.eigenvalues[0] <= g.eigenvalues[1]);
}

TEST_CASE("failed evaluations become warnings") {
  const Mat h = Mat::Identity(1, 1);
  const auto f = [](const Vector& x, const TaskContext&) -> double {
    if (x[0] > 1.5) throw InnerDivergence("no");
    return 0.5 * x[0] * x[0];
  };
  const auto g = explore_grid(f, Vec::Zero(1), 0.0, h, Strategy::Grid, {1, 1});
  CHECK(g.points.size() == 4);  // mode, +1, -1, -2
  CHECK(g.warnings.size() == 1);
}

TEST_CASE("hyper marginals of a quadratic: sd from the inverse Hessian, unit-mass profiles") {
  const Mat h = (Mat(2, 2) << 1, 0, 0, 4).finished();
  const auto g = explore_grid(quadratic(h, Vec::Zero(2)), Vec::Zero(2), 0.0, h, Strategy::Grid, {1, 1});
  const auto hm = hyper_marginals(g, Vec::Zero(2), h, {"a", "b"});
  REQUIRE(hm.size() == 2);
  CHECK(hm[0].sd == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(hm[1].sd == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(hm[0].name == "a");
  for (const auto& m : hm) {
    CHECK(m.profile.x.size() == 5);
    CHECK(std::abs(trapezoid(m.profile) - 1.0) < 1e-6);
    for (std::size_t i = 1; i < m.profile.x.size(); ++i) CHECK(m.profile.x[i] > m.profile.x[i - 1]);
  }
  const auto eb = explore_grid(quadratic(h, Vec::Zero(2)), Vec::Zero(2), 0.0, h, Strategy::EmpiricalBayes, {1, 1});
  const auto hm_eb = hyper_marginals(eb, Vec::Zero(2), h, {"a", "b"});
  CHECK(hm_eb[1].sd == doctest::Approx(0.5));
  CHECK(hm_eb[1].profile.x.empty());
}

TEST_CASE("mixture moments: single component and the symmetric pair identity") {
  LatentMoments a{Vec::Constant(1, 2.0), Vec::Constant(1, 0.25)};
  const auto one = mix_moments({a}, {1.0});
  CHECK(one.mean[0] == 2.0);
  CHECK(one.sd[0] == 0.5);

  const double mu = 1.0, off = 0.3, sigma = 0.4;
  LatentMoments p{Vec::Constant(1, mu + off), Vec::Constant(1, sigma * sigma)};
  LatentMoments q{Vec::Constant(1, mu - off), Vec::Constant(1, sigma * sigma)};
  const auto pair = mix_moments({p, q}, {0.5, 0.5});
  CHECK(pair.mean[0] == doctest::Approx(mu).epsilon(1e-15));
  CHECK(pair.sd[0] == doctest::Approx(std::sqrt(sigma * sigma + off * off)).epsilon(1e-14));
}

TEST_CASE("mixture variance decomposition matches the raw second moment") {
  std::vector<LatentMoments> ms;
  std::vector<double> w{0.1, 0.5, 0.15, 0.25};
  for (int k = 0; k < 4; ++k) ms.push_back({Vec::Random(6), Vec::Random(6).cwiseAbs()});
  const auto mix = mix_moments(ms, w);
  for (Index i = 0; i < 6; ++i) {
    double m1 = 0, m2 = 0;
    for (int k = 0; k < 4; ++k) {
      m1 += w[k] * ms[k].mean[i];
      m2 += w[k] * (ms[k].variance[i] + ms[k].mean[i] * ms[k].mean[i]);
    }
    CHECK(mix.mean[i] == doctest::Approx(m1).epsilon(1e-14));
    CHECK(mix.sd[i] * mix.sd[i] == doctest::Approx(m2 - m1 * m1).epsilon(1e-12));
  }
}

TEST_CASE("normalize_weights sums to one even for large log densities") {
  std::vector<IntegrationPoint> pts(3);
  pts[0].log_post = -1000.0;
  pts[1].log_post = -1001.0;
  pts[2].log_post = -1003.0;
  normalize_weights(pts);
  CHECK(std::abs(pts[0].weight + pts[1].weight + pts[2].weight - 1.0) <= 1e-12);
  CHECK(pts[0].weight / pts[1].weight == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("gaussian likelihood with eb reproduces the dense conditional posterior") {
  const auto r = small_leukemia();
  const auto model = r.model();
  LaplaceProblem problem(model);
  IntegrationPoint mode;
  mode.theta = r.theta_true;
  mode.weight = 1.0;
  const auto lm = latent_marginals(problem, {mode}, std::nullopt, {1, 1});
  const auto ref = oracle::dense_gaussian_posterior(model->spec(), model->data(), r.theta_true);
  CHECK((lm.mean - ref.mean).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((lm.sd - ref.covariance.diagonal().cwiseSqrt()).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("K = 1 latent sd is the selected-inverse sd at the mode") {
  const auto r = small_leukemia();
  LaplaceProblem problem(r.model());
  IntegrationPoint mode;
  mode.theta = r.theta_true;
  mode.weight = 1.0;
  const auto lm = latent_marginals(problem, {mode}, std::nullopt, {1, 1});
  const auto g = gaussian_approx(problem, r.theta_true);
  const auto sigma = selected_inverse(g.factor);
  for (Index i = 0; i < lm.sd.size(); ++i) CHECK(lm.sd[i] == std::sqrt(sigma.variances()[i]));
}

TEST_CASE("conjugate model with scalar theta: hyper sd within 3% of the exact quadrature sd") {
  // y_i = x_i + e_i, so y_i ~ N(0, 1 + exp(-theta)) independently.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthOptions o;
    o.kind = SynthKind::Conjugate;
    o.size = 400;
    o.seed = seed;
    const auto s = synthesize(o);
    const double yy = s.data.y.squaredNorm();
    const double m = static_cast<double>(s.data.y.size());
    auto log_post = [&](double t) {
      const double v = 1.0 + std::exp(-t);
      return t - std::exp(t) - 0.5 * m * std::log(v) - 0.5 * yy / v;
    };
    double peak = -1e300;
    for (double t = -30.0; t < 10.0; t += 1e-3) peak = std::max(peak, log_post(t));
    double m0 = 0, m1 = 0, m2 = 0;
    for (double t = -30.0; t < 10.0; t += 1e-3) {
      const double p = std::exp(log_post(t) - peak);
      m0 += p;
      m1 += p * t;
      m2 += p * t * t;
    }
    const double exact_sd = std::sqrt(m2 / m0 - (m1 / m0) * (m1 / m0));

    const auto fit_result = fit(s.model(), FitOptions{}, {1, 1});
    REQUIRE(fit_result.hyper.size() == 1);
    CHECK(std::abs(fit_result.hyper[0].sd - exact_sd) <= 0.03 * exact_sd);
  }
}

TEST_CASE("latent marginals are identical across budgets") {
  const auto r = small_leukemia(6, 5, 9);
  const auto model = r.model();
  FitOptions opt;
  const auto a = fit(model, opt, {1, 1});
  const auto b = fit(model, opt, {3, 2});
  CHECK((a.optimum.theta - b.optimum.theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.latent.mean - b.latent.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.latent.sd - b.latent.sd).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.latent.sd.array() > 0.0).all());
  CHECK(a.grid.points.size() > 1);
}
