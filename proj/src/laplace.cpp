#include "pinla/laplace.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace pinla {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string ObjectiveValue::to_json() const {
  return nlohmann::json{{"f", f},
                        {"log_prior_hyper", log_prior_hyper},
                        {"log_prior_latent", log_prior_latent},
                        {"log_likelihood", log_likelihood},
                        {"log_gaussian", log_gaussian},
                        {"inner_iterations", inner_iterations},
                        {"seconds", seconds}}
      .dump();
}

LaplaceProblem::LaplaceProblem(std::shared_ptr<const Model> model, LaplaceOptions options)
    : model_(std::move(model)), options_(options) {
  if (options_.max_iterations < 1) throw ConfigError("max_iterations", "must be at least 1");
  if (!(options_.tolerance > 0.0)) throw ConfigError("tolerance", "must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  prior_symbolic_ = analyze(model_->prior_pattern(), options_.ordering);
  cond_symbolic_ = analyze(model_->conditional_pattern(), options_.ordering);
  analysis_seconds_ = seconds_since(t0);
}

Vector LaplaceProblem::log_posterior_gradient(const SparseSymMatrix<double>& q_prior, const Vector& theta,
                                              const Vector& x) const {
  const auto terms = model_->likelihood(model_->design().multiply(x), theta);
  return model_->design().multiply_transpose(terms.d1) - q_prior.multiply(x);
}

double LaplaceProblem::log_posterior_kernel(const SparseSymMatrix<double>& q_prior, const Vector& theta,
                                            const Vector& x) const {
  return model_->log_likelihood(model_->design().multiply(x), theta) - 0.5 * x.dot(q_prior.multiply(x));
}

GaussianApprox gaussian_approx(const LaplaceProblem& problem, const Vector& theta,
                               const std::optional<Vector>& warm_start, int threads) {
  const Model& model = problem.model();
  const auto& opt = problem.options();
  const auto& a = model.design();
  const Index n = model.latent_dim();
  model.check_theta(theta);
  if (warm_start && warm_start->size() != n) throw DimensionError("warm start length differs from latent dimension");

  GaussianApprox out;
  out.theta = theta;
  Vector x = warm_start ? *warm_start : Vector::Zero(n);
  const auto qp = model.prior_precision(theta);
  auto kernel = [&](const Vector& v, LikelihoodTerms& terms) {
    terms = model.likelihood(a.multiply(v), theta);
    return terms.loglik - 0.5 * v.dot(qp.multiply(v));
  };
  LikelihoodTerms terms;
  double value = kernel(x, terms);
  const bool quadratic = model.spec().family == Family::Gaussian;
  out.kernel_trace.push_back(value);

  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Vector w = (-terms.d2).cwiseMax(opt.curvature_floor);
    out.precision = model.conditional_precision(qp, w);
    out.factor = factorize(problem.conditional_symbolic(), out.precision, threads);
    const Vector grad = a.multiply_transpose(terms.d1) - qp.multiply(x);
    const Vector delta = solve(out.factor, grad);
    out.iterations = it;

    double step = 1.0;
    Vector next = x + delta;
    LikelihoodTerms next_terms;
    double next_value = kernel(next, next_terms);
    if (!quadratic) {
      const double slack = 1e-12 * (1.0 + std::abs(value));
      for (int h = 0; h < opt.max_halvings && !(next_value >= value - slack); ++h) {
        step *= 0.5;
        next = x + step * delta;
        next_value = kernel(next, next_terms);
      }
    }
    x = std::move(next);
    terms = std::move(next_terms);
    value = next_value;
    out.kernel_trace.push_back(value);
    if (quadratic || step * delta.lpNorm<Eigen::Infinity>() <= opt.tolerance * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      out.mode = std::move(x);
      return out;
    }
  }
  std::ostringstream msg;
  msg << "inner Newton iteration did not converge in " << opt.max_iterations << " iterations at theta = ("
      << theta.transpose() << ")";
  throw InnerDivergence(msg.str());
}

Evaluation eval_objective(const LaplaceProblem& problem, const Vector& theta, const std::optional<Vector>& warm_start,
                          int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const Model& model = problem.model();
  Evaluation ev;
  ev.approx = gaussian_approx(problem, theta, warm_start, threads);
  const Vector& x = ev.approx.mode;
  const double n = static_cast<double>(model.latent_dim());
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  const auto qp = model.prior_precision(theta);
  const auto prior_factor = factorize(problem.prior_symbolic(), qp, threads);
  auto& v = ev.value;
  v.log_prior_hyper = model.log_prior_hyper(theta);
  v.log_prior_latent = 0.5 * prior_factor.log_det() - 0.5 * n * log_2pi - 0.5 * x.dot(qp.multiply(x));
  v.log_likelihood = model.log_likelihood(model.design().multiply(x), theta);
  v.log_gaussian = 0.5 * ev.approx.factor.log_det() - 0.5 * n * log_2pi;
  v.f = -(v.log_prior_hyper + v.log_prior_latent + v.log_likelihood - v.log_gaussian);
  v.inner_iterations = ev.approx.iterations;
  v.seconds = seconds_since(t0);
  if (!std::isfinite(v.f)) throw InvalidData("objective is not finite");
  return ev;
}

}  // namespace pinla
