#pragma once

// f(theta) = -log pi~(theta | y) through the Gaussian approximation of
// pi(x | theta, y) at its conditional mode:
//
//   f = -[log pi(theta) + log pi(x*|theta) + log pi(y|x*,theta) - log pi_G(x*|theta,y)].
//
// The prior and conditional precisions each keep one symbolic factorization
// for the lifetime of the LaplaceProblem.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pinla/cholesky.hpp"
#include "pinla/model.hpp"

namespace pinla {

struct LaplaceOptions {
  int max_iterations = 50;
  double tolerance = 1e-8;
  int max_halvings = 10;
  double curvature_floor = 1e-12;
  OrderingChoice ordering{};
};

struct GaussianApprox {
  Vector theta;
  Vector mode;
  SparseSymMatrix<double> precision;  // Q_c
  CholeskyFactor<double> factor;
  int iterations = 0;
  // log pi(x | theta, y) up to a constant, at the start and after each step.
  std::vector<double> kernel_trace;
};

struct ObjectiveValue {
  double f = 0.0;
  double log_prior_hyper = 0.0;
  double log_prior_latent = 0.0;  // log pi(x*|theta)
  double log_likelihood = 0.0;    // log pi(y|x*,theta)
  double log_gaussian = 0.0;      // log pi_G(x*|theta,y)
  int inner_iterations = 0;
  double seconds = 0.0;

  std::string to_json() const;
};

class LaplaceProblem {
 public:
  // Runs the two symbolic analyses.
  explicit LaplaceProblem(std::shared_ptr<const Model> model, LaplaceOptions options = {});

  const Model& model() const { return *model_; }
  const std::shared_ptr<const Model>& model_ptr() const { return model_; }
  const LaplaceOptions& options() const { return options_; }
  const std::shared_ptr<const SymbolicFactor>& prior_symbolic() const { return prior_symbolic_; }
  const std::shared_ptr<const SymbolicFactor>& conditional_symbolic() const { return cond_symbolic_; }
  double analysis_seconds() const { return analysis_seconds_; }

  // Gradient of log pi(x | theta, y) at x.
  Vector log_posterior_gradient(const SparseSymMatrix<double>& q_prior, const Vector& theta, const Vector& x) const;
  // log pi(x | theta, y) up to a theta-dependent constant.
  double log_posterior_kernel(const SparseSymMatrix<double>& q_prior, const Vector& theta, const Vector& x) const;

 private:
  std::shared_ptr<const Model> model_;
  LaplaceOptions options_;
  std::shared_ptr<const SymbolicFactor> prior_symbolic_;
  std::shared_ptr<const SymbolicFactor> cond_symbolic_;
  double analysis_seconds_ = 0.0;
};

// Newton iteration for the conditional mode. `threads` is the level-2 budget.
GaussianApprox gaussian_approx(const LaplaceProblem& problem, const Vector& theta,
                               const std::optional<Vector>& warm_start = std::nullopt, int threads = 1);

struct Evaluation {
  ObjectiveValue value;
  GaussianApprox approx;
};

Evaluation eval_objective(const LaplaceProblem& problem, const Vector& theta,
                          const std::optional<Vector>& warm_start = std::nullopt, int threads = 1);

}  // namespace pinla
