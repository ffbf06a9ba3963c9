#pragma once

// Quasi-Newton minimization of f(theta) with level-1 parallel finite
// differences and a parallel line search fitted by robust quadratic
// regression. Iterates follow theta_{l+1} = theta_l - t p_l with p_l = H_l g_l.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pinla/common.hpp"
#include "pinla/parallel.hpp"

namespace pinla {

// Evaluated inside a level-1 task; ctx.l2 is the inner budget.
using ObjectiveFn = std::function<double(const Vector& theta, const TaskContext& ctx)>;

struct Objective {
  ObjectiveFn f;
  // Called by the optimizer after each accepted iterate (and once for theta0),
  // from the dispatching thread, between batches.
  std::function<void(const Vector& theta)> on_accept;
};

enum class DiffScheme { Forward, Central, Mixed };
DiffScheme parse_diff_scheme(const std::string& name);
std::string to_string(DiffScheme scheme);

struct FDConfig {
  DiffScheme scheme = DiffScheme::Mixed;
  double epsilon = 5e-3;
  // Mixed: switch to central differences (for good) once |g|_inf drops below this.
  double central_below = 0.1;
};

struct GradientResult {
  Vector gradient;
  double f = 0.0;
  Index evaluations = 0;
};

// One batch: f(theta) (unless supplied) and d or 2d perturbed points.
// `scheme` must be Forward or Central.
GradientResult fd_gradient(const ObjectiveFn& f, const Vector& theta, DiffScheme scheme, double epsilon,
                           const ThreadBudget& budget, std::optional<double> f_at_theta = std::nullopt);

struct RobustFitConfig {
  int max_iterations = 20;
  double cutoff = 6.0;
  double tolerance = 1e-10;
};

// q(t) = c0 + c1 t + c2 t^2.
struct RobustFit {
  Eigen::Vector3d coef = Eigen::Vector3d::Zero();
  Vector weights;
  double scale = 0.0;  // median absolute deviation of the final residuals
  int iterations = 0;

  double operator()(double t) const { return coef[0] + t * (coef[1] + t * coef[2]); }
  // argmin of q over [lo, hi].
  double argmin(double lo, double hi) const;
};

// IRLS with bisquare weights. Throws FitError with fewer than 4 points or
// fewer than 3 distinct abscissae.
RobustFit robust_quadratic_fit(const std::vector<double>& t, const std::vector<double>& f,
                               const RobustFitConfig& cfg = {});

struct LineSearchConfig {
  bool parallel = true;
  // Candidates inside the interval; 0 means max(l1, min_candidates).
  int candidates = 0;
  int min_candidates = 5;
  double stabilizer_near = 0.05;  // fractions of gamma, taken in the +p direction
  double stabilizer_far = 0.10;
  double gamma_min = 0.25;
  double gamma_max = 4.0;
  double shrink = 4.0;
  RobustFitConfig fit{};
  // Serial backtracking.
  double armijo_c = 1e-4;
  double armijo_factor = 0.5;
  int armijo_max = 30;
};

struct LineSearchResult {
  bool ok = false;
  Vector theta;
  double f = 0.0;
  double step = 0.0;  // t with theta_new = theta - t p
  Index evaluations = 0;
  bool fallback = false;
};

LineSearchResult parallel_line_search(const ObjectiveFn& f, const Vector& theta, const Vector& p, double f_theta,
                                      double gamma, const LineSearchConfig& cfg, const ThreadBudget& budget);

// Backtracking from t = 1 until f(theta - t p) <= f - c t g^T p.
LineSearchResult armijo_line_search(const ObjectiveFn& f, const Vector& theta, const Vector& p, double f_theta,
                                    const Vector& grad, const LineSearchConfig& cfg, const ThreadBudget& budget);

// Inverse-Hessian BFGS update. Returns h unchanged when s^T y <= 1e-10 |s| |y|.
Matrix bfgs_update(const Matrix& h, const Vector& s, const Vector& y, bool* skipped = nullptr);

// Central second differences in one batch, symmetrized; eigenvalues floored
// at `floor`.
Matrix fd_hessian(const ObjectiveFn& f, const Vector& theta, double epsilon, const ThreadBudget& budget,
                  std::optional<double> f_at_theta = std::nullopt, Index* evaluations = nullptr,
                  double floor = 1e-8);

struct OptimizerConfig {
  FDConfig fd{};
  LineSearchConfig line_search{};
  double gradient_tolerance = 5e-4;
  double f_tolerance = 1e-6;
  int max_iterations = 200;
  double hessian_epsilon = 5e-3;
  double eigen_floor = 1e-8;
  bool compute_hessian = true;
};

enum class OptimizeStatus { Converged, MaxIterations, Stalled };
std::string to_string(OptimizeStatus status);

struct TraceRow {
  int iter = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  Index n_evals = 0;  // evaluations spent in this iteration
  double wall_ms = 0.0;
  double gamma = 0.0;
  bool central = false;
  Vector theta;
};

struct OptimizeResult {
  Vector theta;
  double f = 0.0;
  Vector gradient;
  Matrix hessian;       // finite-difference Hessian at theta (eigen-floored)
  Matrix bfgs_inverse;  // final H_l
  OptimizeStatus status = OptimizeStatus::MaxIterations;
  int iterations = 0;
  Index evaluations = 0;
  Index hessian_evaluations = 0;
  double seconds = 0.0;
  std::vector<TraceRow> trace;
};

OptimizeResult optimize(const Objective& objective, const Vector& theta0, const OptimizerConfig& cfg,
                        const ThreadBudget& budget);

}  // namespace pinla
