#include "pinla/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace pinla {

DiffScheme parse_diff_scheme(const std::string& name) {
  if (name == "forward") return DiffScheme::Forward;
  if (name == "central") return DiffScheme::Central;
  if (name == "mixed") return DiffScheme::Mixed;
  throw ConfigError("diff", "expected forward, central or mixed, got '" + name + "'");
}

std::string to_string(DiffScheme scheme) {
  switch (scheme) {
    case DiffScheme::Forward: return "forward";
    case DiffScheme::Central: return "central";
    case DiffScheme::Mixed: return "mixed";
  }
  return "?";
}

std::string to_string(OptimizeStatus status) {
  switch (status) {
    case OptimizeStatus::Converged: return "converged";
    case OptimizeStatus::MaxIterations: return "max-iters";
    case OptimizeStatus::Stalled: return "stalled";
  }
  return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_theta(const Vector& theta) {
  std::ostringstream os;
  os.precision(10);
  os << "(";
  for (Index i = 0; i < theta.size(); ++i) os << (i ? ", " : "") << theta[i];
  os << ")";
  return os.str();
}

// Evaluates f at every point as one level-1 batch; failures name the point.
std::vector<double> evaluate(const ObjectiveFn& f, const std::vector<Vector>& points, const ThreadBudget& budget) {
  std::vector<std::function<double(const TaskContext&)>> tasks;
  tasks.reserve(points.size());
  for (const auto& p : points) tasks.push_back([&f, &p](const TaskContext& ctx) { return f(p, ctx); });
  try {
    return run_batch(tasks, budget);
  } catch (const BatchError& e) {
    throw FitError("objective evaluation failed at theta = " + format_theta(points[e.slot()]) + ": " + e.what());
  }
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + mid));
}

}  // namespace

// ---- gradient ----------------------------------------------------------------------

GradientResult fd_gradient(const ObjectiveFn& f, const Vector& theta, DiffScheme scheme, double epsilon,
                           const ThreadBudget& budget, std::optional<double> f_at_theta) {
  const Index d = theta.size();
  if (d < 1) throw DimensionError("gradient of a zero-dimensional objective");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "finite-difference step must be positive");
  if (scheme == DiffScheme::Mixed) throw ConfigError("diff", "fd_gradient needs forward or central");
  const bool central = scheme == DiffScheme::Central;
  std::vector<Vector> points;
  if (!f_at_theta) points.push_back(theta);
  const std::size_t base = points.size();
  for (Index i = 0; i < d; ++i) {
    Vector plus = theta;
    plus[i] += epsilon;
    points.push_back(std::move(plus));
    if (central) {
      Vector minus = theta;
      minus[i] -= epsilon;
      points.push_back(std::move(minus));
    }
  }
  const auto values = evaluate(f, points, budget);
  GradientResult out;
  out.f = f_at_theta ? *f_at_theta : values[0];
  out.evaluations = static_cast<Index>(points.size());
  out.gradient.resize(d);
  for (Index i = 0; i < d; ++i) {
    if (central)
      out.gradient[i] = (values[base + 2 * i] - values[base + 2 * i + 1]) / (2.0 * epsilon);
    else
      out.gradient[i] = (values[base + i] - out.f) / epsilon;
  }
  if (!out.gradient.allFinite() || !std::isfinite(out.f))
    throw FitError("non-finite gradient at theta = " + format_theta(theta));
  return out;
}

// ---- robust regression ---------------------------------------------------------------

double RobustFit::argmin(double lo, double hi) const {
  double best = lo, best_q = (*this)(lo);
  if ((*this)(hi) < best_q) {
    best = hi;
    best_q = (*this)(hi);
  }
  if (coef[2] > 0.0) {
    const double s = -coef[1] / (2.0 * coef[2]);
    if (s > lo && s < hi && (*this)(s) <= best_q) best = s;
  }
  return best;
}

RobustFit robust_quadratic_fit(const std::vector<double>& t, const std::vector<double>& f, const RobustFitConfig& cfg) {
  const Index n = static_cast<Index>(t.size());
  if (static_cast<Index>(f.size()) != n) throw DimensionError("robust fit: t and f differ in length");
  if (n < 4) throw FitError("robust fit needs at least 4 points");
  std::vector<double> sorted = t;
  std::sort(sorted.begin(), sorted.end());
  if (std::unique(sorted.begin(), sorted.end()) - sorted.begin() < 3)
    throw FitError("robust fit needs at least 3 distinct abscissae");

  // Centered and scaled abscissae keep the normal equations well conditioned.
  const double lo = sorted.front(), hi = sorted.back();
  const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  Matrix x(n, 3);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const double u = (t[i] - mid) / half;
    x(i, 0) = 1.0;
    x(i, 1) = u;
    x(i, 2) = u * u;
    y[i] = f[i];
  }
  const double spread = y.maxCoeff() - y.minCoeff();

  auto solve = [&](const Vector& w) -> std::optional<Eigen::Vector3d> {
    if ((w.array() > 0.0).count() < 3) return std::nullopt;
    const Vector sw = w.cwiseSqrt();
    Eigen::ColPivHouseholderQR<Matrix> qr(sw.asDiagonal() * x);
    if (qr.rank() < 3) return std::nullopt;
    return Eigen::Vector3d(qr.solve(sw.asDiagonal() * y));
  };
  auto weights_for = [&](const Eigen::Vector3d& c, double& scale) {
    const Vector r = y - x * c;
    std::vector<double> rv(r.data(), r.data() + n);
    const double med = median(rv);
    for (auto& v : rv) v = std::abs(v - med);
    scale = std::max(median(rv), 1e-12 * spread);
    Vector w(n);
    for (Index i = 0; i < n; ++i) {
      const double z = scale > 0.0 ? r[i] / (cfg.cutoff * scale) : 0.0;
      w[i] = std::abs(z) <= 1.0 ? (1.0 - z * z) * (1.0 - z * z) : 0.0;
    }
    return w;
  };

  RobustFit out;
  Eigen::Vector3d c = *solve(Vector::Ones(n));
  if (spread > 0.0) {
    for (int it = 1; it <= cfg.max_iterations; ++it) {
      double scale = 0.0;
      const auto next = solve(weights_for(c, scale));
      if (!next) break;
      const double change = (*next - c).lpNorm<Eigen::Infinity>();
      c = *next;
      out.iterations = it;
      if (change < cfg.tolerance * (1.0 + c.lpNorm<Eigen::Infinity>())) break;
    }
    out.weights = weights_for(c, out.scale);
  } else {
    out.weights = Vector::Ones(n);
  }
  // Back to the original abscissa.
  out.coef[2] = c[2] / (half * half);
  out.coef[1] = c[1] / half - 2.0 * c[2] * mid / (half * half);
  out.coef[0] = c[0] - c[1] * mid / half + c[2] * mid * mid / (half * half);
  return out;
}

// ---- line searches ----------------------------------------------------------------------

LineSearchResult parallel_line_search(const ObjectiveFn& f, const Vector& theta, const Vector& p, double f_theta,
                                      double gamma, const LineSearchConfig& cfg, const ThreadBudget& budget) {
  if (!(gamma > 0.0)) throw ConfigError("gamma", "line-search interval must be positive");
  const int k = cfg.candidates > 0 ? cfg.candidates : std::max(budget.l1, cfg.min_candidates);
  LineSearchResult out;

  auto attempt = [&](double g) -> bool {
    std::vector<double> ts;
    for (int i = 1; i <= k; ++i) ts.push_back(g * i / k);
    ts.push_back(-cfg.stabilizer_near * g);
    ts.push_back(-cfg.stabilizer_far * g);
    std::vector<Vector> points;
    for (double t : ts) points.push_back(theta - t * p);
    const auto values = evaluate(f, points, budget);
    out.evaluations += static_cast<Index>(points.size());

    std::vector<double> ft{0.0}, fv{f_theta};
    for (std::size_t i = 0; i < ts.size(); ++i)
      if (std::isfinite(values[i])) {
        ft.push_back(ts[i]);
        fv.push_back(values[i]);
      }
    double t_hat = 0.0;
    try {
      t_hat = robust_quadratic_fit(ft, fv, cfg.fit).argmin(0.0, g);
    } catch (const FitError&) {
      t_hat = 0.0;
    }
    if (t_hat > 0.0) {
      double f_hat = kInf;
      const auto hit = std::find_if(ts.begin(), ts.begin() + k, [&](double t) { return std::abs(t - t_hat) <= 1e-12 * g; });
      if (hit != ts.begin() + k) {
        f_hat = values[hit - ts.begin()];
      } else {
        f_hat = evaluate(f, {theta - t_hat * p}, budget)[0];
        ++out.evaluations;
      }
      if (std::isfinite(f_hat) && f_hat < f_theta) {
        out.theta = theta - t_hat * p;
        out.f = f_hat;
        out.step = t_hat;
        return true;
      }
    }
    // Best raw candidate inside the interval.
    int best = -1;
    for (int i = 0; i < k; ++i)
      if (std::isfinite(values[i]) && (best < 0 || values[i] < values[best])) best = i;
    if (best >= 0 && values[best] < f_theta) {
      out.theta = points[best];
      out.f = values[best];
      out.step = ts[best];
      out.fallback = true;
      return true;
    }
    return false;
  };

  out.ok = attempt(gamma) || attempt(gamma / cfg.shrink);
  if (!out.ok) {
    out.theta = theta;
    out.f = f_theta;
  }
  return out;
}

LineSearchResult armijo_line_search(const ObjectiveFn& f, const Vector& theta, const Vector& p, double f_theta,
                                    const Vector& grad, const LineSearchConfig& cfg, const ThreadBudget& budget) {
  LineSearchResult out;
  const double slope = grad.dot(p);
  double t = 1.0;
  for (int i = 0; i < cfg.armijo_max; ++i, t *= cfg.armijo_factor) {
    const Vector trial = theta - t * p;
    const double ft = evaluate(f, {trial}, budget)[0];
    ++out.evaluations;
    if (std::isfinite(ft) && ft <= f_theta - cfg.armijo_c * t * slope) {
      out.ok = true;
      out.theta = trial;
      out.f = ft;
      out.step = t;
      return out;
    }
  }
  out.theta = theta;
  out.f = f_theta;
  return out;
}

// ---- BFGS ------------------------------------------------------------------------------

Matrix bfgs_update(const Matrix& h, const Vector& s, const Vector& y, bool* skipped) {
  const double sy = s.dot(y);
  if (!(sy > 1e-10 * s.norm() * y.norm())) {
    if (skipped) *skipped = true;
    return h;
  }
  if (skipped) *skipped = false;
  const double rho = 1.0 / sy;
  const Index d = s.size();
  const Matrix v = Matrix::Identity(d, d) - rho * y * s.transpose();
  Matrix next = v.transpose() * h * v + rho * s * s.transpose();
  return 0.5 * (next + next.transpose());
}

// ---- Hessian ----------------------------------------------------------------------------

Matrix fd_hessian(const ObjectiveFn& f, const Vector& theta, double epsilon, const ThreadBudget& budget,
                  std::optional<double> f_at_theta, Index* evaluations, double floor) {
  const Index d = theta.size();
  const double e = epsilon;
  std::vector<Vector> points;
  if (!f_at_theta) points.push_back(theta);
  const std::size_t base = points.size();
  auto shifted = [&](Index i, double a, Index j, double b) {
    Vector v = theta;
    v[i] += a;
    if (j >= 0) v[j] += b;
    return v;
  };
  for (Index i = 0; i < d; ++i) {
    points.push_back(shifted(i, e, -1, 0));
    points.push_back(shifted(i, -e, -1, 0));
  }
  const std::size_t cross = points.size();
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) {
      points.push_back(shifted(i, e, j, e));
      points.push_back(shifted(i, e, j, -e));
      points.push_back(shifted(i, -e, j, e));
      points.push_back(shifted(i, -e, j, -e));
    }
  const auto v = evaluate(f, points, budget);
  if (evaluations) *evaluations = static_cast<Index>(points.size());
  const double f0 = f_at_theta ? *f_at_theta : v[0];
  Matrix h(d, d);
  for (Index i = 0; i < d; ++i) h(i, i) = (v[base + 2 * i] - 2.0 * f0 + v[base + 2 * i + 1]) / (e * e);
  std::size_t c = cross;
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j, c += 4) h(i, j) = h(j, i) = (v[c] - v[c + 1] - v[c + 2] + v[c + 3]) / (4.0 * e * e);
  if (!h.allFinite()) throw FitError("non-finite Hessian at theta = " + format_theta(theta));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (h + h.transpose()));
  const Vector lambda = eig.eigenvalues().cwiseMax(floor);
  const Matrix floored = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (floored + floored.transpose());
}

// ---- outer loop -------------------------------------------------------------------------

OptimizeResult optimize(const Objective& objective, const Vector& theta0, const OptimizerConfig& cfg,
                        const ThreadBudget& budget) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  if (!theta0.allFinite()) throw InvalidData("initial theta is not finite");
  const Index d = theta0.size();
  const auto& f = objective.f;
  auto accept = [&](const Vector& th) {
    if (objective.on_accept) objective.on_accept(th);
  };
  auto ms_since = [](clock::time_point t) { return std::chrono::duration<double, std::milli>(clock::now() - t).count(); };

  OptimizeResult res;
  bool central = cfg.fd.scheme == DiffScheme::Central;
  auto scheme = [&] { return central ? DiffScheme::Central : DiffScheme::Forward; };

  auto t_iter = clock::now();
  auto g0 = fd_gradient(f, theta0, scheme(), cfg.fd.epsilon, budget);
  res.evaluations += g0.evaluations;
  Vector theta = theta0, grad = g0.gradient;
  double fval = g0.f;
  accept(theta);
  if (cfg.fd.scheme == DiffScheme::Mixed && !central && grad.lpNorm<Eigen::Infinity>() < cfg.fd.central_below) {
    central = true;
    const auto g = fd_gradient(f, theta, scheme(), cfg.fd.epsilon, budget, fval);
    res.evaluations += g.evaluations;
    g0.evaluations += g.evaluations;
    grad = g.gradient;
  }
  double gamma = 1.0;
  res.trace.push_back({0, fval, grad.lpNorm<Eigen::Infinity>(), 0.0, g0.evaluations, ms_since(t_iter), gamma,
                       central, theta});

  const bool settled0 = central || cfg.fd.scheme == DiffScheme::Forward;
  if (settled0 && grad.lpNorm<Eigen::Infinity>() <= cfg.gradient_tolerance) res.status = OptimizeStatus::Converged;

  // The first step is scaled so that |gamma p|_inf <= 1 on the log scale.
  Matrix h = Matrix::Identity(d, d) / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
  bool first_update = true;
  if (res.status != OptimizeStatus::Converged) res.status = OptimizeStatus::MaxIterations;
  for (int l = 1; l <= cfg.max_iterations && res.status != OptimizeStatus::Converged; ++l) {
    t_iter = clock::now();
    Vector p = h * grad;
    if (!(grad.dot(p) > 0.0)) {
      h = Matrix::Identity(d, d) / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
      p = h * grad;
    }
    const auto ls = cfg.line_search.parallel
                        ? parallel_line_search(f, theta, p, fval, gamma, cfg.line_search, budget)
                        : armijo_line_search(f, theta, p, fval, grad, cfg.line_search, budget);
    res.evaluations += ls.evaluations;
    Index evals = ls.evaluations;
    res.iterations = l;
    if (!ls.ok && cfg.fd.scheme == DiffScheme::Mixed && !central) {
      // Forward-difference error can exceed the switch threshold near the
      // mode; retry from the same iterate with central differences.
      central = true;
      const auto g = fd_gradient(f, theta, scheme(), cfg.fd.epsilon, budget, fval);
      res.evaluations += g.evaluations;
      evals += g.evaluations;
      grad = g.gradient;
      res.trace.push_back({l, fval, grad.lpNorm<Eigen::Infinity>(), 0.0, evals, ms_since(t_iter), gamma, central, theta});
      continue;
    }
    if (!ls.ok) {
      res.status = OptimizeStatus::Stalled;
      res.trace.push_back({l, fval, grad.lpNorm<Eigen::Infinity>(), 0.0, evals, ms_since(t_iter), gamma, central, theta});
      break;
    }
    accept(ls.theta);
    if (cfg.fd.scheme == DiffScheme::Mixed && grad.lpNorm<Eigen::Infinity>() < cfg.fd.central_below) central = true;
    auto g = fd_gradient(f, ls.theta, scheme(), cfg.fd.epsilon, budget, ls.f);
    res.evaluations += g.evaluations;
    evals += g.evaluations;
    if (cfg.fd.scheme == DiffScheme::Mixed && !central && g.gradient.lpNorm<Eigen::Infinity>() < cfg.fd.central_below) {
      central = true;
      g = fd_gradient(f, ls.theta, scheme(), cfg.fd.epsilon, budget, ls.f);
      res.evaluations += g.evaluations;
      evals += g.evaluations;
    }

    const Vector s = ls.theta - theta;
    const Vector y = g.gradient - grad;
    if (first_update && s.dot(y) > 0.0) {
      h = Matrix::Identity(d, d) * (s.dot(y) / y.dot(y));
      first_update = false;
    }
    h = bfgs_update(h, s, y);
    const double df = ls.f - fval;
    const double f_prev = fval;
    theta = ls.theta;
    fval = ls.f;
    grad = g.gradient;
    if (cfg.line_search.parallel)
      gamma = std::clamp(2.0 * ls.step, cfg.line_search.gamma_min, cfg.line_search.gamma_max);
    res.trace.push_back(
        {l, fval, grad.lpNorm<Eigen::Infinity>(), ls.step, evals, ms_since(t_iter), gamma, central, theta});

    const bool settled = central || cfg.fd.scheme == DiffScheme::Forward;
    if (settled && grad.lpNorm<Eigen::Infinity>() <= cfg.gradient_tolerance &&
        std::abs(df) <= cfg.f_tolerance * (1.0 + std::abs(f_prev))) {
      res.status = OptimizeStatus::Converged;
      break;
    }
  }

  res.theta = theta;
  res.f = fval;
  res.gradient = grad;
  res.bfgs_inverse = h;
  if (cfg.compute_hessian) {
    res.hessian = fd_hessian(f, theta, cfg.hessian_epsilon, budget, fval, &res.hessian_evaluations, cfg.eigen_floor);
    res.evaluations += res.hessian_evaluations;
  }
  res.seconds = std::chrono::duration<double>(clock::now() - start).count();
  return res;
}

}  // namespace pinla
