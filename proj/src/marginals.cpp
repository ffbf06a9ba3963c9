#include "pinla/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pinla/selected_inverse.hpp"

namespace pinla {

Strategy parse_strategy(const std::string& name) {
  if (name == "eb") return Strategy::EmpiricalBayes;
  if (name == "grid") return Strategy::Grid;
  throw ConfigError("strategy", "expected eb or grid, got '" + name + "'");
}

std::string to_string(Strategy strategy) { return strategy == Strategy::EmpiricalBayes ? "eb" : "grid"; }

void normalize_weights(std::vector<IntegrationPoint>& points) {
  if (points.empty()) return;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& p : points) top = std::max(top, p.log_post);
  double total = 0.0;
  for (auto& p : points) total += (p.weight = std::exp(p.log_post - top));
  for (auto& p : points) p.weight /= total;
}

GridResult explore_grid(const ObjectiveFn& f, const Vector& theta_mode, double f_mode, const Matrix& hessian,
                        Strategy strategy, const ThreadBudget& budget, const GridConfig& cfg) {
  const Index d = theta_mode.size();
  if (hessian.rows() != d || hessian.cols() != d) throw DimensionError("Hessian size differs from theta");
  GridResult out;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (hessian + hessian.transpose()));
  out.eigenvalues = eig.eigenvalues();
  out.eigenvectors = eig.eigenvectors();
  if (!(out.eigenvalues.minCoeff() > 0.0)) throw DimensionError("Hessian at the mode is not positive definite");
  for (Index k = 0; k < d; ++k) {
    Index big = 0;
    out.eigenvectors.col(k).cwiseAbs().maxCoeff(&big);
    if (out.eigenvectors(big, k) < 0.0) out.eigenvectors.col(k) *= -1.0;
  }
  out.points.push_back({theta_mode, Vector::Zero(d), f_mode, 0.0, 1.0, -1});
  if (strategy == Strategy::EmpiricalBayes) return out;

  const Vector scale = out.eigenvalues.cwiseSqrt().cwiseInverse();
  struct Direction {
    Index axis;
    double sign;
  };
  std::vector<Direction> open;
  for (Index k = 0; k < d; ++k) {
    open.push_back({k, 1.0});
    open.push_back({k, -1.0});
  }
  for (int step = 1; step <= cfg.max_steps && !open.empty(); ++step) {
    std::vector<IntegrationPoint> wave;
    std::vector<std::function<double(const TaskContext&)>> tasks;
    for (const auto& dir : open) {
      IntegrationPoint p;
      p.z = Vector::Zero(d);
      p.z[dir.axis] = dir.sign * step * cfg.dz;
      p.theta = theta_mode + out.eigenvectors.col(dir.axis) * (scale[dir.axis] * p.z[dir.axis]);
      p.axis = static_cast<int>(dir.axis);
      wave.push_back(std::move(p));
    }
    for (const auto& p : wave)
      tasks.push_back([&f, &p](const TaskContext& ctx) {
        try {
          return f(p.theta, ctx);
        } catch (const std::exception&) {
          return std::numeric_limits<double>::quiet_NaN();
        }
      });
    const auto values = run_batch(tasks, budget);
    out.evaluations += static_cast<Index>(tasks.size());
    std::vector<Direction> still;
    for (std::size_t i = 0; i < wave.size(); ++i) {
      auto& p = wave[i];
      if (!std::isfinite(values[i])) {
        out.warnings.push_back("evaluation failed on axis " + std::to_string(p.axis) + " at z = " +
                               std::to_string(p.z[p.axis]) + "; point excluded");
        continue;
      }
      if (values[i] - f_mode >= cfg.threshold) continue;
      p.f = values[i];
      p.log_post = -(values[i] - f_mode);
      out.points.push_back(p);
      still.push_back(open[i]);
    }
    open = std::move(still);
  }
  normalize_weights(out.points);
  return out;
}

double trapezoid(const DensityTable& table) {
  double s = 0.0;
  for (std::size_t i = 1; i < table.x.size(); ++i)
    s += 0.5 * (table.density[i] + table.density[i - 1]) * (table.x[i] - table.x[i - 1]);
  return s;
}

std::vector<HyperMarginal> hyper_marginals(const GridResult& grid, const Vector& theta_mode, const Matrix& hessian,
                                           const std::vector<std::string>& names) {
  const Index d = theta_mode.size();
  if (static_cast<Index>(names.size()) != d) throw DimensionError("one name per hyperparameter required");
  const Matrix cov = hessian.llt().solve(Matrix::Identity(d, d));
  std::vector<HyperMarginal> out;
  for (Index j = 0; j < d; ++j) {
    HyperMarginal m;
    m.name = names[j];
    m.mode = theta_mode[j];
    m.sd = std::sqrt(cov(j, j));
    if (grid.points.size() > 1) {
      // Axis contributing most to var(theta_j).
      Index axis = 0;
      (grid.eigenvectors.row(j).transpose().array().square() / grid.eigenvalues.array()).maxCoeff(&axis);
      m.axis = static_cast<int>(axis);
      const double unit = grid.eigenvectors(j, axis) / std::sqrt(grid.eigenvalues[axis]);
      std::vector<std::pair<double, double>> rows;
      for (const auto& p : grid.points)
        if (p.axis < 0 || p.axis == axis) rows.push_back({theta_mode[j] + unit * p.z[axis], std::exp(p.log_post)});
      std::sort(rows.begin(), rows.end());
      if (rows.size() >= 2 && rows.back().first > rows.front().first) {
        for (const auto& [x, dens] : rows) {
          m.profile.x.push_back(x);
          m.profile.density.push_back(dens);
        }
        const double area = trapezoid(m.profile);
        for (auto& v : m.profile.density) v /= area;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

LatentMarginals mix_moments(std::vector<LatentMoments> moments, const std::vector<double>& weights) {
  if (moments.empty() || moments.size() != weights.size()) throw DimensionError("one weight per mixture component");
  const Index n = moments[0].mean.size();
  LatentMarginals out;
  out.mean = Vector::Zero(n);
  for (std::size_t k = 0; k < moments.size(); ++k) out.mean += weights[k] * moments[k].mean;
  Vector var = Vector::Zero(n);
  for (std::size_t k = 0; k < moments.size(); ++k)
    var += weights[k] * (moments[k].variance + (moments[k].mean - out.mean).cwiseAbs2());
  out.sd = var.cwiseMax(0.0).cwiseSqrt();
  out.per_point = std::move(moments);
  out.weights = weights;
  return out;
}

LatentMarginals latent_marginals(const std::function<LatentMoments(const Vector& theta, const TaskContext&)>& moments,
                                 const std::vector<IntegrationPoint>& points, const ThreadBudget& budget) {
  if (points.empty()) throw DimensionError("no integration points");
  std::vector<std::function<LatentMoments(const TaskContext&)>> tasks;
  std::vector<double> weights;
  for (const auto& p : points) {
    tasks.push_back([&moments, &p](const TaskContext& ctx) { return moments(p.theta, ctx); });
    weights.push_back(p.weight);
  }
  return mix_moments(run_batch(tasks, budget), weights);
}

LatentMarginals latent_marginals(const LaplaceProblem& problem, const std::vector<IntegrationPoint>& points,
                                 const std::optional<Vector>& warm_start, const ThreadBudget& budget) {
  return latent_marginals(
      [&](const Vector& theta, const TaskContext& ctx) {
        const auto approx = gaussian_approx(problem, theta, warm_start, ctx.l2);
        const auto inv = selected_inverse(approx.factor, ctx.l2);
        return LatentMoments{approx.mode, inv.variances()};
      },
      points, budget);
}

}  // namespace pinla
