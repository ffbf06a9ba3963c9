#pragma once

// Integration over theta around the mode and assembly of posterior
// marginals: pi(x_i | y) ~= sum_k w_k pi_G(x_i | theta_k, y).

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pinla/laplace.hpp"
#include "pinla/optimizer.hpp"

namespace pinla {

enum class Strategy { EmpiricalBayes, Grid };
Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy strategy);

struct GridConfig {
  double dz = 1.0;
  double threshold = 2.5;  // stop an axis once f - f* reaches this
  int max_steps = 5;
};

struct IntegrationPoint {
  Vector theta;
  Vector z;  // standardized coordinates
  double f = 0.0;
  double log_post = 0.0;  // -(f - f*)
  double weight = 0.0;
  int axis = -1;  // -1 for the mode
};

struct GridResult {
  std::vector<IntegrationPoint> points;  // mode first
  Vector eigenvalues;                    // of the Hessian, ascending
  Matrix eigenvectors;                   // columns, sign-normalized
  Index evaluations = 0;
  std::vector<std::string> warnings;
};

// theta(z) = theta* + V Lambda^{-1/2} z. Each wave evaluates one step along
// every still-open axis direction.
GridResult explore_grid(const ObjectiveFn& f, const Vector& theta_mode, double f_mode, const Matrix& hessian,
                        Strategy strategy, const ThreadBudget& budget, const GridConfig& cfg = {});

// w_k proportional to exp(log_post_k), normalized.
void normalize_weights(std::vector<IntegrationPoint>& points);

struct DensityTable {
  std::vector<double> x;
  std::vector<double> density;
};

struct HyperMarginal {
  std::string name;
  double mode = 0.0;
  double sd = 0.0;
  int axis = -1;  // eigen-axis the profile was taken along
  DensityTable profile;
};

std::vector<HyperMarginal> hyper_marginals(const GridResult& grid, const Vector& theta_mode, const Matrix& hessian,
                                           const std::vector<std::string>& names);

// Trapezoid integral of a table.
double trapezoid(const DensityTable& table);

struct LatentMoments {
  Vector mean;
  Vector variance;
};

struct LatentMarginals {
  Vector mean;
  Vector sd;
  std::vector<LatentMoments> per_point;  // in point order
  std::vector<double> weights;
};

// Mixture moments in fixed point order (two-pass variance).
LatentMarginals mix_moments(std::vector<LatentMoments> moments, const std::vector<double>& weights);

// Generic driver: `moments` runs as one level-1 task per point.
LatentMarginals latent_marginals(const std::function<LatentMoments(const Vector& theta, const TaskContext&)>& moments,
                                 const std::vector<IntegrationPoint>& points, const ThreadBudget& budget);

// Gaussian approximation and selected inversion at every point, warm-started
// from `warm_start`.
LatentMarginals latent_marginals(const LaplaceProblem& problem, const std::vector<IntegrationPoint>& points,
                                 const std::optional<Vector>& warm_start, const ThreadBudget& budget);

}  // namespace pinla
