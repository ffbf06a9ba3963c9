#pragma once

// End-to-end fit: mode search, Hessian, integration points, marginals.

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinla/laplace.hpp"
#include "pinla/marginals.hpp"
#include "pinla/optimizer.hpp"

namespace pinla {

// f(theta) for the optimizer. Every evaluation is warm-started from the
// conditional mode of the most recently accepted iterate, which is only
// replaced between batches, so results do not depend on the schedule.
class LaplaceObjective {
 public:
  explicit LaplaceObjective(const LaplaceProblem& problem) : problem_(problem) {}

  double operator()(const Vector& theta, const TaskContext& ctx);
  void accept(const Vector& theta);
  Objective objective();

  const std::optional<Vector>& accepted_mode() const { return accepted_; }
  Index evaluations() const { return evaluations_.load(); }
  // Stop remembering modes (after the last accept).
  void freeze() { caching_ = false; }

 private:
  const LaplaceProblem& problem_;
  std::optional<Vector> accepted_;
  std::mutex mutex_;
  std::map<std::vector<double>, Vector> modes_;
  std::atomic<Index> evaluations_{0};
  bool caching_ = true;
};

struct FitOptions {
  Strategy strategy = Strategy::Grid;
  OptimizerConfig optimizer{};
  GridConfig grid{};
  LaplaceOptions laplace{};
};

struct FitTimings {
  double analysis_s = 0.0;
  double optimize_s = 0.0;  // includes the Hessian
  double grid_s = 0.0;
  double latent_s = 0.0;
  double total_s = 0.0;
};

struct FitResult {
  ThreadBudget budget;
  OptimizeResult optimum;
  GridResult grid;
  std::vector<HyperMarginal> hyper;
  LatentMarginals latent;
  Index n_fn_evals = 0;  // optimization phase, Hessian included
  double time_per_fn_s = 0.0;
  FitTimings timings;
  FactorStats prior_stats;
  FactorStats conditional_stats;
  long long analyze_calls = 0;
  std::vector<std::string> warnings;  // optimizer notes followed by grid warnings
};

FitResult fit(std::shared_ptr<const Model> model, const FitOptions& options, const ThreadBudget& budget);

// Output documents.
nlohmann::json summary_json(const Model& model, const FitOptions& options, const FitResult& result);
nlohmann::json hyper_json(const Model& model, const FitResult& result);
// marginals.csv, hyper.json, trace.jsonl and summary.json.
void write_fit_outputs(const std::string& dir, const Model& model, const FitOptions& options, const FitResult& result);

}  // namespace pinla
