#include "pinla/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pinla/io.hpp"

namespace pinla {

using nlohmann::json;

namespace {

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_std(m.row(i).transpose()));
  return rows;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---- objective adapter -----------------------------------------------------------------

double LaplaceObjective::operator()(const Vector& theta, const TaskContext& ctx) {
  auto ev = eval_objective(problem_, theta, accepted_, ctx.l2);
  ++evaluations_;
  if (caching_) {
    std::lock_guard lock(mutex_);
    modes_[to_std(theta)] = std::move(ev.approx.mode);
  }
  return ev.value.f;
}

void LaplaceObjective::accept(const Vector& theta) {
  std::lock_guard lock(mutex_);
  const auto it = modes_.find(to_std(theta));
  if (it != modes_.end()) accepted_ = std::move(it->second);
  modes_.clear();
}

Objective LaplaceObjective::objective() {
  return {[this](const Vector& theta, const TaskContext& ctx) { return (*this)(theta, ctx); },
          [this](const Vector& theta) { accept(theta); }};
}

// ---- fit ------------------------------------------------------------------------------

FitResult fit(std::shared_ptr<const Model> model, const FitOptions& options, const ThreadBudget& budget) {
  const auto start = std::chrono::steady_clock::now();
  const long long calls_before = analyze_calls();
  FitResult r;
  r.budget = budget;

  LaplaceProblem problem(model, options.laplace);
  r.timings.analysis_s = problem.analysis_seconds();
  r.prior_stats = problem.prior_symbolic()->stats();
  r.conditional_stats = problem.conditional_symbolic()->stats();

  LaplaceObjective objective(problem);
  auto t0 = std::chrono::steady_clock::now();
  OptimizerConfig opt = options.optimizer;
  opt.compute_hessian = true;
  r.optimum = optimize(objective.objective(), model->initial_theta(), opt, budget);
  r.timings.optimize_s = seconds_since(t0);
  r.n_fn_evals = r.optimum.evaluations;
  r.time_per_fn_s = r.n_fn_evals > 0 ? r.timings.optimize_s / static_cast<double>(r.n_fn_evals) : 0.0;
  objective.freeze();
  if (r.optimum.status != OptimizeStatus::Converged) {
    const auto& tr = r.optimum.trace;
    double last_df = 0.0;
    for (std::size_t k = tr.size(); k-- > 1;)
      if (tr[k].step > 0.0) {
        last_df = tr[k - 1].f - tr[k].f;
        break;
      }
    std::ostringstream os;
    os << "optimizer " << to_string(r.optimum.status) << " with |grad|_inf = " << r.optimum.gradient.lpNorm<Eigen::Infinity>()
       << "; last accepted decrease in f was " << last_df;
    if (last_df <= opt.f_tolerance * (1.0 + std::abs(r.optimum.f)))
      os << ", below the f tolerance, so the gradient is likely at finite-difference resolution";
    r.warnings.push_back(os.str());
  }

  const auto fn = objective.objective().f;
  t0 = std::chrono::steady_clock::now();
  r.grid = explore_grid(fn, r.optimum.theta, r.optimum.f, r.optimum.hessian, options.strategy, budget, options.grid);
  r.hyper = hyper_marginals(r.grid, r.optimum.theta, r.optimum.hessian, model->spec().hyper_names());
  r.timings.grid_s = seconds_since(t0);
  r.warnings.insert(r.warnings.end(), r.grid.warnings.begin(), r.grid.warnings.end());

  t0 = std::chrono::steady_clock::now();
  r.latent = latent_marginals(problem, r.grid.points, objective.accepted_mode(), budget);
  r.timings.latent_s = seconds_since(t0);
  r.analyze_calls = analyze_calls() - calls_before;
  r.timings.total_s = seconds_since(start);
  return r;
}

// ---- documents ---------------------------------------------------------------------------

json summary_json(const Model& model, const FitOptions& options, const FitResult& r) {
  const auto& spec = model.spec();
  return json{
      {"theta_names", spec.hyper_names()},
      {"theta_mode", to_std(r.optimum.theta)},
      {"f_mode", r.optimum.f},
      {"status", to_string(r.optimum.status)},
      {"iterations", r.optimum.iterations},
      {"n_fn_evals", r.n_fn_evals},
      {"n_hessian_evals", r.optimum.hessian_evaluations},
      {"n_grid_evals", r.grid.evaluations},
      {"n_points", r.grid.points.size()},
      {"time_per_fn_s", r.time_per_fn_s},
      {"total_s", r.timings.total_s},
      {"timings",
       {{"analysis_s", r.timings.analysis_s},
        {"optimize_s", r.timings.optimize_s},
        {"grid_s", r.timings.grid_s},
        {"latent_s", r.timings.latent_s}}},
      {"budget", to_string(r.budget)},
      {"strategy", to_string(options.strategy)},
      {"diff", to_string(options.optimizer.fd.scheme)},
      {"linesearch", options.optimizer.line_search.parallel ? "parallel" : "serial"},
      {"latent_dim", model.latent_dim()},
      {"observations", model.data().size()},
      {"analyze_calls", r.analyze_calls},
      {"factor", {{"prior", json::parse(r.prior_stats.to_json())}, {"conditional", json::parse(r.conditional_stats.to_json())}}},
      {"warnings", r.warnings}};
}

json hyper_json(const Model& model, const FitResult& r) {
  json hyper = json::array();
  for (const auto& h : r.hyper)
    hyper.push_back({{"name", h.name},
                     {"mode", h.mode},
                     {"sd", h.sd},
                     {"axis", h.axis},
                     {"profile", {{"x", h.profile.x}, {"density", h.profile.density}}}});
  json points = json::array();
  for (const auto& p : r.grid.points)
    points.push_back({{"theta", to_std(p.theta)},
                      {"z", to_std(p.z)},
                      {"f", p.f},
                      {"log_post", p.log_post},
                      {"weight", p.weight},
                      {"axis", p.axis}});
  return json{{"theta_names", model.spec().hyper_names()},
              {"hyperparameters", hyper},
              {"hessian", to_json(r.optimum.hessian)},
              {"eigenvalues", to_std(r.grid.eigenvalues)},
              {"points", points}};
}

void write_fit_outputs(const std::string& dir, const Model& model, const FitOptions& options, const FitResult& r) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  std::ostringstream csv;
  write_marginals_csv(csv, model.spec(), r.latent);
  write_text((base / "marginals.csv").string(), csv.str());
  write_json((base / "hyper.json").string(), hyper_json(model, r));
  std::ostringstream trace;
  for (const auto& row : r.optimum.trace) trace << trace_row_json(row).dump() << '\n';
  write_text((base / "trace.jsonl").string(), trace.str());
  write_json((base / "summary.json").string(), summary_json(model, options, r));
}

}  // namespace pinla
