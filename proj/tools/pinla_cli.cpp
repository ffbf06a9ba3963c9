// pinla: fit, bench, synth and inspect front end.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pinla/cholesky.hpp"
#include "pinla/io.hpp"
#include "pinla/parallel.hpp"
#include "pinla/pipeline.hpp"
#include "pinla/synth.hpp"

namespace {

using nlohmann::json;
using namespace pinla;

struct RunArgs {
  std::string model;
  std::string data;
  std::string threads;
  std::string strategy = "grid";
  std::string diff = "mixed";
  std::string linesearch = "parallel";
  std::string out = "out";
  std::uint64_t seed = 1;
  int candidates = 0;
};

void add_run_flags(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--model", a.model, "model JSON")->required();
  cmd->add_option("--data", a.data, "data CSV")->required();
  cmd->add_option("--strategy", a.strategy, "eb | grid");
  cmd->add_option("--diff", a.diff, "forward | central | mixed");
  cmd->add_option("--linesearch", a.linesearch, "parallel | serial");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--seed", a.seed, "recorded in the summary; the fit itself is deterministic");
  cmd->add_option("--candidates", a.candidates, "line-search candidates (0: max(l1, 5))");
}

FitOptions fit_options(const RunArgs& a) {
  FitOptions o;
  o.strategy = parse_strategy(a.strategy);
  o.optimizer.fd.scheme = parse_diff_scheme(a.diff);
  if (a.linesearch == "parallel") o.optimizer.line_search.parallel = true;
  else if (a.linesearch == "serial") o.optimizer.line_search.parallel = false;
  else throw ConfigError("linesearch", "expected parallel or serial, got '" + a.linesearch + "'");
  if (a.candidates < 0) throw ConfigError("candidates", "must be non-negative");
  o.optimizer.line_search.candidates = a.candidates;
  return o;
}

ThreadBudget parse_budget_flag(const std::string& text, const std::string& key) {
  try {
    return parse_budget(text);
  } catch (const ConfigError& e) {
    throw ConfigError(key, e.what());
  }
}

// --threads beats PINLA_THREADS beats the core-count default.
ThreadBudget resolve_budget(const std::string& flag, Index n_hyper) {
  if (!flag.empty()) return parse_budget_flag(flag, "threads");
  return budget_from_env(default_budget(n_hyper));
}

int report(const std::exception& e, const std::string& out_dir) {
  const json err = error_json(e);
  std::cerr << err.dump() << '\n';
  if (!out_dir.empty()) {
    try {
      std::filesystem::create_directories(out_dir);
      write_json((std::filesystem::path(out_dir) / "error.json").string(), err);
    } catch (...) {
    }
  }
  return err["error"] == "config" ? 2 : 1;
}

int cmd_fit(const RunArgs& a) {
  const auto options = fit_options(a);
  const auto model = load_model(a.model, a.data);
  const auto budget = resolve_budget(a.threads, model->n_hyper());
  const auto result = fit(model, options, budget);
  write_fit_outputs(a.out, *model, options, result);
  auto summary = summary_json(*model, options, result);
  summary["seed"] = a.seed;
  write_json((std::filesystem::path(a.out) / "summary.json").string(), summary);
  std::cout << "theta_mode";
  for (Index j = 0; j < result.optimum.theta.size(); ++j) std::cout << ' ' << format_double(result.optimum.theta[j]);
  std::cout << "\nn_fn_evals " << result.n_fn_evals << "\ntime_per_fn_s " << format_double(result.time_per_fn_s)
            << "\nstatus " << to_string(result.optimum.status) << '\n';
  return 0;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) items.push_back(item);
  return items;
}

int cmd_bench(const RunArgs& a, const std::string& sweep) {
  const auto options = fit_options(a);
  const auto model = load_model(a.model, a.data);
  std::vector<ThreadBudget> budgets;
  for (const auto& item : split_list(sweep)) budgets.push_back(parse_budget_flag(item, "sweep"));
  if (budgets.empty()) throw ConfigError("sweep", "no budgets given");

  struct Row {
    ThreadBudget budget;
    std::optional<FitResult> result;
    std::string error;
  };
  std::vector<Row> rows;
  for (const auto& b : budgets) {
    Row row{b, std::nullopt, ""};
    try {
      row.result = fit(model, options, b);
    } catch (const std::exception& e) {
      row.error = error_json(e)["message"].get<std::string>();
    }
    rows.push_back(std::move(row));
  }

  std::optional<double> base;
  for (const auto& r : rows)
    if (r.budget == ThreadBudget{1, 1} && r.result) base = r.result->time_per_fn_s;

  std::ostringstream csv;
  csv << "budget,l1,l2,time_per_fn_s,speedup_vs_1:1,n_fn_evals,total_s,theta_mode,status\n";
  for (const auto& r : rows) {
    csv << to_string(r.budget) << ',' << r.budget.l1 << ',' << r.budget.l2 << ',';
    if (r.result) {
      const auto& f = *r.result;
      csv << format_double(f.time_per_fn_s) << ',';
      if (base && f.time_per_fn_s > 0.0) csv << format_double(*base / f.time_per_fn_s);
      csv << ',' << f.n_fn_evals << ',' << format_double(f.timings.total_s) << ",\"";
      for (Index j = 0; j < f.optimum.theta.size(); ++j) csv << (j ? " " : "") << format_double(f.optimum.theta[j]);
      csv << "\"," << to_string(f.optimum.status) << '\n';
    } else {
      std::string msg = r.error;
      for (auto& ch : msg)
        if (ch == '"' || ch == '\n') ch = '\'';
      csv << ",,,,,\"error: " << msg << "\"\n";
    }
  }
  std::filesystem::create_directories(a.out);
  write_text((std::filesystem::path(a.out) / "bench.csv").string(), csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_synth(const std::string& kind, Index width, Index height, Index size, std::uint64_t seed, const std::string& out) {
  SynthOptions o;
  o.kind = parse_synth_kind(kind);
  if (width <= 0 || height <= 0 || size < 0) throw ConfigError("size", "sizes must be positive");
  o.width = width;
  o.height = height;
  o.size = size;
  o.seed = seed;
  const auto result = synthesize(o);
  write_synth(result, out);
  std::cout << "wrote " << to_string(o.kind) << " (n=" << result.spec.latent_dim() << ", m=" << result.data.size()
            << ") to " << out << '\n';
  return 0;
}

int cmd_inspect(const std::string& path, const std::string& ordering) {
  std::ifstream in(path);
  if (!in) throw ConfigError("matrix", "cannot open '" + path + "'");
  const auto q = read_matrix_market<double>(in);
  OrderingChoice choice;
  choice.method = parse_ordering(ordering);
  const auto symbolic = analyze(q, choice);
  json doc = json::parse(symbolic->stats().to_json());
  try {
    const auto factor = factorize(symbolic, q);
    doc["log_det"] = factor.log_det();
  } catch (const NotPositiveDefinite& e) {
    doc["log_det"] = nullptr;
    doc["factor_error"] = e.what();
  }
  std::cout << doc.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pinla: two-level parallel INLA"};
  app.require_subcommand(1);

  RunArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "fit a model and write marginals, trace and summary");
  add_run_flags(fit_cmd, fit_args);
  fit_cmd->add_option("--threads", fit_args.threads, "budget A:B (level-1 x level-2)");

  RunArgs bench_args;
  std::string sweep = "1:1";
  auto* bench_cmd = app.add_subcommand("bench", "fit once per budget and write bench.csv");
  add_run_flags(bench_cmd, bench_args);
  bench_cmd->add_option("--sweep", sweep, "comma-separated budgets, e.g. 1:1,2:1,4:1");

  std::string synth_kind = "leukemia-like";
  Index width = 80, height = 50, size = 0;
  std::uint64_t synth_seed = 1;
  std::string synth_out = "synth";
  auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic model");
  synth_cmd->add_option("--kind", synth_kind, "leukemia-like | grid2d | conjugate");
  synth_cmd->add_option("--width", width, "leukemia-like grid width");
  synth_cmd->add_option("--height", height, "leukemia-like grid height");
  synth_cmd->add_option("--size", size, "grid2d side or conjugate n");
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--out", synth_out, "output directory");

  std::string matrix_path;
  std::string ordering = "nd";
  auto* inspect_cmd = app.add_subcommand("inspect", "ordering and factor statistics for a Matrix Market file");
  inspect_cmd->add_option("--matrix", matrix_path)->required();
  inspect_cmd->add_option("--ordering", ordering, "natural | mindegree | nd");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "config"}, {"key", "arguments"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  std::string out_dir;
  try {
    if (*fit_cmd) {
      out_dir = fit_args.out;
      return cmd_fit(fit_args);
    }
    if (*bench_cmd) {
      out_dir = bench_args.out;
      return cmd_bench(bench_args, sweep);
    }
    if (*synth_cmd) return cmd_synth(synth_kind, width, height, size, synth_seed, synth_out);
    if (*inspect_cmd) return cmd_inspect(matrix_path, ordering);
  } catch (const std::exception& e) {
    return report(e, out_dir);
  }
  return 0;
}
