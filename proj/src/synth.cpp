#include "pinla/synth.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "pinla/cholesky.hpp"
#include "pinla/io.hpp"
#include "pinla/rng.hpp"

namespace pinla {

using nlohmann::json;

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "leukemia-like") return SynthKind::LeukemiaLike;
  if (name == "grid2d") return SynthKind::Grid2d;
  if (name == "conjugate") return SynthKind::Conjugate;
  throw ConfigError("kind", "expected leukemia-like, grid2d or conjugate, got '" + name + "'");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::LeukemiaLike: return "leukemia-like";
    case SynthKind::Grid2d: return "grid2d";
    case SynthKind::Conjugate: return "conjugate";
  }
  return "?";
}

AdjacencyGraph grid_graph(Index width, Index height) {
  std::vector<std::pair<Index, Index>> edges;
  for (Index r = 0; r < height; ++r)
    for (Index c = 0; c < width; ++c) {
      const Index v = r * width + c;
      if (c + 1 < width) edges.push_back({v, v + 1});
      if (r + 1 < height) edges.push_back({v, v + width});
    }
  return AdjacencyGraph::from_edges(width * height, edges);
}

namespace {

// Draw from N(0, (exp(theta) R + jitter I)^-1), then remove the part the
// intrinsic prior leaves unconstrained.
Vector sample_component(const Component& c, double theta, double jitter, CounterRng& rng) {
  std::vector<Triplet<double>> t;
  for (const auto& e : c.structure) t.push_back({e.row, e.col, std::exp(theta) * e.value});
  for (Index i = 0; i < c.size; ++i) t.push_back({i, i, jitter});
  const auto q = SparseSymMatrix<double>::from_triplets(c.size, std::move(t));
  Vector z(c.size);
  for (Index i = 0; i < c.size; ++i) z[i] = rng.normal();
  Vector x = sample_gmrf(factorize(q), z);
  switch (c.kind) {
    case ComponentKind::Rw1:
    case ComponentKind::Besag: x.array() -= x.mean(); break;
    case ComponentKind::Rw2: {
      Matrix basis(c.size, 2);
      basis.col(0).setOnes();
      basis.col(1) = Vector::LinSpaced(c.size, 0.0, 1.0);
      x -= basis * basis.colPivHouseholderQr().solve(x);
      break;
    }
    default: break;
  }
  return x;
}

json prior_json(const HyperPrior& p) { return json{{"shape", p.shape}, {"rate", p.rate}}; }

}  // namespace

SynthResult synthesize(const SynthOptions& o) {
  SynthResult r;
  auto& spec = r.spec;
  CounterRng rng(o.seed, static_cast<std::uint64_t>(o.kind));
  Index m = 0;
  std::vector<double> beta;
  json comps = json::array();

  switch (o.kind) {
    case SynthKind::LeukemiaLike: {
      if (o.width < 2 || o.height < 2) throw ConfigError("size", "leukemia-like needs width and height of at least 2");
      const Index regions = o.width * o.height;
      m = 2 * regions;
      spec.family = Family::Gaussian;
      spec.fixed = {"x1", "x2"};
      const auto g = grid_graph(o.width, o.height);
      Component s{"spatial", ComponentKind::Besag, regions, {}, "region", besag_structure(g), "spatial.graph"};
      Component v{"iid", ComponentKind::Iid, regions, {}, "region", iid_structure(regions), ""};
      spec.components = {s, v};
      r.theta_true = Vector{{std::log(4.0), std::log(1.0), std::log(4.0)}};
      beta = {1.0, 0.5, -0.3};
      std::ostringstream graph;
      write_graph(graph, g);
      r.extra_files.push_back({"spatial.graph", graph.str()});
      comps.push_back({{"name", "spatial"}, {"kind", "besag"}, {"graph", "spatial.graph"}, {"column", "region"},
                       {"hyper", prior_json(s.prior)}});
      comps.push_back({{"name", "iid"}, {"kind", "iid"}, {"size", regions}, {"column", "region"},
                       {"hyper", prior_json(v.prior)}});
      break;
    }
    case SynthKind::Grid2d: {
      const Index side = o.size > 0 ? o.size : 30;
      if (side < 2) throw ConfigError("size", "grid2d needs a side of at least 2");
      m = side * side;
      spec.family = Family::Poisson;
      const auto g = grid_graph(side, side);
      Component s{"spatial", ComponentKind::Besag, m, {}, "cell", besag_structure(g), "spatial.graph"};
      spec.components = {s};
      r.theta_true = Vector{{std::log(4.0)}};
      beta = {std::log(5.0)};
      std::ostringstream graph;
      write_graph(graph, g);
      r.extra_files.push_back({"spatial.graph", graph.str()});
      comps.push_back({{"name", "spatial"}, {"kind", "besag"}, {"graph", "spatial.graph"}, {"column", "cell"},
                       {"hyper", prior_json(s.prior)}});
      break;
    }
    case SynthKind::Conjugate: {
      const Index n = o.size > 0 ? o.size : 1;
      m = n;
      spec.family = Family::Gaussian;
      spec.fixed_log_precision = 0.0;
      spec.intercept = false;
      spec.jitter = 0.0;
      Component x{"x", ComponentKind::Iid, n, {1.0, 1.0}, "x", iid_structure(n), ""};
      spec.components = {x};
      r.theta_true = Vector{{0.0}};
      comps.push_back({{"name", "x"}, {"kind", "iid"}, {"size", n}, {"column", "x"}, {"hyper", prior_json(x.prior)}});
      break;
    }
  }

  // theta_true: uniform within +-0.5 of the kind's centre.
  for (Index j = 0; j < r.theta_true.size(); ++j) r.theta_true[j] += rng.uniform() - 0.5;

  // Latent field.
  const Index n = spec.latent_dim();
  r.x_true = Vector::Zero(n);
  for (Index j = 0; j < spec.n_fixed(); ++j) r.x_true[j] = beta[j];
  for (std::size_t c = 0; c < spec.components.size(); ++c)
    r.x_true.segment(spec.component_offset(c), spec.components[c].size) =
        sample_component(spec.components[c], r.theta_true[spec.component_theta(c)], spec.jitter, rng);

  // Observations.
  auto& d = r.data;
  d.exposure = Vector::Ones(m);
  d.offset = Vector::Zero(m);
  d.covariates.resize(m, static_cast<Index>(spec.fixed.size()));
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < d.covariates.cols(); ++j) d.covariates(i, j) = rng.normal();
  d.index.assign(spec.components.size(), std::vector<Index>(static_cast<std::size_t>(m)));
  for (std::size_t c = 0; c < spec.components.size(); ++c)
    for (Index i = 0; i < m; ++i) d.index[c][i] = i % spec.components[c].size;
  d.y.resize(m);
  const auto design = build_design(spec, d);
  const Vector eta = design.multiply(r.x_true);
  const double noise_sd = spec.family == Family::Gaussian
                              ? std::exp(-0.5 * (spec.fixed_log_precision ? *spec.fixed_log_precision : r.theta_true[0]))
                              : 0.0;
  for (Index i = 0; i < m; ++i)
    d.y[i] = spec.family == Family::Gaussian ? eta[i] + noise_sd * rng.normal()
                                             : static_cast<double>(rng.poisson(std::exp(eta[i])));

  // Documents.
  json lik{{"family", to_string(spec.family)}};
  if (spec.fixed_log_precision) lik["fixed_log_precision"] = *spec.fixed_log_precision;
  else if (spec.family == Family::Gaussian) lik["hyper"] = prior_json(spec.noise_prior);
  r.model_doc = {{"likelihood", lik},
                 {"intercept", spec.intercept},
                 {"fixed", spec.fixed},
                 {"components", comps},
                 {"options", {{"fixed_precision", spec.fixed_precision}, {"jitter", spec.jitter}}}};
  r.truth_doc = {{"kind", to_string(o.kind)},
                 {"seed", o.seed},
                 {"theta_names", spec.hyper_names()},
                 {"theta_true", std::vector<double>(r.theta_true.data(), r.theta_true.data() + r.theta_true.size())},
                 {"latent_dim", n},
                 {"observations", m},
                 {"x_true", std::vector<double>(r.x_true.data(), r.x_true.data() + n)}};

  std::ostringstream csv;
  std::vector<std::string> columns{"y"};
  for (const auto& f : spec.fixed) columns.push_back(f);
  std::vector<std::size_t> index_of;  // component feeding each index column
  for (std::size_t c = 0; c < spec.components.size(); ++c) {
    bool seen = false;
    for (std::size_t k = 0; k < index_of.size(); ++k) seen = seen || spec.components[index_of[k]].column == spec.components[c].column;
    if (!seen) {
      columns.push_back(spec.components[c].column);
      index_of.push_back(c);
    }
  }
  for (std::size_t k = 0; k < columns.size(); ++k) csv << (k ? "," : "") << columns[k];
  csv << '\n';
  for (Index i = 0; i < m; ++i) {
    csv << format_double(d.y[i]);
    for (Index j = 0; j < d.covariates.cols(); ++j) csv << ',' << format_double(d.covariates(i, j));
    for (auto c : index_of) csv << ',' << d.index[c][i];
    csv << '\n';
  }
  r.data_csv = csv.str();
  return r;
}

void write_synth(const SynthResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_text((base / "model.json").string(), result.model_doc.dump(2) + "\n");
  write_text((base / "data.csv").string(), result.data_csv);
  write_text((base / "truth.json").string(), result.truth_doc.dump(2) + "\n");
  for (const auto& [name, text] : result.extra_files) write_text((base / name).string(), text);
}

}  // namespace pinla
