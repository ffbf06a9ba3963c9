#include "pinla/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace pinla {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ifstream open_input(const std::string& path, const std::string& key) {
  std::ifstream in(path);
  if (!in) throw ConfigError(key, "cannot open '" + path + "'");
  return in;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---- graphs ------------------------------------------------------------------------

AdjacencyGraph read_graph(std::istream& in) {
  Index n = -1;
  if (!(in >> n) || n < 1) throw ConfigError("graph", "graph file must start with a positive node count");
  std::vector<std::pair<Index, Index>> edges;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Index line = 0; line < n; ++line) {
    Index i = -1, deg = -1;
    if (!(in >> i >> deg)) throw ConfigError("graph", "expected " + std::to_string(n) + " node lines");
    if (i < 0 || i >= n || deg < 0) throw ConfigError("graph", "bad node line for node " + std::to_string(i));
    if (seen[i]) throw ConfigError("graph", "node " + std::to_string(i) + " listed twice");
    seen[i] = 1;
    for (Index k = 0; k < deg; ++k) {
      Index j = -1;
      if (!(in >> j) || j < 0 || j >= n || j == i)
        throw ConfigError("graph", "bad neighbour of node " + std::to_string(i));
      edges.push_back({i, j});
    }
  }
  return AdjacencyGraph::from_edges(n, edges);
}

AdjacencyGraph read_graph_file(const std::string& path) {
  auto in = open_input(path, "graph");
  return read_graph(in);
}

void write_graph(std::ostream& out, const AdjacencyGraph& graph) {
  out << graph.n << '\n';
  for (Index v = 0; v < graph.n; ++v) {
    out << v << ' ' << graph.degree(v);
    graph.for_each_neighbor(v, [&](Index u) { out << ' ' << u; });
    out << '\n';
  }
}

// ---- CSV -------------------------------------------------------------------------------

Index CsvTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Index>(i);
  return -1;
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw InvalidData("empty CSV input");
  t.header = split(line);
  std::set<std::string> unique(t.header.begin(), t.header.end());
  if (unique.size() != t.header.size()) throw InvalidData("duplicate CSV column names");
  t.columns.assign(t.header.size(), {});
  Index row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw InvalidData("CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(t.header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& s = cells[c];
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!s.empty() && s != "NA") {
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size())
          throw InvalidData("CSV row " + std::to_string(row) + ", column '" + t.header[c] + "': not a number");
      }
      t.columns[c].push_back(v);
    }
  }
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  auto in = open_input(path, "data");
  return read_csv(in);
}

// ---- model document ----------------------------------------------------------------------

namespace {

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "model" : path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <typename T>
T get(const json& obj, const char* key, const std::string& path) {
  const std::string full = path.empty() ? key : path + "." + key;
  if (!obj.contains(key)) throw ConfigError(full, "required key missing");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(full, "wrong type");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, const std::string& path, T fallback) {
  return obj.contains(key) ? get<T>(obj, key, path) : fallback;
}

HyperPrior parse_prior(const json& obj, const char* key, const std::string& path) {
  HyperPrior p;
  if (!obj.contains(key)) return p;
  const std::string full = path.empty() ? key : path + "." + key;
  const auto& h = obj.at(key);
  check_keys(h, full, {"shape", "rate"});
  p.shape = get_or<double>(h, "shape", full, p.shape);
  p.rate = get_or<double>(h, "rate", full, p.rate);
  if (!(p.shape > 0.0) || !(p.rate > 0.0)) throw ConfigError(full, "shape and rate must be positive");
  return p;
}

std::string resolve(const std::string& base_dir, const std::string& file) {
  const fs::path p(file);
  return p.is_absolute() || base_dir.empty() ? file : (fs::path(base_dir) / p).string();
}

}  // namespace

ModelSpec parse_model_spec(const json& doc, const std::string& base_dir) {
  check_keys(doc, "", {"likelihood", "intercept", "fixed", "components", "options"});
  ModelSpec spec;

  if (!doc.contains("likelihood")) throw ConfigError("likelihood", "required key missing");
  const auto& lik = doc.at("likelihood");
  check_keys(lik, "likelihood", {"family", "hyper", "fixed_log_precision", "exposure", "offset"});
  spec.family = parse_family(get<std::string>(lik, "family", "likelihood"));
  spec.noise_prior = parse_prior(lik, "hyper", "likelihood");
  if (lik.contains("fixed_log_precision")) {
    if (spec.family != Family::Gaussian)
      throw ConfigError("likelihood.fixed_log_precision", "only meaningful for the gaussian family");
    spec.fixed_log_precision = get<double>(lik, "fixed_log_precision", "likelihood");
  }
  spec.exposure_column = get_or<std::string>(lik, "exposure", "likelihood", "");
  if (!spec.exposure_column.empty() && spec.family != Family::Poisson)
    throw ConfigError("likelihood.exposure", "only meaningful for the poisson family");
  spec.offset_column = get_or<std::string>(lik, "offset", "likelihood", "");

  spec.intercept = get_or<bool>(doc, "intercept", "", true);
  spec.fixed = get_or<std::vector<std::string>>(doc, "fixed", "", {});

  if (doc.contains("components")) {
    const auto& comps = doc.at("components");
    if (!comps.is_array()) throw ConfigError("components", "expected an array");
    std::set<std::string> names;
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const std::string path = "components[" + std::to_string(c) + "]";
      const auto& js = comps[c];
      check_keys(js, path, {"name", "kind", "size", "graph", "matrix", "column", "hyper"});
      Component comp;
      comp.name = get<std::string>(js, "name", path);
      if (!names.insert(comp.name).second) throw ConfigError(path + ".name", "duplicate component name");
      const auto kind = get<std::string>(js, "kind", path);
      try {
        comp.kind = parse_component_kind(kind);
      } catch (const ConfigError&) {
        throw ConfigError(path + ".kind", "unknown component kind '" + kind + "'");
      }
      comp.column = get_or<std::string>(js, "column", path, comp.name);
      comp.prior = parse_prior(js, "hyper", path);
      const Index size = get_or<Index>(js, "size", path, -1);
      if (comp.kind == ComponentKind::Besag) {
        comp.source = resolve(base_dir, get<std::string>(js, "graph", path));
        AdjacencyGraph g;
        try {
          g = read_graph_file(comp.source);
        } catch (const ConfigError& e) {
          throw ConfigError(path + ".graph", e.what());
        }
        if (size >= 0 && size != g.n) throw ConfigError(path + ".size", "differs from the graph node count");
        comp.size = g.n;
        comp.structure = besag_structure(g);
      } else if (comp.kind == ComponentKind::Generic) {
        comp.source = resolve(base_dir, get<std::string>(js, "matrix", path));
        SparseSymMatrix<double> r;
        try {
          r = read_matrix_market_file<double>(comp.source);
        } catch (const Error& e) {
          throw ConfigError(path + ".matrix", e.what());
        }
        if (size >= 0 && size != r.rows()) throw ConfigError(path + ".size", "differs from the matrix dimension");
        comp.size = r.rows();
        for (Index j = 0; j < r.rows(); ++j)
          for (Index p = r.col_ptr()[j]; p < r.col_ptr()[j + 1]; ++p)
            comp.structure.push_back({r.row_idx()[p], j, r.values()[p]});
      } else {
        if (js.contains("graph") || js.contains("matrix"))
          throw ConfigError(path + (js.contains("graph") ? ".graph" : ".matrix"), "not used by kind " + to_string(comp.kind));
        if (size < 1) throw ConfigError(path + ".size", "positive size required");
        comp.size = size;
        try {
          make_structure(comp);
        } catch (const ConfigError& e) {
          throw ConfigError(path + ".size", e.what());
        }
      }
      spec.components.push_back(std::move(comp));
    }
  }

  if (doc.contains("options")) {
    const auto& opt = doc.at("options");
    check_keys(opt, "options", {"fixed_precision", "jitter", "theta0"});
    spec.fixed_precision = get_or<double>(opt, "fixed_precision", "options", spec.fixed_precision);
    spec.jitter = get_or<double>(opt, "jitter", "options", spec.jitter);
    if (opt.contains("theta0")) spec.theta0 = get<std::vector<double>>(opt, "theta0", "options");
    if (!(spec.fixed_precision > 0.0)) throw ConfigError("options.fixed_precision", "must be positive");
    if (!(spec.jitter >= 0.0)) throw ConfigError("options.jitter", "must be non-negative");
    if (spec.theta0 && static_cast<Index>(spec.theta0->size()) != spec.n_hyper())
      throw ConfigError("options.theta0", "expected " + std::to_string(spec.n_hyper()) + " entries");
  }
  if (spec.n_hyper() == 0) throw ConfigError("components", "model has no hyperparameters");
  return spec;
}

ModelSpec load_model_spec(const std::string& path) {
  auto in = open_input(path, "model");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("model", std::string("malformed JSON: ") + e.what());
  }
  return parse_model_spec(doc, fs::path(path).parent_path().string());
}

ModelData load_model_data(const ModelSpec& spec, const CsvTable& table) {
  const Index m = table.rows();
  auto column = [&](const std::string& name, const std::string& key) -> const std::vector<double>& {
    const Index c = table.find(name);
    if (c < 0) throw ConfigError(key, "column '" + name + "' not found in data");
    return table.columns[c];
  };
  auto dense = [&](const std::vector<double>& v, const std::string& name) {
    Vector out(m);
    for (Index i = 0; i < m; ++i) {
      if (std::isnan(v[i])) throw InvalidData("column '" + name + "' has an empty cell in row " + std::to_string(i + 1));
      out[i] = v[i];
    }
    return out;
  };
  ModelData d;
  d.y = dense(column("y", "y"), "y");
  d.exposure = spec.exposure_column.empty() ? Vector::Ones(m)
                                            : dense(column(spec.exposure_column, "likelihood.exposure"), spec.exposure_column);
  d.offset = spec.offset_column.empty() ? Vector::Zero(m)
                                        : dense(column(spec.offset_column, "likelihood.offset"), spec.offset_column);
  d.covariates.resize(m, static_cast<Index>(spec.fixed.size()));
  for (std::size_t j = 0; j < spec.fixed.size(); ++j)
    d.covariates.col(static_cast<Index>(j)) =
        dense(column(spec.fixed[j], "fixed[" + std::to_string(j) + "]"), spec.fixed[j]);
  for (std::size_t c = 0; c < spec.components.size(); ++c) {
    const auto& comp = spec.components[c];
    const auto& v = column(comp.column, "components[" + std::to_string(c) + "].column");
    std::vector<Index> idx(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
      if (std::isnan(v[i])) {
        idx[i] = -1;
        continue;
      }
      if (v[i] != std::floor(v[i]) || v[i] < 0)
        throw InvalidData("column '" + comp.column + "' row " + std::to_string(i + 1) + ": index must be a non-negative integer");
      idx[i] = static_cast<Index>(v[i]);
    }
    d.index.push_back(std::move(idx));
  }
  return d;
}

std::shared_ptr<const Model> load_model(const std::string& model_path, const std::string& data_path) {
  auto spec = load_model_spec(model_path);
  auto data = load_model_data(spec, read_csv_file(data_path));
  return Model::build(std::move(spec), std::move(data));
}

// ---- outputs ----------------------------------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("out", "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

void write_json(const std::string& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_marginals_csv(std::ostream& out, const ModelSpec& spec, const LatentMarginals& latent) {
  out << "index,component,mean,sd\n";
  for (Index i = 0; i < latent.mean.size(); ++i)
    out << i << ',' << spec.latent_label(i) << ',' << format_double(latent.mean[i]) << ',' << format_double(latent.sd[i])
        << '\n';
}

json trace_row_json(const TraceRow& row) {
  return json{{"iter", row.iter},
              {"f", row.f},
              {"grad_norm", row.grad_norm},
              {"step", row.step},
              {"n_evals", row.n_evals},
              {"wall_ms", row.wall_ms},
              {"gamma", row.gamma},
              {"scheme", row.central ? "central" : "forward"},
              {"theta", std::vector<double>(row.theta.data(), row.theta.data() + row.theta.size())}};
}

json error_json(const std::exception& e) {
  if (const auto* b = dynamic_cast<const BatchError*>(&e)) {
    try {
      b->rethrow_cause();
    } catch (const std::exception& cause) {
      return error_json(cause);
    } catch (...) {
    }
  }
  json j{{"error", "failure"}, {"message", e.what()}};
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) {
    j["error"] = "config";
    j["key"] = c->key();
  } else if (dynamic_cast<const InvalidData*>(&e)) {
    j["error"] = "data";
  } else if (dynamic_cast<const NotPositiveDefinite*>(&e)) {
    j["error"] = "not-positive-definite";
  } else if (dynamic_cast<const InnerDivergence*>(&e)) {
    j["error"] = "inner-divergence";
  }
  return j;
}

}  // namespace pinla
