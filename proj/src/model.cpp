#include "pinla/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pinla {

Family parse_family(const std::string& name) {
  if (name == "gaussian") return Family::Gaussian;
  if (name == "poisson") return Family::Poisson;
  throw ConfigError("likelihood.family", "unknown family '" + name + "'");
}

ComponentKind parse_component_kind(const std::string& name) {
  if (name == "iid") return ComponentKind::Iid;
  if (name == "rw1") return ComponentKind::Rw1;
  if (name == "rw2") return ComponentKind::Rw2;
  if (name == "besag") return ComponentKind::Besag;
  if (name == "generic") return ComponentKind::Generic;
  throw ConfigError("kind", "unknown component kind '" + name + "'");
}

std::string to_string(Family family) { return family == Family::Gaussian ? "gaussian" : "poisson"; }

std::string to_string(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::Iid: return "iid";
    case ComponentKind::Rw1: return "rw1";
    case ComponentKind::Rw2: return "rw2";
    case ComponentKind::Besag: return "besag";
    case ComponentKind::Generic: return "generic";
  }
  return "?";
}

// ---- ModelSpec ---------------------------------------------------------------

Index ModelSpec::latent_dim() const {
  Index n = n_fixed();
  for (const auto& c : components) n += c.size;
  return n;
}

Index ModelSpec::noise_index() const {
  return family == Family::Gaussian && !fixed_log_precision ? 0 : -1;
}

Index ModelSpec::n_hyper() const { return (noise_index() >= 0 ? 1 : 0) + static_cast<Index>(components.size()); }

Index ModelSpec::component_theta(std::size_t c) const {
  return (noise_index() >= 0 ? 1 : 0) + static_cast<Index>(c);
}

Index ModelSpec::component_offset(std::size_t c) const {
  Index off = n_fixed();
  for (std::size_t k = 0; k < c; ++k) off += components[k].size;
  return off;
}

std::vector<std::string> ModelSpec::hyper_names() const {
  std::vector<std::string> names;
  if (noise_index() >= 0) names.push_back("log_precision_noise");
  for (const auto& c : components) names.push_back("log_precision_" + c.name);
  return names;
}

std::string ModelSpec::latent_label(Index i) const {
  if (intercept) {
    if (i == 0) return "intercept";
    --i;
  }
  if (i < static_cast<Index>(fixed.size())) return fixed[i];
  i -= static_cast<Index>(fixed.size());
  for (const auto& c : components) {
    if (i < c.size) return c.name;
    i -= c.size;
  }
  throw DimensionError("latent index out of range");
}

// ---- structure matrices ----------------------------------------------------------

std::vector<Triplet<double>> iid_structure(Index size) {
  std::vector<Triplet<double>> t;
  for (Index i = 0; i < size; ++i) t.push_back({i, i, 1.0});
  return t;
}

std::vector<Triplet<double>> rw_structure(Index size, int order) {
  if (order != 1 && order != 2) throw ConfigError("kind", "random walk order must be 1 or 2");
  if (size <= order) throw ConfigError("size", "random walk needs more than " + std::to_string(order) + " nodes");
  const std::vector<double> coef = order == 1 ? std::vector<double>{-1, 1} : std::vector<double>{1, -2, 1};
  std::vector<Triplet<double>> t;
  for (Index r = 0; r + order < size; ++r)
    for (int a = 0; a <= order; ++a)
      for (int b = 0; b <= a; ++b) t.push_back({r + a, r + b, coef[a] * coef[b]});
  return t;
}

std::vector<Triplet<double>> besag_structure(const AdjacencyGraph& graph) {
  std::vector<Triplet<double>> t;
  for (Index v = 0; v < graph.n; ++v) {
    t.push_back({v, v, static_cast<double>(graph.degree(v))});
    graph.for_each_neighbor(v, [&](Index u) {
      if (u < v) t.push_back({v, u, -1.0});
    });
  }
  return t;
}

void make_structure(Component& c) {
  switch (c.kind) {
    case ComponentKind::Iid: c.structure = iid_structure(c.size); break;
    case ComponentKind::Rw1: c.structure = rw_structure(c.size, 1); break;
    case ComponentKind::Rw2: c.structure = rw_structure(c.size, 2); break;
    case ComponentKind::Besag:
    case ComponentKind::Generic: break;
  }
}

// ---- design ------------------------------------------------------------------------

Vector DesignMatrix::multiply(const Vector& x) const {
  if (x.size() != cols) throw DimensionError("design multiply: size mismatch");
  Vector out(rows);
  for (Index i = 0; i < rows; ++i) {
    double s = 0.0;
    for (Index p = row_ptr[i]; p < row_ptr[i + 1]; ++p) s += val[p] * x[col[p]];
    out[i] = s;
  }
  return out;
}

Vector DesignMatrix::multiply_transpose(const Vector& v) const {
  if (v.size() != rows) throw DimensionError("design transpose multiply: size mismatch");
  Vector out = Vector::Zero(cols);
  for (Index i = 0; i < rows; ++i)
    for (Index p = row_ptr[i]; p < row_ptr[i + 1]; ++p) out[col[p]] += val[p] * v[i];
  return out;
}

Matrix DesignMatrix::to_dense() const {
  Matrix a = Matrix::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index p = row_ptr[i]; p < row_ptr[i + 1]; ++p) a(i, col[p]) += val[p];
  return a;
}

DesignMatrix build_design(const ModelSpec& spec, const ModelData& data) {
  const Index m = data.size();
  DesignMatrix a;
  a.rows = m;
  a.cols = spec.latent_dim();
  a.row_ptr.reserve(static_cast<std::size_t>(m) + 1);
  a.row_ptr.push_back(0);
  for (Index i = 0; i < m; ++i) {
    Index c0 = 0;
    if (spec.intercept) {
      a.col.push_back(c0++);
      a.val.push_back(1.0);
    }
    for (std::size_t j = 0; j < spec.fixed.size(); ++j, ++c0) {
      const double z = data.covariates(i, static_cast<Index>(j));
      if (z == 0.0) continue;
      a.col.push_back(c0);
      a.val.push_back(z);
    }
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
      const Index k = data.index[c][i];
      if (k < 0) continue;
      a.col.push_back(spec.component_offset(c) + k);
      a.val.push_back(1.0);
    }
    if (static_cast<Index>(a.col.size()) == a.row_ptr.back())
      throw InvalidData("observation " + std::to_string(i) + " has an empty design row");
    a.row_ptr.push_back(static_cast<Index>(a.col.size()));
  }
  return a;
}

// ---- Model ---------------------------------------------------------------------------

namespace {

void check_prior(const HyperPrior& p, const std::string& key) {
  if (!(p.shape > 0.0) || !(p.rate > 0.0) || !std::isfinite(p.shape) || !std::isfinite(p.rate))
    throw ConfigError(key, "hyper-prior shape and rate must be positive");
}

void validate(const ModelSpec& spec, const ModelData& data) {
  const Index m = data.size();
  if (m < 1) throw InvalidData("no observations");
  if (data.exposure.size() != m || data.offset.size() != m) throw DimensionError("exposure/offset length differs from y");
  if (data.covariates.rows() != m || data.covariates.cols() != static_cast<Index>(spec.fixed.size()))
    throw DimensionError("covariate matrix must be m x (number of fixed effects)");
  if (data.index.size() != spec.components.size()) throw DimensionError("one index column per component required");
  if (!(spec.fixed_precision > 0.0)) throw ConfigError("options.fixed_precision", "must be positive");
  if (!(spec.jitter >= 0.0)) throw ConfigError("options.jitter", "must be non-negative");
  check_prior(spec.noise_prior, "likelihood.hyper");
  if (spec.fixed_log_precision && !std::isfinite(*spec.fixed_log_precision))
    throw ConfigError("likelihood.fixed_log_precision", "must be finite");
  for (std::size_t c = 0; c < spec.components.size(); ++c) {
    const auto& comp = spec.components[c];
    const std::string key = "components[" + std::to_string(c) + "]";
    if (comp.size < 1) throw ConfigError(key + ".size", "component size must be positive");
    check_prior(comp.prior, key + ".hyper");
    for (const auto& t : comp.structure)
      if (t.row < 0 || t.col < 0 || t.row >= comp.size || t.col >= comp.size)
        throw ConfigError(key, "structure entry outside the component block");
    if (comp.structure.empty()) throw ConfigError(key, "component has no structure matrix");
    for (Index i = 0; i < m; ++i) {
      const Index k = data.index[c][i];
      if (k < -1 || k >= comp.size)
        throw InvalidData("observation " + std::to_string(i) + ": index " + std::to_string(k) + " out of range for " +
                          comp.name);
    }
  }
  for (Index i = 0; i < m; ++i) {
    if (!std::isfinite(data.y[i]) || !std::isfinite(data.offset[i]))
      throw InvalidData("observation " + std::to_string(i) + " is not finite");
    if (spec.family == Family::Poisson) {
      if (data.y[i] < 0.0 || data.y[i] != std::floor(data.y[i]))
        throw InvalidData("observation " + std::to_string(i) + ": poisson counts must be non-negative integers");
      if (!(data.exposure[i] > 0.0)) throw InvalidData("observation " + std::to_string(i) + ": exposure must be positive");
    }
  }
  if (spec.theta0 && static_cast<Index>(spec.theta0->size()) != spec.n_hyper())
    throw ConfigError("options.theta0", "expected " + std::to_string(spec.n_hyper()) + " entries");
}

}  // namespace

std::shared_ptr<const Model> Model::build(ModelSpec spec, ModelData data) {
  for (auto& c : spec.components)
    if (c.column.empty()) c.column = c.name;
  validate(spec, data);
  std::shared_ptr<Model> m(new Model());
  m->spec_ = std::move(spec);
  m->data_ = std::move(data);
  m->design_ = build_design(m->spec_, m->data_);
  m->n_ = m->spec_.latent_dim();
  const Index n = m->n_;
  const auto& sp = m->spec_;

  // Prior pattern; theta index per column.
  std::vector<Index> column_theta(static_cast<std::size_t>(n), -1);
  std::vector<Triplet<double>> t;
  for (Index i = 0; i < sp.n_fixed(); ++i) t.push_back({i, i, sp.fixed_precision});
  for (std::size_t c = 0; c < sp.components.size(); ++c) {
    const Index off = sp.component_offset(c);
    const auto& comp = sp.components[c];
    for (Index i = 0; i < comp.size; ++i) {
      t.push_back({off + i, off + i, 0.0});
      column_theta[off + i] = sp.component_theta(c);
    }
    for (const auto& e : comp.structure) t.push_back({off + e.row, off + e.col, e.value});
  }
  m->prior_base_ = SparseSymMatrix<double>::from_triplets(n, std::move(t));
  const auto& pb = m->prior_base_;
  m->prior_theta_.resize(pb.values().size());
  m->prior_diag_.resize(pb.values().size());
  for (Index j = 0; j < n; ++j)
    for (Index p = pb.col_ptr()[j]; p < pb.col_ptr()[j + 1]; ++p) {
      m->prior_theta_[p] = column_theta[j];
      m->prior_diag_[p] = pb.row_idx()[p] == j;
    }

  // Union with the pattern of A^T A.
  const auto& a = m->design_;
  std::vector<Triplet<double>> u;
  for (Index j = 0; j < n; ++j)
    for (Index p = pb.col_ptr()[j]; p < pb.col_ptr()[j + 1]; ++p) u.push_back({pb.row_idx()[p], j, 0.0});
  for (Index i = 0; i < a.rows; ++i)
    for (Index p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p)
      for (Index q = a.row_ptr[i]; q <= p; ++q) u.push_back({a.col[p], a.col[q], 0.0});
  m->cond_base_ = SparseSymMatrix<double>::from_triplets(n, std::move(u));
  const auto& cb = m->cond_base_;
  auto slot = [&](Index r, Index c) {
    if (r < c) std::swap(r, c);
    const auto first = cb.row_idx().begin() + cb.col_ptr()[c];
    const auto last = cb.row_idx().begin() + cb.col_ptr()[c + 1];
    return static_cast<Index>(std::lower_bound(first, last, r) - cb.row_idx().begin());
  };
  m->prior_to_cond_.resize(pb.values().size());
  for (Index j = 0; j < n; ++j)
    for (Index p = pb.col_ptr()[j]; p < pb.col_ptr()[j + 1]; ++p) m->prior_to_cond_[p] = slot(pb.row_idx()[p], j);
  m->obs_ptr_.push_back(0);
  for (Index i = 0; i < a.rows; ++i) {
    for (Index p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p)
      for (Index q = a.row_ptr[i]; q <= p; ++q) {
        // Repeated columns within a row contribute twice off the diagonal.
        const double mult = (q != p && a.col[p] == a.col[q]) ? 2.0 : 1.0;
        m->obs_slot_.push_back(slot(a.col[p], a.col[q]));
        m->obs_coef_.push_back(mult * a.val[p] * a.val[q]);
      }
    m->obs_ptr_.push_back(static_cast<Index>(m->obs_slot_.size()));
  }
  return m;
}

Vector Model::initial_theta() const {
  if (spec_.theta0) return Eigen::Map<const Vector>(spec_.theta0->data(), static_cast<Index>(spec_.theta0->size()));
  return Vector::Zero(n_hyper());
}

void Model::check_theta(const Vector& theta) const {
  if (theta.size() != n_hyper())
    throw DimensionError("theta has " + std::to_string(theta.size()) + " entries, model needs " +
                         std::to_string(n_hyper()));
  if (!theta.allFinite()) throw InvalidData("theta is not finite");
}

SparseSymMatrix<double> Model::prior_precision(const Vector& theta) const {
  check_theta(theta);
  SparseSymMatrix<double> q = prior_base_;
  auto& v = q.values();
  for (std::size_t p = 0; p < v.size(); ++p) {
    const Index k = prior_theta_[p];
    if (k < 0) continue;
    v[p] = std::exp(theta[k]) * v[p] + (prior_diag_[p] ? spec_.jitter : 0.0);
  }
  return q;
}

SparseSymMatrix<double> Model::conditional_precision(const SparseSymMatrix<double>& prior, const Vector& w) const {
  if (w.size() != design_.rows) throw DimensionError("weight vector length differs from observation count");
  SparseSymMatrix<double> q = cond_base_;
  auto& v = q.values();
  const auto& pv = prior.values();
  for (std::size_t p = 0; p < pv.size(); ++p) v[prior_to_cond_[p]] += pv[p];
  for (Index i = 0; i < design_.rows; ++i)
    for (Index k = obs_ptr_[i]; k < obs_ptr_[i + 1]; ++k) v[obs_slot_[k]] += w[i] * obs_coef_[k];
  return q;
}

double log_gamma_log_density(double theta, const HyperPrior& prior) {
  const double a = prior.shape, b = prior.rate;
  return a * std::log(b) - std::lgamma(a) + a * theta - b * std::exp(theta);
}

double Model::log_prior_hyper(const Vector& theta) const {
  check_theta(theta);
  double s = 0.0;
  if (spec_.noise_index() >= 0) s += log_gamma_log_density(theta[spec_.noise_index()], spec_.noise_prior);
  for (std::size_t c = 0; c < spec_.components.size(); ++c)
    s += log_gamma_log_density(theta[spec_.component_theta(c)], spec_.components[c].prior);
  return s;
}

LikelihoodTerms Model::likelihood(const Vector& eta, const Vector& theta) const {
  const Index m = data_.size();
  if (eta.size() != m) throw DimensionError("eta length differs from observation count");
  LikelihoodTerms out;
  out.d1.resize(m);
  out.d2.resize(m);
  const auto& y = data_.y;
  if (spec_.family == Family::Gaussian) {
    const double lp = spec_.fixed_log_precision ? *spec_.fixed_log_precision : theta[spec_.noise_index()];
    const double tau = std::exp(lp);
    const double c = 0.5 * (lp - std::log(2.0 * std::numbers::pi));
    for (Index i = 0; i < m; ++i) {
      const double r = y[i] - eta[i] - data_.offset[i];
      out.loglik += c - 0.5 * tau * r * r;
      out.d1[i] = tau * r;
      out.d2[i] = -tau;
    }
  } else {
    for (Index i = 0; i < m; ++i) {
      const double lin = eta[i] + data_.offset[i] + std::log(data_.exposure[i]);
      const double mu = std::exp(lin);
      out.loglik += y[i] * lin - mu - std::lgamma(y[i] + 1.0);
      out.d1[i] = y[i] - mu;
      out.d2[i] = -mu;
    }
  }
  return out;
}

double Model::log_likelihood(const Vector& eta, const Vector& theta) const { return likelihood(eta, theta).loglik; }

}  // namespace pinla
