#pragma once

// Latent Gaussian model: x = (intercept, fixed effects, components...),
// eta = A x + offset, y | eta ~ gaussian or poisson, x | theta ~ N(0, Q(theta)^-1).
// All hyperparameters are log-precisions.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pinla/common.hpp"
#include "pinla/sparse_matrix.hpp"

namespace pinla {

enum class Family { Gaussian, Poisson };
enum class ComponentKind { Iid, Rw1, Rw2, Besag, Generic };

Family parse_family(const std::string& name);
ComponentKind parse_component_kind(const std::string& name);
std::string to_string(Family family);
std::string to_string(ComponentKind kind);

// Log-gamma prior on a precision tau = exp(theta).
struct HyperPrior {
  double shape = 1.0;
  double rate = 5e-5;
};

struct Component {
  std::string name;
  ComponentKind kind = ComponentKind::Iid;
  Index size = 0;
  HyperPrior prior;
  // Data column holding the 0-based component index of each observation;
  // defaults to `name`.
  std::string column;
  // Lower triangle of the structure matrix R. Filled by make_structure for
  // iid/rw1/rw2; supplied by the caller (or a file) for besag/generic.
  std::vector<Triplet<double>> structure;
  std::string source;  // graph or matrix file, diagnostics only
};

struct ModelSpec {
  Family family = Family::Gaussian;
  HyperPrior noise_prior;
  // When set, the gaussian noise log-precision is fixed and not a hyperparameter.
  std::optional<double> fixed_log_precision;
  bool intercept = true;
  std::vector<std::string> fixed;  // covariate columns
  std::vector<Component> components;
  double fixed_precision = 1e-3;
  double jitter = 1e-5;
  std::string exposure_column;  // poisson only, optional
  std::string offset_column;    // optional
  std::optional<std::vector<double>> theta0;

  Index n_fixed() const { return (intercept ? 1 : 0) + static_cast<Index>(fixed.size()); }
  Index latent_dim() const;
  Index n_hyper() const;
  // Position of the gaussian noise log-precision in theta, -1 if absent.
  Index noise_index() const;
  // Position of component c's log-precision in theta.
  Index component_theta(std::size_t c) const;
  // First latent index of component c.
  Index component_offset(std::size_t c) const;
  std::vector<std::string> hyper_names() const;
  // Name of the block holding latent index i.
  std::string latent_label(Index i) const;
};

// Structure matrices. Besag from an undirected graph (Laplacian).
std::vector<Triplet<double>> iid_structure(Index size);
std::vector<Triplet<double>> rw_structure(Index size, int order);
std::vector<Triplet<double>> besag_structure(const AdjacencyGraph& graph);
// Fills Component::structure for kinds that do not need external input.
void make_structure(Component& c);

struct ModelData {
  Vector y;
  Vector exposure;  // ones when absent
  Vector offset;    // zeros when absent
  Matrix covariates;  // m x fixed.size()
  // index[c][i]: latent index within component c for observation i, -1 when
  // the component does not enter that observation.
  std::vector<std::vector<Index>> index;

  Index size() const { return y.size(); }
};

// Sparse m x n design by rows.
struct DesignMatrix {
  Index rows = 0, cols = 0;
  std::vector<Index> row_ptr;
  std::vector<Index> col;
  std::vector<double> val;

  Vector multiply(const Vector& x) const;
  Vector multiply_transpose(const Vector& v) const;
  Matrix to_dense() const;
};

DesignMatrix build_design(const ModelSpec& spec, const ModelData& data);

struct LikelihoodTerms {
  double loglik = 0.0;
  Vector d1;
  Vector d2;
};

class Model {
 public:
  // Validates spec against data and precomputes the fixed sparsity patterns.
  static std::shared_ptr<const Model> build(ModelSpec spec, ModelData data);

  const ModelSpec& spec() const { return spec_; }
  const ModelData& data() const { return data_; }
  const DesignMatrix& design() const { return design_; }
  Index latent_dim() const { return n_; }
  Index n_hyper() const { return spec_.n_hyper(); }
  Vector initial_theta() const;

  void check_theta(const Vector& theta) const;

  // Q_prior(theta); same pattern for every theta.
  SparseSymMatrix<double> prior_precision(const Vector& theta) const;
  // Q_prior(theta) + A^T diag(w) A on the precomputed union pattern.
  SparseSymMatrix<double> conditional_precision(const SparseSymMatrix<double>& prior, const Vector& w) const;
  const SparseSymMatrix<double>& prior_pattern() const { return prior_base_; }
  const SparseSymMatrix<double>& conditional_pattern() const { return cond_base_; }

  // log pi(theta), log-gamma on each precision plus the log-scale Jacobian.
  double log_prior_hyper(const Vector& theta) const;
  LikelihoodTerms likelihood(const Vector& eta, const Vector& theta) const;
  double log_likelihood(const Vector& eta, const Vector& theta) const;

 private:
  Model() = default;

  ModelSpec spec_;
  ModelData data_;
  DesignMatrix design_;
  Index n_ = 0;

  // Prior pattern; values hold R entries (fixed block: fixed_precision).
  SparseSymMatrix<double> prior_base_;
  std::vector<Index> prior_theta_;  // theta index per entry, -1 for fixed-effect entries
  std::vector<char> prior_diag_;

  SparseSymMatrix<double> cond_base_;
  std::vector<Index> prior_to_cond_;
  // Per observation: (slot in cond values, A_ia * A_ib) for a >= b.
  std::vector<Index> obs_ptr_;
  std::vector<Index> obs_slot_;
  std::vector<double> obs_coef_;
};

// Free-function forms.
inline SparseSymMatrix<double> assemble_prior_precision(const Model& m, const Vector& theta) {
  return m.prior_precision(theta);
}
inline double log_prior_hyper(const Model& m, const Vector& theta) { return m.log_prior_hyper(theta); }
inline LikelihoodTerms likelihood_terms(const Model& m, const Vector& eta, const Vector& theta) {
  return m.likelihood(eta, theta);
}

// Log-gamma density of exp(theta) on the theta scale.
double log_gamma_log_density(double theta, const HyperPrior& prior);

}  // namespace pinla
