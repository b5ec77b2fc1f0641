#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sgmcmc/types.hpp"

namespace sgmcmc {

enum class Family { GaussianHMM, ARHMM, LGSSM, SLDS };

std::string_view to_string(Family family);
Family parse_family(std::string_view name);

// Transition weights `phi` are positive and unnormalized; rows of the
// transition matrix are phi rows divided by their sums. Every `psi_*`
// matrix is the lower Cholesky factor of a precision matrix.

struct GaussianHMMParams {
  Matrix phi;
  std::vector<Vector> mu;
  std::vector<Matrix> psi_sigma;
};

struct ARHMMParams {
  Matrix phi;
  std::vector<Matrix> A;  // m x (m * lag), acting on [y_{t-1}; ...; y_{t-lag}]
  std::vector<Matrix> psi_q;
  int lag = 1;
};

struct LGSSMParams {
  Matrix A;
  Matrix psi_q;
  Matrix C;  // m x n, leading min(m, n) block fixed to the identity
  Matrix psi_r;
};

struct SLDSParams {
  Matrix phi;
  std::vector<Matrix> A;
  std::vector<Matrix> psi_q;
  Matrix C;
  Matrix psi_r;
};

using ModelParams = std::variant<GaussianHMMParams, ARHMMParams, LGSSMParams, SLDSParams>;

Family family_of(const ModelParams& params);
Index num_states(const ModelParams& params);
Index obs_dim(const ModelParams& params);
/// Continuous latent dimension; zero for the discrete-only families.
Index latent_dim(const ModelParams& params);

/// Throws std::invalid_argument describing the first violated constraint.
void validate(const ModelParams& params);

Matrix transition_matrix(const Matrix& phi);
Matrix precision_from_factor(const Matrix& psi);
Matrix covariance_from_factor(const Matrix& psi);
Matrix factor_from_covariance(const Matrix& cov);
Matrix factor_from_precision(const Matrix& precision);

/// True for entries of the m x n emission matrix that are sampled; the
/// leading min(m, n) square block is held at the identity.
bool is_free_emission_entry(Index row, Index col, Index m, Index n);
Index free_emission_count(Index m, Index n);
Matrix identity_emission(Index m, Index n);

struct ParamBlock {
  std::string name;
  Index offset = 0;
  Index size = 0;
  bool operator==(const ParamBlock&) const = default;
};

/// Named, contiguous blocks of the unconstrained parameter vector.
class ParamLayout {
 public:
  void add(std::string name, Index size);
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(std::string_view name) const;
  bool has(std::string_view name) const;
  Index dim() const { return dim_; }
  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<ParamBlock> blocks_;
  Index dim_ = 0;
};

/// Gradient (or any vector) over the unconstrained parameterization.
struct GradientVector {
  ParamLayout layout;
  Vector values;

  auto block(std::string_view name) { auto& b = layout.block(name); return values.segment(b.offset, b.size); }
  auto block(std::string_view name) const { auto& b = layout.block(name); return values.segment(b.offset, b.size); }
};

// Unconstrained coordinates, by block:
//   phi       log of each entry, row-major per state matrix
//   mu, A, C  raw entries; matrices column-major, C restricted to free entries
//   psi_*     per state, column-major lower triangle, diagonal entries logged
ParamLayout layout_of(const ModelParams& params);
Vector unconstrain(const ModelParams& params);
ModelParams constrain(const ModelParams& shape, const Vector& u);

/// Packs a gradient held in parameter-shaped storage into unconstrained
/// coordinates. `grad` stores d/dlog(phi) in its phi slots and d/dpsi
/// (full lower triangle) in its psi slots; diagonal psi entries are
/// chain-ruled by psi_ii here.
Vector pack_gradient(const ModelParams& at, const ModelParams& grad);

/// A zero-filled copy of `params` used as gradient storage.
ModelParams zeros_like(const ModelParams& params);

/// Lagged regressor [y_{t-1}; ...; y_{t-lag}], zero before the start.
Vector lagged_context(const Matrix& obs, Index t, int lag);

double gaussian_logpdf_factor(const Vector& residual, const Matrix& psi);

}  // namespace sgmcmc
