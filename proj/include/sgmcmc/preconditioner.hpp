#pragma once

#include <string>
#include <variant>
#include <vector>

#include "sgmcmc/params.hpp"

namespace sgmcmc {

// D is block diagonal over the parameter layout. Each named block is a run
// of structured pieces laid out back to back:
//   Diagonal      elementwise
//   Kronecker     I_reps (x) M acting on reps consecutive column vectors
//   Dense         one SPD matrix

struct DiagonalPiece {
  Vector diag;
};

struct KroneckerPiece {
  Index reps = 0;
  Matrix m;
};

struct DensePiece {
  Matrix m;
};

using PreconditionerPiece = std::variant<DiagonalPiece, KroneckerPiece, DensePiece>;

Index piece_size(const PreconditionerPiece& piece);

struct PreconditionerBlock {
  std::string name;
  Index offset = 0;
  Index size = 0;
  std::vector<PreconditionerPiece> pieces;
  Vector gamma;  // sum_j dD_ij / du_j
};

struct PreconditionerBlocks {
  ParamLayout layout;
  std::vector<PreconditionerBlock> blocks;
  // Second moments of lagged regressors / latent states replaced by I.
  bool identity_second_moment = false;

  static PreconditionerBlocks identity(const ParamLayout& layout);
  const PreconditionerBlock& block(std::string_view name) const;
  Vector gamma() const;
};

/// Same layout with pieces replaced by factors F, F F^T = D (lower Cholesky
/// for Kronecker and dense pieces, elementwise sqrt for diagonal ones).
struct NoiseFactor {
  PreconditionerBlocks factors;
};

constexpr double kDefaultNuPhi = 1e-4;

/// Complete-data Fisher preconditioner transported to the unconstrained
/// coordinates, with its divergence correction.
PreconditionerBlocks precondition(const ModelParams& params, double nu_phi = kDefaultNuPhi);

/// The transition-weight block in the original (positive) coordinates:
/// D = diag(phi) + nu I and correction 1 per entry.
struct ConstrainedPhiBlock {
  Vector diag;
  Vector gamma;
};
ConstrainedPhiBlock constrained_phi_block(const Matrix& phi, double nu_phi = kDefaultNuPhi);

Vector apply(const PreconditionerBlocks& blocks, const Vector& v);
GradientVector apply(const PreconditionerBlocks& blocks, const GradientVector& grad);
/// D^{-1} v.
Vector solve(const PreconditionerBlocks& blocks, const Vector& v);

NoiseFactor noise_factor(const PreconditionerBlocks& blocks);
/// F xi.
Vector apply(const NoiseFactor& factor, const Vector& xi);

/// Dense materialization, for tests and diagnostics.
Matrix dense(const PreconditionerBlocks& blocks);
Matrix dense_block(const PreconditionerBlocks& blocks, std::string_view name);

}  // namespace sgmcmc
