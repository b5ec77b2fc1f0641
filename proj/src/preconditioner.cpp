#include "sgmcmc/preconditioner.hpp"

#include <stdexcept>

#include "detail.hpp"

namespace sgmcmc {

using detail::overloaded;

Index piece_size(const PreconditionerPiece& piece) {
  return std::visit(overloaded{[](const DiagonalPiece& p) { return p.diag.size(); },
                               [](const KroneckerPiece& p) { return p.reps * p.m.rows(); },
                               [](const DensePiece& p) { return p.m.rows(); }},
                    piece);
}

PreconditionerBlocks PreconditionerBlocks::identity(const ParamLayout& layout) {
  PreconditionerBlocks out;
  out.layout = layout;
  for (const auto& b : layout.blocks())
    out.blocks.push_back({b.name, b.offset, b.size, {DiagonalPiece{Vector::Ones(b.size)}}, Vector::Zero(b.size)});
  return out;
}

const PreconditionerBlock& PreconditionerBlocks::block(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw std::invalid_argument("no preconditioner block named '" + std::string(name) + "'");
}

Vector PreconditionerBlocks::gamma() const {
  Vector out = Vector::Zero(layout.dim());
  for (const auto& b : blocks) out.segment(b.offset, b.size) = b.gamma;
  return out;
}

namespace {

class BlockBuilder {
 public:
  explicit BlockBuilder(const ParamBlock& b) { block_ = {b.name, b.offset, b.size, {}, Vector::Zero(b.size)}; }

  void phi(const Matrix& phi, double nu) {
    Vector d(phi.size()), g(phi.size());
    Index i = 0;
    for (Index r = 0; r < phi.rows(); ++r)
      for (Index c = 0; c < phi.cols(); ++c, ++i) {
        const double f = phi(r, c);
        d(i) = (f + nu) / (f * f);
        g(i) = -(f + 2.0 * nu) / (f * f);
      }
    push(DiagonalPiece{d}, g);
  }

  void kron(Index reps, const Matrix& m) {
    if (reps > 0 && m.rows() > 0) push(KroneckerPiece{reps, m}, Vector::Zero(reps * m.rows()));
  }

  // Half the precision on each lower-triangle column, with the log-diagonal
  // coordinate rescaled by 1 / psi_cc.
  void factor(const Matrix& psi) {
    const Index d = psi.rows();
    const Matrix P = precision_from_factor(psi);
    for (Index c = 0; c < d; ++c) {
      const Index len = d - c;
      const double pcc = psi(c, c);
      Vector scale = Vector::Ones(len);
      scale(0) = 1.0 / pcc;
      const Matrix m = 0.5 * scale.asDiagonal() * P.bottomRightCorner(len, len) * scale.asDiagonal();
      Vector g(len);
      double lead = 0.0;
      for (Index l = 0; l < c; ++l) lead += psi(c, l) * psi(c, l);
      g(0) = 0.5 * static_cast<double>(d - 1 - c) - lead / (pcc * pcc);
      for (Index i = c + 1; i < d; ++i) {
        double cross = 0.0;
        for (Index l = 0; l < c; ++l) cross += psi(i, l) * psi(c, l);
        g(i - c) = 0.5 * psi(i, c) * static_cast<double>(d - c) - 0.5 * cross / pcc;
      }
      push(DensePiece{detail::symmetrize(m)}, g);
    }
  }

  PreconditionerBlock finish() {
    if (pos_ != block_.size) throw std::logic_error("preconditioner block '" + block_.name + "' has the wrong size");
    return std::move(block_);
  }

 private:
  void push(PreconditionerPiece piece, const Vector& g) {
    const Index n = piece_size(piece);
    block_.gamma.segment(pos_, n) = g;
    block_.pieces.push_back(std::move(piece));
    pos_ += n;
  }

  PreconditionerBlock block_;
  Index pos_ = 0;
};

// I (x) R restricted to free emission entries; every column with free
// entries frees the same rows.
void emission_block(BlockBuilder& b, const Matrix& C, const Matrix& R) {
  const Index m = C.rows(), n = C.cols();
  std::vector<Index> rows;
  Index reps = 0;
  for (Index c = 0; c < n; ++c) {
    std::vector<Index> free;
    for (Index r = 0; r < m; ++r)
      if (is_free_emission_entry(r, c, m, n)) free.push_back(r);
    if (free.empty()) continue;
    if (reps > 0 && free != rows) throw std::logic_error("non-uniform free emission rows");
    rows = free;
    ++reps;
  }
  if (reps > 0) b.kron(reps, R(rows, rows));
}

}  // namespace

PreconditionerBlocks precondition(const ModelParams& params, double nu_phi) {
  validate(params);
  if (!(nu_phi > 0.0)) throw std::invalid_argument("nu_phi must be positive");
  PreconditionerBlocks out;
  out.layout = layout_of(params);
  const auto builder = [&](std::string_view name) { return BlockBuilder(out.layout.block(name)); };
  std::visit(overloaded{
                 [&](const GaussianHMMParams& p) {
                   auto phi = builder("phi");
                   phi.phi(p.phi, nu_phi);
                   auto mu = builder("mu");
                   auto psi = builder("psi_sigma");
                   for (size_t k = 0; k < p.mu.size(); ++k) {
                     mu.kron(1, covariance_from_factor(p.psi_sigma[k]));
                     psi.factor(p.psi_sigma[k]);
                   }
                   out.blocks = {phi.finish(), mu.finish(), psi.finish()};
                 },
                 [&](const ARHMMParams& p) {
                   out.identity_second_moment = true;
                   auto phi = builder("phi");
                   phi.phi(p.phi, nu_phi);
                   auto A = builder("A");
                   auto psi = builder("psi_q");
                   for (size_t k = 0; k < p.A.size(); ++k) {
                     A.kron(p.A[k].cols(), covariance_from_factor(p.psi_q[k]));
                     psi.factor(p.psi_q[k]);
                   }
                   out.blocks = {phi.finish(), A.finish(), psi.finish()};
                 },
                 [&](const LGSSMParams& p) {
                   out.identity_second_moment = true;
                   auto A = builder("A");
                   A.kron(p.A.cols(), covariance_from_factor(p.psi_q));
                   auto psi_q = builder("psi_q");
                   psi_q.factor(p.psi_q);
                   auto C = builder("C");
                   emission_block(C, p.C, covariance_from_factor(p.psi_r));
                   auto psi_r = builder("psi_r");
                   psi_r.factor(p.psi_r);
                   out.blocks = {A.finish(), psi_q.finish(), C.finish(), psi_r.finish()};
                 },
                 [&](const SLDSParams& p) {
                   out.identity_second_moment = true;
                   auto phi = builder("phi");
                   phi.phi(p.phi, nu_phi);
                   auto A = builder("A");
                   auto psi_q = builder("psi_q");
                   for (size_t k = 0; k < p.A.size(); ++k) {
                     A.kron(p.A[k].cols(), covariance_from_factor(p.psi_q[k]));
                     psi_q.factor(p.psi_q[k]);
                   }
                   auto C = builder("C");
                   emission_block(C, p.C, covariance_from_factor(p.psi_r));
                   auto psi_r = builder("psi_r");
                   psi_r.factor(p.psi_r);
                   out.blocks = {phi.finish(), A.finish(), psi_q.finish(), C.finish(), psi_r.finish()};
                 }},
             params);
  return out;
}

ConstrainedPhiBlock constrained_phi_block(const Matrix& phi, double nu_phi) {
  ConstrainedPhiBlock out;
  out.diag = phi.transpose().reshaped().array() + nu_phi;
  out.gamma = Vector::Ones(phi.size());
  return out;
}

namespace {

void check_size(const PreconditionerBlocks& blocks, Index n) {
  if (n != blocks.layout.dim()) throw std::invalid_argument("vector does not match the preconditioner layout");
}

template <class Fn>
Vector map_pieces(const PreconditionerBlocks& blocks, const Vector& v, Fn&& fn) {
  check_size(blocks, v.size());
  Vector out(v.size());
  for (const auto& b : blocks.blocks) {
    Index pos = b.offset;
    for (const auto& piece : b.pieces) {
      const Index n = piece_size(piece);
      out.segment(pos, n) = fn(piece, v.segment(pos, n));
      pos += n;
    }
  }
  return out;
}

}  // namespace

Vector apply(const PreconditionerBlocks& blocks, const Vector& v) {
  return map_pieces(blocks, v, [](const PreconditionerPiece& piece, const auto& seg) -> Vector {
    return std::visit(overloaded{[&](const DiagonalPiece& p) -> Vector { return p.diag.cwiseProduct(seg); },
                                 [&](const KroneckerPiece& p) -> Vector {
                                   const Index d = p.m.rows();
                                   return (p.m * Vector(seg).reshaped(d, p.reps)).reshaped();
                                 },
                                 [&](const DensePiece& p) -> Vector { return p.m * seg; }},
                      piece);
  });
}

GradientVector apply(const PreconditionerBlocks& blocks, const GradientVector& grad) {
  if (!(grad.layout == blocks.layout)) throw std::invalid_argument("gradient layout does not match the preconditioner");
  return {grad.layout, apply(blocks, grad.values)};
}

Vector solve(const PreconditionerBlocks& blocks, const Vector& v) {
  return map_pieces(blocks, v, [](const PreconditionerPiece& piece, const auto& seg) -> Vector {
    return std::visit(
        overloaded{[&](const DiagonalPiece& p) -> Vector { return seg.cwiseQuotient(p.diag); },
                   [&](const KroneckerPiece& p) -> Vector {
                     const Index d = p.m.rows();
                     return detail::checked_llt(p.m, "preconditioner block").solve(Vector(seg).reshaped(d, p.reps)).reshaped();
                   },
                   [&](const DensePiece& p) -> Vector { return detail::checked_llt(p.m, "preconditioner block").solve(seg); }},
        piece);
  });
}

NoiseFactor noise_factor(const PreconditionerBlocks& blocks) {
  NoiseFactor out{blocks};
  for (auto& b : out.factors.blocks) {
    for (auto& piece : b.pieces) {
      std::visit(overloaded{[&](DiagonalPiece& p) {
                              if (!(p.diag.array() > 0.0).all() || !p.diag.allFinite())
                                throw NumericalError("preconditioner block '" + b.name + "' is not positive definite");
                              p.diag = p.diag.cwiseSqrt();
                            },
                            [&](KroneckerPiece& p) { p.m = detail::checked_llt(p.m, "preconditioner block '" + b.name + "'").matrixL(); },
                            [&](DensePiece& p) { p.m = detail::checked_llt(p.m, "preconditioner block '" + b.name + "'").matrixL(); }},
                 piece);
    }
  }
  return out;
}

Vector apply(const NoiseFactor& factor, const Vector& xi) { return apply(factor.factors, xi); }

Matrix dense_block(const PreconditionerBlocks& blocks, std::string_view name) {
  const auto& b = blocks.block(name);
  Matrix out = Matrix::Zero(b.size, b.size);
  Index pos = 0;
  for (const auto& piece : b.pieces) {
    const Index n = piece_size(piece);
    std::visit(overloaded{[&](const DiagonalPiece& p) { out.block(pos, pos, n, n) = p.diag.asDiagonal(); },
                          [&](const KroneckerPiece& p) {
                            const Index d = p.m.rows();
                            for (Index r = 0; r < p.reps; ++r) out.block(pos + r * d, pos + r * d, d, d) = p.m;
                          },
                          [&](const DensePiece& p) { out.block(pos, pos, n, n) = p.m; }},
               piece);
    pos += n;
  }
  return out;
}

Matrix dense(const PreconditionerBlocks& blocks) {
  Matrix out = Matrix::Zero(blocks.layout.dim(), blocks.layout.dim());
  for (const auto& b : blocks.blocks) out.block(b.offset, b.offset, b.size, b.size) = dense_block(blocks, b.name);
  return out;
}

}  // namespace sgmcmc
