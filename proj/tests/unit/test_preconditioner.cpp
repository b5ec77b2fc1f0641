#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sgmcmc/preconditioner.hpp"

using namespace sgmcmc;

namespace {

// Gamma_i = sum_j dD_ij / du_j by central differences of the dense D.
Vector fd_divergence(const ModelParams& shape, const Vector& u, double eps = 1e-6) {
  const Index d = u.size();
  Vector out = Vector::Zero(d);
  for (Index j = 0; j < d; ++j) {
    Vector up = u, down = u;
    up(j) += eps;
    down(j) -= eps;
    const Matrix Dp = dense(precondition(constrain(shape, up)));
    const Matrix Dm = dense(precondition(constrain(shape, down)));
    out += (Dp.col(j) - Dm.col(j)) / (2 * eps);
  }
  return out;
}

std::vector<ModelParams> sample_points(std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<ModelParams> out;
  out.push_back(oracle::random_params(Family::GaussianHMM, rng, 2, 3));
  out.push_back(oracle::random_params(Family::ARHMM, rng, 2, 2, 2, 2));
  out.push_back(oracle::random_params(Family::LGSSM, rng, 1, 3, 2));
  out.push_back(oracle::random_params(Family::LGSSM, rng, 1, 2, 3));
  out.push_back(oracle::random_params(Family::SLDS, rng, 3, 3, 2));
  return out;
}

}  // namespace

TEST_CASE("correction term equals the divergence of D") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& p : sample_points(100 + seed)) {
      const auto blocks = precondition(p);
      const Vector fd = fd_divergence(p, unconstrain(p));
      const Vector gamma = blocks.gamma();
      for (const auto& b : blocks.layout.blocks()) {
        CAPTURE(to_string(family_of(p)));
        CAPTURE(b.name);
        const Vector a = gamma.segment(b.offset, b.size), e = fd.segment(b.offset, b.size);
        if (e.norm() < 1e-8)
          CHECK(a.norm() < 1e-6);
        else
          CHECK((a - e).norm() / e.norm() < 1e-4);
      }
    }
  }
}

TEST_CASE("D blocks are SPD and apply, solve and factor agree with dense forms") {
  Rng rng = make_rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    for (const auto& p : sample_points(200 + rep)) {
      const auto blocks = precondition(p);
      const Matrix D = dense(blocks);
      CHECK((D - D.transpose()).norm() == 0.0);
      CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(D).eigenvalues().minCoeff() > 0.0);
      const Vector v = standard_normal(rng, D.rows());
      CHECK((apply(blocks, v) - D * v).norm() <= 1e-12 * (D * v).norm());
      CHECK((apply(blocks, solve(blocks, v)) - v).norm() <= 1e-10 * v.norm());
      const Matrix F = dense(noise_factor(blocks).factors);
      CHECK((F * F.transpose() - D).norm() <= 1e-10 * D.norm());
      CHECK((apply(noise_factor(blocks), v) - F * v).norm() <= 1e-12 * (F * v).norm());
    }
  }
}

TEST_CASE("structured pieces") {
  // Kronecker (I (x) Q) vec(G) = vec(Q G) on 3 x 3.
  Rng rng = make_rng(3);
  const Matrix Q = covariance_from_factor(oracle::random_factor(rng, 3, 1.0));
  LGSSMParams lg;
  lg.A = oracle::random_stable(rng, 3, 0.5);
  lg.psi_q = factor_from_covariance(Q);
  lg.C = identity_emission(3, 3);
  lg.psi_r = oracle::random_factor(rng, 3, 1.0);
  const auto blocks = precondition(lg);
  const Matrix G = oracle::random_matrix(rng, 3, 3, 1.0);
  const Vector u = standard_normal(rng, blocks.layout.dim());
  Vector v = u;
  v.segment(blocks.layout.block("A").offset, 9) = G.reshaped();
  CHECK((apply(blocks, v).segment(0, 9) - (Q * G).reshaped()).norm() < 1e-12);
  Matrix kron = Matrix::Zero(9, 9);
  for (int i = 0; i < 3; ++i) kron.block(3 * i, 3 * i, 3, 3) = Q;
  CHECK((dense_block(blocks, "A") - kron).norm() < 1e-12);
  const Matrix L = Eigen::LLT<Matrix>(Q).matrixL();
  const Matrix FA = dense_block(noise_factor(blocks).factors, "A");
  for (int i = 0; i < 3; ++i) CHECK((FA.block(3 * i, 3 * i, 3, 3) - L).norm() < 1e-12);
  CHECK(blocks.block("C").size == 0);
  CHECK(blocks.identity_second_moment);

  // Identity covariance gives an identity mean block.
  GaussianHMMParams hmm;
  hmm.phi = Matrix::Ones(2, 2);
  hmm.mu = {Vector::Zero(2), Vector::Ones(2)};
  hmm.psi_sigma = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  const auto hb = precondition(hmm);
  CHECK((dense_block(hb, "mu") - Matrix::Identity(4, 4)).norm() == 0.0);
  CHECK_FALSE(hb.identity_second_moment);

  // Identity preconditioner is a no-op.
  const auto id = PreconditionerBlocks::identity(hb.layout);
  const Vector w = standard_normal(rng, hb.layout.dim());
  CHECK(apply(id, w) == w);
  CHECK(id.gamma().isZero());
}

TEST_CASE("transition weight block") {
  const double nu = 1e-4;
  const auto c = constrained_phi_block(Matrix::Ones(1, 2), nu);
  CHECK(c.diag(0) == doctest::Approx(1.0 + nu));
  CHECK(c.diag(1) == doctest::Approx(1.0 + nu));
  CHECK(c.gamma(0) == 1.0);
  CHECK(c.gamma(1) == 1.0);

  GaussianHMMParams hmm;
  hmm.phi = Matrix::Constant(2, 2, 1e-12);
  hmm.mu = {Vector::Zero(1), Vector::Ones(1)};
  hmm.psi_sigma = {Matrix::Identity(1, 1), Matrix::Identity(1, 1)};
  const auto blocks = precondition(hmm, nu);
  const auto factor = noise_factor(blocks);
  CHECK(dense_block(factor.factors, "phi").allFinite());
  CHECK(constrained_phi_block(hmm.phi, nu).diag.cwiseSqrt().allFinite());
  // Transport check: D_u = J^{-1} D J^{-T} with J = diag(phi).
  hmm.phi << 0.5, 2.0, 1.5, 0.25;
  const Vector Du = dense_block(precondition(hmm, nu), "phi").diagonal();
  const auto cons = constrained_phi_block(hmm.phi, nu);
  const Vector phi_rm = hmm.phi.transpose().reshaped();
  CHECK((Du - cons.diag.cwiseQuotient(phi_rm.cwiseProduct(phi_rm))).norm() < 1e-12);

  CHECK_THROWS_AS(precondition(hmm, 0.0), std::invalid_argument);
  const GradientVector g{layout_of(hmm), Vector::Zero(3)};
  CHECK_THROWS_AS(apply(blocks, g), std::invalid_argument);
}
