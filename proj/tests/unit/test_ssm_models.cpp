#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "sgmcmc/prior.hpp"
#include "sgmcmc/simulate.hpp"

using namespace sgmcmc;

namespace {
const Family kFamilies[] = {Family::GaussianHMM, Family::ARHMM, Family::LGSSM, Family::SLDS};
}

TEST_CASE("unconstrain and constrain round trip for every family") {
  Rng rng = make_rng(11);
  for (Family f : kFamilies) {
    for (auto [m, n] : {std::pair<Index, Index>{2, 2}, {3, 2}, {2, 3}}) {
      const ModelParams p = oracle::random_params(f, rng, 3, m, n, f == Family::ARHMM ? 2 : 1);
      const Vector u = unconstrain(p);
      CHECK(u.size() == layout_of(p).dim());
      const ModelParams back = constrain(p, u);
      CHECK((unconstrain(back) - u).cwiseAbs().maxCoeff() < 1e-12);
      const Vector u2 = u + 0.1 * Vector::Ones(u.size());
      CHECK((unconstrain(constrain(p, u2)) - u2).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("derived transition and covariance matrices") {
  Matrix phi(2, 2);
  phi << 1, 1, 1, 1;
  CHECK(transition_matrix(phi).isApprox(Matrix::Constant(2, 2, 0.5)));
  CHECK(covariance_from_factor(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
  CHECK(covariance_from_factor(2.0 * Matrix::Identity(2, 2)).isApprox(0.25 * Matrix::Identity(2, 2)));

  Rng rng = make_rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix psi = oracle::random_factor(rng, 3, 1.0);
    const Matrix cov = covariance_from_factor(psi);
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((cov * precision_from_factor(psi) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((factor_from_covariance(cov) - psi).cwiseAbs().maxCoeff() < 1e-10);
    const Matrix Pi = transition_matrix(oracle::random_phi(rng, 4));
    CHECK((Pi.rowwise().sum() - Vector::Ones(4)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("validation rejects constraint violations") {
  ARHMMParams p = std::get<ARHMMParams>(make_synthetic_star(SyntheticModel::ARHMM));
  p.phi(0, 1) = 0.0;
  CHECK_THROWS_AS(validate(ModelParams{p}), std::invalid_argument);
  CHECK_THROWS_AS(unconstrain(ModelParams{p}), std::invalid_argument);

  LGSSMParams l = std::get<LGSSMParams>(make_synthetic_star(SyntheticModel::LGSSM));
  l.C(0, 0) = 1.5;
  CHECK_THROWS_AS(validate(ModelParams{l}), std::invalid_argument);
  l = std::get<LGSSMParams>(make_synthetic_star(SyntheticModel::LGSSM));
  l.psi_q(0, 1) = 0.2;
  CHECK_THROWS_AS(validate(ModelParams{l}), std::invalid_argument);
  CHECK_THROWS_AS(constrain(make_synthetic_star(SyntheticModel::LGSSM), Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("synthetic ground-truth parameters") {
  constexpr double pi = std::numbers::pi;
  const auto ar = std::get<ARHMMParams>(make_synthetic_star(SyntheticModel::ARHMM));
  CHECK((ar.A[0] - 0.9 * rotation2(-pi / 4)).norm() < 1e-14);
  CHECK((ar.A[1] - 0.9 * rotation2(pi / 4)).norm() < 1e-14);
  CHECK((covariance_from_factor(ar.psi_q[0]) - 0.1 * Matrix::Identity(2, 2)).norm() < 1e-14);
  CHECK(transition_matrix(ar.phi)(0, 1) == doctest::Approx(0.9));

  const auto rc = std::get<GaussianHMMParams>(make_synthetic_star(SyntheticModel::RCHMM));
  const Matrix Pi = transition_matrix(rc.phi);
  CHECK(Pi.rows() == 8);
  CHECK(std::abs(Pi(1, 2) - 0.99) < 1e-10);
  CHECK(std::abs(Pi(2, 0) - 0.85) < 1e-10);
  CHECK(std::abs(Pi(3, 4) - 1.0) < 1e-10);
  CHECK((covariance_from_factor(rc.psi_sigma[3]) - 20.0 * Matrix::Identity(2, 2)).norm() < 1e-12);

  const auto slds = std::get<SLDSParams>(make_synthetic_star(SyntheticModel::SLDS));
  CHECK((covariance_from_factor(slds.psi_r) - 0.1 * Matrix::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("stationary distributions") {
  Matrix Pi(2, 2);
  Pi << 0.1, 0.9, 0.9, 0.1;
  CHECK((stationary_distribution(Pi) - Vector::Constant(2, 0.5)).norm() < 1e-12);
  Pi << 0.9, 0.1, 0.3, 0.7;
  const Vector p = stationary_distribution(Pi);
  CHECK((Pi.transpose() * p - p).norm() < 1e-10);
  CHECK(p(0) == doctest::Approx(0.75));

  const auto lg = std::get<LGSSMParams>(make_synthetic_star(SyntheticModel::LGSSM));
  const Matrix Q = covariance_from_factor(lg.psi_q);
  const Matrix V = steady_state_covariance(lg.A, Q);
  CHECK((Q + lg.A * V * lg.A.transpose() - V).norm() < 1e-10);
  CHECK(steady_state_covariance(1.2 * Matrix::Identity(2, 2), Q).isApprox(10.0 * Matrix::Identity(2, 2)));
}

TEST_CASE("simulation is seeded and matches known moments") {
  const ModelParams ar = make_synthetic_star(SyntheticModel::ARHMM);
  const auto a = simulate(ar, 200, 5), b = simulate(ar, 200, 5), c = simulate(ar, 200, 6);
  CHECK(a.obs == b.obs);
  CHECK(a.latents.z == b.latents.z);
  CHECK(a.obs != c.obs);

  LGSSMParams lg = std::get<LGSSMParams>(make_synthetic_star(SyntheticModel::LGSSM));
  lg.A.setZero();
  const auto sim = simulate(ModelParams{lg}, 40000, 9);
  const Matrix X = sim.latents.x;
  const Matrix centered = X.rowwise() - X.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(X.rows() - 1);
  CHECK((cov - 0.1 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.005);
  // Lag-one correlation vanishes when A = 0.
  const double lag1 = (X.topRows(X.rows() - 1).col(0).array() * X.bottomRows(X.rows() - 1).col(0).array()).mean();
  CHECK(std::abs(lag1) < 0.005);
}

TEST_CASE("prior gradient matches finite differences of the prior") {
  Rng rng = make_rng(21);
  PriorSpec prior;
  prior.dirichlet_alpha = 1.5;
  for (Family f : kFamilies) {
    const ModelParams p = oracle::random_params(f, rng, 2, 3, 2);
    const Vector u = unconstrain(p);
    const auto fn = [&](const Vector& v) { return log_prior(constrain(p, v), prior); };
    const Vector fd = oracle::central_difference(fn, u, 1e-6);
    const Vector g = log_prior_grad(p, prior).values;
    CHECK((g - fd).norm() / (1.0 + fd.norm()) < 1e-7);
  }
}

TEST_CASE("prior rejects invalid hyperparameters") {
  PriorSpec prior;
  prior.wishart_nu = 1.5;
  CHECK_THROWS_AS(log_prior(make_synthetic_star(SyntheticModel::ARHMM), prior), std::invalid_argument);
  prior = PriorSpec{};
  prior.dirichlet_alpha = 0.0;
  CHECK_THROWS_AS(log_prior(make_synthetic_star(SyntheticModel::ARHMM), prior), std::invalid_argument);
}
