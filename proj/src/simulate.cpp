#include "sgmcmc/simulate.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "detail.hpp"
#include "sgmcmc/rng.hpp"

namespace sgmcmc {

using detail::overloaded;

Vector stationary_distribution(const Matrix& Pi, double tol) {
  const Index K = Pi.rows();
  if (K == 0 || Pi.cols() != K) throw std::invalid_argument("transition matrix must be square");
  const Matrix lazy = 0.5 * (Matrix::Identity(K, K) + Pi);
  Vector p = Vector::Constant(K, 1.0 / static_cast<double>(K));
  for (int it = 0; it < 1000000; ++it) {
    Vector next = lazy.transpose() * p;
    next /= next.sum();
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (change < tol) return p;
  }
  // Slow mixing: solve p^T (Pi - I) = 0 with sum(p) = 1 directly.
  Matrix sys(K + 1, K);
  sys.topRows(K) = Pi.transpose() - Matrix::Identity(K, K);
  sys.row(K).setOnes();
  Vector rhs = Vector::Zero(K + 1);
  rhs(K) = 1.0;
  p = sys.colPivHouseholderQr().solve(rhs);
  p = p.cwiseMax(0.0);
  return p / p.sum();
}

namespace {

double spectral_radius(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

Matrix steady_state_covariance(const Matrix& A, const Matrix& Q, double tol, int max_iter) {
  const Index n = A.rows();
  if (spectral_radius(A) >= 1.0) return 10.0 * Matrix::Identity(n, n);
  Matrix V = Q;
  for (int it = 0; it < max_iter; ++it) {
    Matrix next = detail::symmetrize(Q + A * V * A.transpose());
    const double change = (next - V).cwiseAbs().maxCoeff();
    V = next;
    if (change < tol) break;
  }
  return V;
}

Matrix switching_steady_state_covariance(const std::vector<Matrix>& A, const std::vector<Matrix>& Q,
                                         const Vector& weights, double tol, int max_iter) {
  const Index n = A.at(0).rows();
  Matrix second = Matrix::Zero(n * n, n * n);
  for (size_t k = 0; k < A.size(); ++k)
    second += weights(static_cast<Index>(k)) * Eigen::kroneckerProduct(A[k], A[k]).eval();
  if (spectral_radius(second) >= 1.0) return 10.0 * Matrix::Identity(n, n);
  Matrix Qbar = Matrix::Zero(n, n);
  for (size_t k = 0; k < A.size(); ++k) Qbar += weights(static_cast<Index>(k)) * Q[k];
  Matrix V = Qbar;
  for (int it = 0; it < max_iter; ++it) {
    Matrix next = Qbar;
    for (size_t k = 0; k < A.size(); ++k)
      next += weights(static_cast<Index>(k)) * A[k] * V * A[k].transpose();
    next = detail::symmetrize(next);
    const double change = (next - V).cwiseAbs().maxCoeff();
    V = next;
    if (change < tol) break;
  }
  return V;
}

InitialDistribution default_initial_distribution(const ModelParams& params) {
  InitialDistribution p0;
  std::visit(overloaded{
                 [&](const GaussianHMMParams& p) { p0.discrete = stationary_distribution(transition_matrix(p.phi)); },
                 [&](const ARHMMParams& p) { p0.discrete = stationary_distribution(transition_matrix(p.phi)); },
                 [&](const LGSSMParams& p) {
                   p0.mean = Vector::Zero(p.A.rows());
                   p0.cov = steady_state_covariance(p.A, covariance_from_factor(p.psi_q));
                 },
                 [&](const SLDSParams& p) {
                   p0.discrete = stationary_distribution(transition_matrix(p.phi));
                   std::vector<Matrix> Q;
                   for (const auto& psi : p.psi_q) Q.push_back(covariance_from_factor(psi));
                   p0.mean = Vector::Zero(p.C.cols());
                   p0.cov = switching_steady_state_covariance(p.A, Q, p0.discrete);
                 }},
             params);
  return p0;
}

namespace {

Vector noise_from_factor(Rng& rng, const Matrix& psi) {
  const Vector xi = standard_normal(rng, psi.rows());
  return psi.transpose().triangularView<Eigen::Upper>().solve(xi);
}

Vector gaussian_from_cov(Rng& rng, const Vector& mean, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("initial covariance is not positive definite");
  return mean + llt.matrixL() * standard_normal(rng, mean.size());
}

std::vector<int> simulate_chain(Rng& rng, const Matrix& Pi, const Vector& p0, Index T) {
  std::vector<int> z(static_cast<size_t>(T));
  int prev = sample_categorical(rng, p0);
  for (Index t = 0; t < T; ++t) {
    prev = sample_categorical(rng, Pi.row(prev).transpose());
    z[static_cast<size_t>(t)] = prev;
  }
  return z;
}

}  // namespace

SimulatedData simulate(const ModelParams& params, Index T, std::uint64_t seed) {
  validate(params);
  if (T < 1) throw std::invalid_argument("sequence length must be at least 1");
  Rng rng = make_rng(seed);
  const InitialDistribution p0 = default_initial_distribution(params);
  SimulatedData out;
  const Index m = obs_dim(params);
  out.obs = Matrix::Zero(T, m);
  std::visit(overloaded{
                 [&](const GaussianHMMParams& p) {
                   out.latents.z = simulate_chain(rng, transition_matrix(p.phi), p0.discrete, T);
                   for (Index t = 0; t < T; ++t) {
                     const int k = out.latents.z[static_cast<size_t>(t)];
                     out.obs.row(t) = (p.mu[k] + noise_from_factor(rng, p.psi_sigma[k])).transpose();
                   }
                 },
                 [&](const ARHMMParams& p) {
                   out.latents.z = simulate_chain(rng, transition_matrix(p.phi), p0.discrete, T);
                   for (Index t = 0; t < T; ++t) {
                     const int k = out.latents.z[static_cast<size_t>(t)];
                     out.obs.row(t) =
                         (p.A[k] * lagged_context(out.obs, t, p.lag) + noise_from_factor(rng, p.psi_q[k])).transpose();
                   }
                 },
                 [&](const LGSSMParams& p) {
                   const Index n = p.A.rows();
                   out.latents.x = Matrix::Zero(T, n);
                   Vector x = gaussian_from_cov(rng, p0.mean, p0.cov);
                   for (Index t = 0; t < T; ++t) {
                     x = p.A * x + noise_from_factor(rng, p.psi_q);
                     out.latents.x.row(t) = x.transpose();
                     out.obs.row(t) = (p.C * x + noise_from_factor(rng, p.psi_r)).transpose();
                   }
                 },
                 [&](const SLDSParams& p) {
                   const Index n = p.C.cols();
                   out.latents.z = simulate_chain(rng, transition_matrix(p.phi), p0.discrete, T);
                   out.latents.x = Matrix::Zero(T, n);
                   Vector x = gaussian_from_cov(rng, p0.mean, p0.cov);
                   for (Index t = 0; t < T; ++t) {
                     const int k = out.latents.z[static_cast<size_t>(t)];
                     x = p.A[k] * x + noise_from_factor(rng, p.psi_q[k]);
                     out.latents.x.row(t) = x.transpose();
                     out.obs.row(t) = (p.C * x + noise_from_factor(rng, p.psi_r)).transpose();
                   }
                 }},
             params);
  return out;
}

SyntheticModel parse_synthetic(std::string_view name) {
  if (name == "arhmm") return SyntheticModel::ARHMM;
  if (name == "lgssm") return SyntheticModel::LGSSM;
  if (name == "slds") return SyntheticModel::SLDS;
  if (name == "rc-hmm" || name == "rc_hmm") return SyntheticModel::RCHMM;
  throw std::invalid_argument("unknown synthetic model '" + std::string(name) + "'");
}

std::string_view to_string(SyntheticModel model) {
  switch (model) {
    case SyntheticModel::ARHMM: return "arhmm";
    case SyntheticModel::LGSSM: return "lgssm";
    case SyntheticModel::SLDS: return "slds";
    case SyntheticModel::RCHMM: return "rc-hmm";
  }
  return "unknown";
}

Matrix rotation2(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

ModelParams make_synthetic_star(SyntheticModel model) {
  constexpr double pi = std::numbers::pi;
  const Matrix I2 = Matrix::Identity(2, 2);
  // Noise factors: Q = 0.1 I has precision factor sqrt(10) I.
  const Matrix psi_q = std::sqrt(10.0) * I2;
  switch (model) {
    case SyntheticModel::ARHMM: {
      ARHMMParams p;
      p.phi.resize(2, 2);
      p.phi << 0.1, 0.9, 0.9, 0.1;
      p.A = {0.9 * rotation2(-pi / 4), 0.9 * rotation2(pi / 4)};
      p.psi_q = {psi_q, psi_q};
      p.lag = 1;
      return p;
    }
    case SyntheticModel::LGSSM: {
      LGSSMParams p;
      p.A = 0.7 * rotation2(pi / 4);
      p.psi_q = psi_q;
      p.C = I2;
      p.psi_r = I2;
      return p;
    }
    case SyntheticModel::SLDS: {
      SLDSParams p;
      p.phi.resize(2, 2);
      p.phi << 0.9, 0.1, 0.1, 0.9;
      p.A = {0.9 * rotation2(-pi / 4), 0.9 * rotation2(pi / 4)};
      p.psi_q = {psi_q, psi_q};
      p.C = I2;
      p.psi_r = psi_q;
      return p;
    }
    case SyntheticModel::RCHMM: {
      GaussianHMMParams p;
      p.phi = Matrix::Zero(8, 8);
      p.phi(0, 0) = 0.01, p.phi(0, 1) = 0.99;
      p.phi(1, 1) = 0.01, p.phi(1, 2) = 0.99;
      p.phi(2, 0) = 0.85, p.phi(2, 3) = 0.15;
      p.phi(3, 4) = 1.0;
      p.phi(4, 4) = 0.01, p.phi(4, 5) = 0.99;
      p.phi(5, 5) = 0.01, p.phi(5, 6) = 0.99;
      p.phi(6, 4) = 0.85, p.phi(6, 7) = 0.15;
      p.phi(7, 0) = 1.0;
      // Structural zeros are floored so the weights stay strictly positive.
      p.phi = p.phi.cwiseMax(1e-12);
      const double means[8][2] = {{-50, 0}, {30, -30}, {30, 30}, {-100, -10},
                                  {40, -40}, {-65, 0}, {40, 40}, {100, 10}};
      for (const auto& mu : means) {
        Vector v(2);
        v << mu[0], mu[1];
        p.mu.push_back(v);
        p.psi_sigma.push_back(I2 / std::sqrt(20.0));
      }
      return p;
    }
  }
  throw std::invalid_argument("unknown synthetic model");
}

}  // namespace sgmcmc
