#pragma once

// Independent reference computations used by the tests: brute-force path
// enumeration, dense joint-Gaussian conditioning and finite differences.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sgmcmc/kalman.hpp"
#include "sgmcmc/params.hpp"
#include "sgmcmc/rng.hpp"

namespace oracle {

using sgmcmc::Index;
using sgmcmc::Matrix;
using sgmcmc::Vector;

struct DiscreteEnumeration {
  double loglik = 0.0;
  std::vector<Matrix> pairwise;  // (z_{t-1}, z_t), first entry uses the pre-window state
  Matrix marginals;              // T x K
};

// Sums over every path (z_{-1}, z_0, ..., z_{T-1}).
inline DiscreteEnumeration enumerate_hmm(const Matrix& log_lik, const Matrix& Pi, const Vector& p0) {
  const Index T = log_lik.rows(), K = log_lik.cols();
  DiscreteEnumeration out;
  out.pairwise.assign(static_cast<size_t>(T), Matrix::Zero(K, K));
  out.marginals = Matrix::Zero(T, K);
  std::vector<int> path(static_cast<size_t>(T + 1), 0);
  double total = 0.0;
  while (true) {
    double p = p0(path[0]);
    for (Index t = 0; t < T; ++t)
      p *= Pi(path[t], path[t + 1]) * std::exp(log_lik(t, path[t + 1]));
    total += p;
    for (Index t = 0; t < T; ++t) {
      out.pairwise[static_cast<size_t>(t)](path[t], path[t + 1]) += p;
      out.marginals(t, path[t + 1]) += p;
    }
    Index pos = 0;
    while (pos <= T && ++path[static_cast<size_t>(pos)] == K) path[static_cast<size_t>(pos++)] = 0;
    if (pos > T) break;
  }
  out.loglik = std::log(total);
  for (auto& m : out.pairwise) m /= total;
  out.marginals /= total;
  return out;
}

struct GaussianConditioning {
  double loglik = 0.0;
  Vector mean;  // stacked (x_{-1}, x_0, ..., x_{T-1})
  Matrix cov;
};

// Dense joint Gaussian over latents and observations, conditioned on y.
inline GaussianConditioning condition_lgssm(const std::vector<Matrix>& A, const std::vector<Matrix>& Q,
                                            const std::vector<int>& regimes, const Matrix& C, const Matrix& R,
                                            const Vector& mean0, const Matrix& cov0, const Matrix& obs) {
  const Index T = obs.rows(), n = C.cols(), m = C.rows();
  const Index nx = n * (T + 1), ny = m * T;
  // Latents are linear in (x_{-1}, w_0, ..., w_{T-1}).
  Matrix Lx = Matrix::Zero(nx, n * (T + 1));
  Lx.topLeftCorner(n, n).setIdentity();
  for (Index t = 0; t < T; ++t) {
    const int k = regimes.empty() ? 0 : regimes[static_cast<size_t>(t)];
    Lx.middleRows(n * (t + 1), n) = A[static_cast<size_t>(k)] * Lx.middleRows(n * t, n);
    Lx.block(n * (t + 1), n * (t + 1), n, n).setIdentity();
  }
  Matrix noise_cov = Matrix::Zero(n * (T + 1), n * (T + 1));
  noise_cov.topLeftCorner(n, n) = cov0;
  for (Index t = 0; t < T; ++t) {
    const int k = regimes.empty() ? 0 : regimes[static_cast<size_t>(t)];
    noise_cov.block(n * (t + 1), n * (t + 1), n, n) = Q[static_cast<size_t>(k)];
  }
  Vector noise_mean = Vector::Zero(n * (T + 1));
  noise_mean.head(n) = mean0;
  const Vector mx = Lx * noise_mean;
  const Matrix Sxx = Lx * noise_cov * Lx.transpose();
  Matrix H = Matrix::Zero(ny, nx);
  for (Index t = 0; t < T; ++t) H.block(m * t, n * (t + 1), m, n) = C;
  Matrix Rbig = Matrix::Zero(ny, ny);
  for (Index t = 0; t < T; ++t) Rbig.block(m * t, m * t, m, m) = R;
  const Vector my = H * mx;
  const Matrix Syy = H * Sxx * H.transpose() + Rbig;
  const Matrix Sxy = Sxx * H.transpose();
  Vector y(ny);
  for (Index t = 0; t < T; ++t) y.segment(m * t, m) = obs.row(t).transpose();
  Eigen::LLT<Matrix> llt(Syy);
  GaussianConditioning out;
  const Vector r = y - my;
  const Matrix L = llt.matrixL();
  out.loglik = -0.5 * ny * std::log(2 * M_PI) - L.diagonal().array().log().sum() - 0.5 * r.dot(llt.solve(r));
  out.mean = mx + Sxy * llt.solve(r);
  out.cov = Sxx - Sxy * llt.solve(Sxy.transpose());
  return out;
}

inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& u, double eps) {
  Vector g(u.size());
  for (Index i = 0; i < u.size(); ++i) {
    Vector up = u, down = u;
    up(i) += eps;
    down(i) -= eps;
    g(i) = (f(up) - f(down)) / (2 * eps);
  }
  return g;
}

inline Matrix random_factor(sgmcmc::Rng& rng, Index d, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.7, 1.4);
  Matrix psi = Matrix::Zero(d, d);
  for (Index c = 0; c < d; ++c) {
    psi(c, c) = scale * unif(rng);
    for (Index r = c + 1; r < d; ++r) psi(r, c) = 0.3 * scale * normal(rng);
  }
  return psi;
}

inline Matrix random_matrix(sgmcmc::Rng& rng, Index r, Index c, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix a(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) a(i, j) = normal(rng);
  return a;
}

inline Matrix random_phi(sgmcmc::Rng& rng, Index K) {
  std::uniform_real_distribution<double> unif(0.2, 1.5);
  Matrix phi(K, K);
  for (Index i = 0; i < K; ++i)
    for (Index j = 0; j < K; ++j) phi(i, j) = unif(rng);
  return phi;
}

// A random stable matrix with spectral norm at most `radius`.
inline Matrix random_stable(sgmcmc::Rng& rng, Index n, double radius) {
  Matrix a = random_matrix(rng, n, n, 1.0);
  Eigen::JacobiSVD<Matrix> svd(a);
  return a * (radius / svd.singularValues()(0));
}

inline sgmcmc::ModelParams random_params(sgmcmc::Family family, sgmcmc::Rng& rng, Index K = 2, Index m = 2,
                                         Index n = 2, int lag = 1) {
  using namespace sgmcmc;
  switch (family) {
    case Family::GaussianHMM: {
      GaussianHMMParams p;
      p.phi = random_phi(rng, K);
      for (Index k = 0; k < K; ++k) {
        p.mu.push_back(random_matrix(rng, m, 1, 1.5));
        p.psi_sigma.push_back(random_factor(rng, m, 1.0));
      }
      return p;
    }
    case Family::ARHMM: {
      ARHMMParams p;
      p.phi = random_phi(rng, K);
      p.lag = lag;
      for (Index k = 0; k < K; ++k) {
        p.A.push_back(random_matrix(rng, m, m * lag, 0.4 / lag));
        p.psi_q.push_back(random_factor(rng, m, 1.5));
      }
      return p;
    }
    case Family::LGSSM: {
      LGSSMParams p;
      p.A = random_stable(rng, n, 0.8);
      p.psi_q = random_factor(rng, n, 1.5);
      p.C = identity_emission(m, n);
      for (Index c = 0; c < n; ++c)
        for (Index r = 0; r < m; ++r)
          if (is_free_emission_entry(r, c, m, n)) p.C(r, c) = random_matrix(rng, 1, 1, 0.7)(0, 0);
      p.psi_r = random_factor(rng, m, 1.2);
      return p;
    }
    case Family::SLDS: {
      SLDSParams p;
      p.phi = random_phi(rng, K);
      for (Index k = 0; k < K; ++k) {
        p.A.push_back(random_stable(rng, n, 0.8));
        p.psi_q.push_back(random_factor(rng, n, 1.5));
      }
      p.C = identity_emission(m, n);
      for (Index c = 0; c < n; ++c)
        for (Index r = 0; r < m; ++r)
          if (is_free_emission_entry(r, c, m, n)) p.C(r, c) = random_matrix(rng, 1, 1, 0.7)(0, 0);
      p.psi_r = random_factor(rng, m, 1.2);
      return p;
    }
  }
  return {};
}

}  // namespace oracle
