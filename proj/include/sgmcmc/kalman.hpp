#pragma once

#include <span>
#include <vector>

#include "sgmcmc/params.hpp"
#include "sgmcmc/simulate.hpp"

namespace sgmcmc {

/// Linear-Gaussian dynamics with one transition per regime and a shared
/// emission; an LGSSM is the single-regime case.
struct LinearGaussianSystem {
  std::vector<Matrix> A;
  std::vector<Matrix> Q;
  std::vector<Matrix> Q_inv;
  Matrix C;
  Matrix R;
  Matrix R_inv;

  static LinearGaussianSystem from(const LGSSMParams& params);
  static LinearGaussianSystem from(const SLDSParams& params);
  Index latent_dim() const { return C.cols(); }
  Index obs_dim() const { return C.rows(); }
};

/// Information-form filter and backward messages over one window.
///
/// Entry i refers to time window.begin + i. (h_alpha, lambda_alpha) are the
/// natural parameters of p(x_t | y_{window.begin..t}); (h_beta, lambda_beta)
/// those of p(y_{t+1..window.end-1} | x_t), zero at the last step.
/// (h_prior, lambda_prior) describe the state before the window.
struct GaussianMessageSet {
  IndexRange window;
  std::vector<Vector> h_alpha;
  std::vector<Matrix> lambda_alpha;
  std::vector<Vector> h_beta;
  std::vector<Matrix> lambda_beta;
  Vector h_prior;
  Matrix lambda_prior;
  Vector log_norm;
};

/// Joint Gaussian over (x_{t-1}, x_t) stored as a 2n mean and covariance.
struct GaussianPairwise {
  Vector mean;
  Matrix cov;
};

/// Regime of the transition into each window step; empty means regime 0.
using RegimePath = std::span<const int>;

GaussianMessageSet kalman_forward(const LinearGaussianSystem& sys, const Matrix& obs, IndexRange window,
                                  const InitialDistribution& p0, RegimePath regimes = {});
void kalman_backward(const LinearGaussianSystem& sys, const Matrix& obs, GaussianMessageSet& msgs,
                     RegimePath regimes = {});
std::vector<GaussianPairwise> kalman_pairwise_marginals(const LinearGaussianSystem& sys, const Matrix& obs,
                                                        const GaussianMessageSet& msgs,
                                                        RegimePath regimes = {});

GaussianMessageSet kalman_forward(const LGSSMParams& params, const Matrix& obs, IndexRange window,
                                  const InitialDistribution& p0);
void kalman_backward(const LGSSMParams& params, const Matrix& obs, GaussianMessageSet& msgs);
std::vector<GaussianPairwise> lgssm_pairwise_marginals(const LGSSMParams& params, const Matrix& obs,
                                                       const GaussianMessageSet& msgs);

/// Smoothed means (window x n) and covariances of x_t.
struct SmoothedGaussian {
  Matrix mean;
  std::vector<Matrix> cov;
};
SmoothedGaussian kalman_smoothed_marginals(const GaussianMessageSet& msgs);

double lgssm_marginal_loglik(const LGSSMParams& params, const Matrix& obs, const InitialDistribution& p0);

}  // namespace sgmcmc
