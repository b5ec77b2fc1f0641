#pragma once

#include <vector>

#include "sgmcmc/kalman.hpp"
#include "sgmcmc/params.hpp"
#include "sgmcmc/prior.hpp"
#include "sgmcmc/simulate.hpp"
#include "sgmcmc/subsequence.hpp"

namespace sgmcmc {

/// Posterior pairwise moments over a window. HMM families fill `discrete`
/// (K x K joint of (z_{t-1}, z_t)), LGSSM fills `gaussian`, SLDS fills both
/// and treats them as independent at each step.
struct PairwiseMarginals {
  IndexRange window;
  std::vector<Matrix> discrete;
  std::vector<GaussianPairwise> gaussian;
};

PairwiseMarginals pairwise_marginals(const ModelParams& params, const Matrix& obs, IndexRange window,
                                     const InitialDistribution& p0);

/// Weighted sum over core steps of E[grad log p(y_t, u_t | u_{t-1}, theta)]
/// under the given pairwise moments. No prior term.
GradientVector expected_complete_grad(const ModelParams& params, const Matrix& obs,
                                      const PairwiseMarginals& pairwise, IndexRange core,
                                      const Vector& core_weights);

/// Likelihood part of the buffered estimator.
GradientVector subsequence_loglik_gradient(const ModelParams& params, const Matrix& obs,
                                           const BufferedSubsequence& sub, const InitialDistribution& p0);

/// Buffered stochastic gradient of the log posterior (prior included once).
GradientVector buffered_gradient(const ModelParams& params, const Matrix& obs, const BufferedSubsequence& sub,
                                 const PriorSpec& prior, const InitialDistribution& p0);

GradientVector full_gradient(const ModelParams& params, const Matrix& obs, const PriorSpec& prior,
                             const InitialDistribution& p0);

/// Likelihood part of the unbiased estimator: core terms weighted as in the
/// buffered estimator but taken from full-sequence smoothing.
GradientVector unbiased_loglik_gradient(const ModelParams& params, const Matrix& obs,
                                        const PairwiseMarginals& full_pairwise, const BufferedSubsequence& sub);

/// log p(y | theta) for the Gaussian HMM, ARHMM and LGSSM families.
double marginal_loglik(const ModelParams& params, const Matrix& obs, const InitialDistribution& p0);

}  // namespace sgmcmc
