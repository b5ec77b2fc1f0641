#pragma once

#include <vector>

#include "sgmcmc/params.hpp"
#include "sgmcmc/simulate.hpp"

namespace sgmcmc {

/// Normalized discrete forward-backward messages over one window.
///
/// Row i of each matrix refers to time window.begin + i. exp(log_alpha)
/// rows are filtered marginals and sum to one; log_beta is defined up to a
/// per-row constant. log_norm(i) is log p(y_t | y_{window.begin..t-1}),
/// where the state before the window is drawn from `p0`.
struct DiscreteMessageSet {
  IndexRange window;
  Matrix log_alpha;
  Matrix log_beta;
  Vector log_norm;
  Vector p0;
  Matrix transition;
  Matrix log_lik;
};

/// Per-step log-likelihood under each state, window.size() x K.
/// Only the Gaussian HMM and ARHMM families are supported.
Matrix emission_loglik(const ModelParams& params, const Matrix& obs, IndexRange window);

DiscreteMessageSet discrete_forward_backward(const Matrix& log_lik, const Matrix& transition,
                                             const Vector& p0, IndexRange window);

DiscreteMessageSet hmm_forward_backward(const ModelParams& params, const Matrix& obs,
                                        IndexRange window, const Vector& p0);

/// Log backward messages only (last row zero).
Matrix discrete_backward(const Matrix& log_lik, const Matrix& transition);

/// Joint posteriors of (z_{t-1}, z_t) for every t in the window; the first
/// entry pairs the pre-window state (prior p0) with the first window step.
std::vector<Matrix> hmm_pairwise_marginals(const DiscreteMessageSet& msgs, IndexRange window);

/// Posterior marginals of z_t, window.size() x K.
Matrix hmm_smoothed_marginals(const DiscreteMessageSet& msgs);

double hmm_marginal_loglik(const ModelParams& params, const Matrix& obs, const Vector& p0);

}  // namespace sgmcmc
