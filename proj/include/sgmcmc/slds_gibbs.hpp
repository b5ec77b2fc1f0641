#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "sgmcmc/gradients.hpp"
#include "sgmcmc/rng.hpp"

namespace sgmcmc {

// Every path covers one window plus the state just before it, which has the
// initial distribution as its prior and no observation.

struct ContinuousPath {
  Vector x_prev;
  Matrix x;  // window x n
};

struct DiscretePath {
  int z_prev = 0;
  std::vector<int> z;  // one per window step
};

struct SLDSGibbsState {
  ContinuousPath x;
  DiscretePath z;
  int sweeps = 0;
};

/// Exact joint draw of x | z, y by forward filtering, backward sampling.
ContinuousPath slds_blocked_gibbs_x(const SLDSParams& params, const Matrix& obs, IndexRange window,
                                    const DiscretePath& z, const InitialDistribution& p0, Rng& rng);
ContinuousPath slds_blocked_gibbs_x(const SLDSParams& params, const Matrix& obs, IndexRange window,
                                    const DiscretePath& z, const InitialDistribution& p0, std::uint64_t seed);

/// Exact joint draw of z | x by backward messages, forward sampling.
DiscretePath slds_blocked_gibbs_z(const SLDSParams& params, IndexRange window, const ContinuousPath& x,
                                  const InitialDistribution& p0, Rng& rng);
DiscretePath slds_blocked_gibbs_z(const SLDSParams& params, IndexRange window, const ContinuousPath& x,
                                  const InitialDistribution& p0, std::uint64_t seed);

enum class LatentInitMode {
  Filtered,           // z_t | y_{<=t}, z_{<t} with x integrated out
  ObservationProxy,   // z | x' with x' the leading latent-sized coordinates of y
};

LatentInitMode parse_latent_init(std::string_view name);

DiscretePath slds_init_latent(const SLDSParams& params, const Matrix& obs, IndexRange window,
                              const InitialDistribution& p0, LatentInitMode mode, Rng& rng);

/// One x-then-z sweep.
void slds_gibbs_sweep(const SLDSParams& params, const Matrix& obs, IndexRange window, SLDSGibbsState& state,
                      const InitialDistribution& p0, Rng& rng);

/// Single-site collapsed sweep over z with x integrated out. Quadratic in
/// the window length; intended for validating the blocked sampler.
DiscretePath slds_collapsed_z_sweep(const SLDSParams& params, const Matrix& obs, IndexRange window,
                                    DiscretePath z, const InitialDistribution& p0, Rng& rng);

/// log p(z path) + log p(y_window | z path) with x integrated out.
double slds_collapsed_logjoint(const SLDSParams& params, const Matrix& obs, IndexRange window,
                               const DiscretePath& z, const InitialDistribution& p0);

/// log p(y, x, z | theta) over the window, including the pre-window state.
double slds_complete_loglik(const SLDSParams& params, const Matrix& obs, IndexRange window,
                            const ContinuousPath& x, const DiscretePath& z, const InitialDistribution& p0);

enum class SLDSEstimator {
  XZ,          // plug in sampled (x, z)
  ZMarginal,   // integrate x given sampled z
  XMarginal,   // integrate z given sampled x
};

SLDSEstimator parse_slds_estimator(std::string_view name);

struct SLDSGradientOptions {
  SLDSEstimator estimator = SLDSEstimator::ZMarginal;
  int n_samples = 1;
  int burn_in = 2;
  LatentInitMode init = LatentInitMode::Filtered;
};

/// Pairwise moments used by each estimator for one Gibbs draw.
PairwiseMarginals slds_estimator_pairwise(const SLDSParams& params, const Matrix& obs, IndexRange window,
                                          const SLDSGibbsState& state, const InitialDistribution& p0,
                                          SLDSEstimator estimator);

/// Buffered SLDS gradient: Gibbs over the window, average of N estimator
/// evaluations, plus the prior gradient.
GradientVector slds_noisy_gradient(const SLDSParams& params, const Matrix& obs, const BufferedSubsequence& sub,
                                   const PriorSpec& prior, const InitialDistribution& p0,
                                   const SLDSGradientOptions& options, Rng& rng);
GradientVector slds_noisy_gradient(const SLDSParams& params, const Matrix& obs, const BufferedSubsequence& sub,
                                   const PriorSpec& prior, const InitialDistribution& p0,
                                   const SLDSGradientOptions& options, std::uint64_t seed);

}  // namespace sgmcmc
