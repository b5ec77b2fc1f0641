#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sgmcmc/gradients.hpp"
#include "sgmcmc/slds_gibbs.hpp"

namespace sgmcmc {

/// Exact log p(test_obs | theta) under the default initial distribution.
/// SLDS has no closed form; use slds_em_lower_bound instead.
double heldout_loglik(const ModelParams& params, const Matrix& test_obs);

/// sum_t log p(y_{t+k} | y_{<=t}, theta) over t = 0 .. T-1-k. ARHMM
/// regressors for y_{t+k} are the observed lags (plug-in).
double predictive_k_step(const ModelParams& params, const Matrix& obs, int k);

/// Parameters in the interpretable space used for error metrics.
struct DerivedParams {
  Family family = Family::GaussianHMM;
  Matrix Pi;                      // empty for the LGSSM
  std::vector<Matrix> state_mean;  // mu (as a column) or A, one per state
  std::vector<Matrix> state_cov;   // Sigma or Q, one per state
  Matrix C;                       // empty for the HMM families
  Matrix R;
};

DerivedParams derive(const ModelParams& params);
/// Names of the per-state blocks for this family ("mu"/"A", "Sigma"/"Q").
std::pair<std::string, std::string> state_block_names(Family family);

/// Back to model parameters; `shape` supplies the family and fixed fields.
ModelParams to_params(const DerivedParams& derived, const ModelParams& shape);

/// Running averages: entry s is the mean of samples[0..s].
std::vector<DerivedParams> running_average(const std::vector<DerivedParams>& samples);

struct AlignedMSE {
  std::map<std::string, double> block;  // mean squared error per block
  std::vector<int> permutation;         // est state permutation[j] matches truth state j
  double total = 0.0;                   // sum over blocks
};

/// Per-block MSE after relabeling the estimate's states to minimize the
/// total. Exhaustive search up to 8 states, assignment on a per-state cost
/// matrix beyond.
AlignedMSE param_mse_aligned(const DerivedParams& est, const DerivedParams& truth);
AlignedMSE param_mse_aligned(const ModelParams& est, const ModelParams& truth);
/// MSE under a fixed relabeling.
AlignedMSE param_mse_with(const DerivedParams& est, const DerivedParams& truth, const std::vector<int>& permutation);

/// Minimum-cost assignment; result[i] is the column assigned to row i.
std::vector<int> hungarian(const Matrix& cost);

/// (1 + ||x - y||^2)^(-1/2).
double imq_kernel(const Vector& x, const Vector& y);

/// Per-dimension Stein discrepancies sqrt(mean_ij k0^d(x_i, x_j)) for
/// points (n x d) with score rows (n x d).
Vector ksd_imq_dimensions(const Matrix& points, const Matrix& scores, int jobs = 1);

using ScoreFunction = std::function<GradientVector(const ModelParams&)>;

struct KSDReport {
  std::map<std::string, double> block;  // per-dimension sums within each block
  double total = 0.0;
};

/// KSD of a parameter sample in constrained coordinates. `score` returns the
/// log-posterior gradient in unconstrained coordinates; log-parameterized
/// coordinates are chain-ruled with their Jacobian.
KSDReport ksd_imq(const std::vector<ModelParams>& samples, const ScoreFunction& score, int jobs = 1);

/// Constrained coordinates in the unconstrained layout order, and the mask
/// of coordinates stored on the log scale.
Vector constrained_coordinates(const ModelParams& params);
std::vector<bool> log_scale_mask(const ModelParams& params);

/// I(a, b) / sqrt(H(a) H(b)); 1 when both are constant, 0 when exactly one is.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

/// sqrt(mean_t ||x_t - x'_t||^2), or the plain sum of ||x_t - x'_t|| when
/// `literal_sum` is set.
double latent_rmse(const Matrix& x_est, const Matrix& x_true, bool literal_sum = false);

struct MonteCarloEstimate {
  double mean = 0.0;
  double se = 0.0;
  Index n = 0;
};

/// Average of log p(y, x, z | theta) over blocked Gibbs draws at fixed theta.
MonteCarloEstimate slds_em_lower_bound(const SLDSParams& params, const Matrix& obs, int n_mc, int burn_in,
                                       std::uint64_t seed);

/// Latent state sequence estimates: smoothed argmax for discrete states,
/// smoothed means for continuous ones. SLDS uses the last of `sweeps` Gibbs
/// sweeps.
LatentSequence infer_latents(const ModelParams& params, const Matrix& obs, std::uint64_t seed = 0, int sweeps = 20);

}  // namespace sgmcmc
