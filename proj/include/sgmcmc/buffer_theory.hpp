#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgmcmc/gradients.hpp"
#include "sgmcmc/slds_gibbs.hpp"

namespace sgmcmc {

struct DecayConstants {
  enum class Source { Dobrushin, LgssmLemma } source = Source::Dobrushin;
  double L_f = 1.0;
  double L_b = 1.0;
  double L = 1.0;
  std::optional<double> L_U;  // L_U' for the LGSSM
  bool no_contraction = true;
  bool tight_backward = false;  // LGSSM: commuting-A/Q backward bound used
};

/// Strong-mixing bound L = 1 - sigma_min / sigma_max, where the ratios are
/// Pi_ij / kappa_j and kappa is the column mean of Pi.
DecayConstants dobrushin_bound(const Matrix& Pi);

/// Forward/backward Lipschitz bounds of the smoothing maps and the
/// quadratic-form constant of the complete-data gradient. `p0_cov`
/// defaults to the stationary covariance.
DecayConstants lgssm_lipschitz(const LGSSMParams& params, const std::optional<Matrix>& p0_cov = std::nullopt);

/// Smallest integer B >= 0 with B_hat + log_rho(eps_hat / eps) <= B.
Index extrapolate_buffer(Index B_hat, double eps_hat, double epsilon, double rho);

struct AdaptiveBufferOptions {
  Index B_star = 100;
  Index n_subsequences = 1000;
  std::uint64_t seed = 0;
  SubsequenceScheme scheme = SubsequenceScheme::Uniform;
  SLDSGradientOptions slds;
};

struct AdaptiveBufferResult {
  Index B = 0;
  bool reached = true;  // false when even B_star misses the tolerance
  std::vector<std::pair<Index, double>> evaluated;  // (B, estimated error) in evaluation order
};

/// Smallest B in [0, B_star] whose Monte Carlo estimate of
/// E_S || g(B) - g(B_star) || falls below `epsilon`, searched by doubling
/// then bisection over common random subsequences.
AdaptiveBufferResult adaptive_buffer(const ModelParams& params, const Matrix& obs, Index S, double epsilon,
                                     const AdaptiveBufferOptions& options = {});

struct GradErrorRow {
  Index S = 0;
  Index B = 0;
  double mean_err = 0.0;
  double sd_err = 0.0;
  Index n_trials = 0;
};

struct GradErrorOptions {
  // 0 enumerates every possible subsequence start instead of sampling.
  Index n_trials = 100;
  std::uint64_t seed = 0;
  SubsequenceScheme scheme = SubsequenceScheme::Uniform;
  int jobs = 1;
};

/// || unbiased - buffered || over subsequence draws for every (S, B). The
/// unbiased reference uses full-sequence smoothing restricted to the same
/// core and weights. Exact-message families only.
std::vector<GradErrorRow> empirical_grad_error_curve(const ModelParams& params, const Matrix& obs,
                                                     const std::vector<Index>& S_list,
                                                     const std::vector<Index>& B_list,
                                                     const GradErrorOptions& options = {});

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);
/// log(mean_err) against B; the intercept is the reported constant.
LinearFit fit_log_error_vs_buffer(const std::vector<GradErrorRow>& rows);
/// log(mean_err) against log(S).
LinearFit fit_log_error_vs_length(const std::vector<GradErrorRow>& rows);

void write_grad_error_csv(const std::string& path, const std::vector<GradErrorRow>& rows);

}  // namespace sgmcmc
