#pragma once

#include "sgmcmc/params.hpp"

namespace sgmcmc {

/// Conjugate-style priors shared by every family.
///
/// Transition weights: phi_ij ~ Gamma(alpha_ij, 1) (expanded-mean form of a
/// Dirichlet(alpha) row prior). Regression matrices: matrix normal with zero
/// mean, row covariance equal to the state noise covariance and column
/// covariance `matnormal_col_var * I`. Noise precisions: Wishart with `nu`
/// degrees of freedom and inverse scale `wishart_scale * I`. Emission means
/// and free emission entries: independent N(0, mean_var).
struct PriorSpec {
  double dirichlet_alpha = 1.0;
  Matrix dirichlet_alpha_matrix;  // optional K x K override
  double matnormal_col_var = 100.0;
  double mean_var = 1.0e4;
  double wishart_nu = 0.0;     // <= 0 selects dimension + 1
  double wishart_scale = 0.0;  // <= 0 selects nu

  double nu_for(Index dim) const;
  double scale_for(Index dim) const;
};

void validate(const PriorSpec& prior, const ModelParams& params);

/// Log prior density of the unconstrained coordinates, up to a constant.
/// Includes the log-Jacobians of the log(phi) and log-Cholesky maps.
double log_prior(const ModelParams& params, const PriorSpec& prior);

GradientVector log_prior_grad(const ModelParams& params, const PriorSpec& prior);

}  // namespace sgmcmc
