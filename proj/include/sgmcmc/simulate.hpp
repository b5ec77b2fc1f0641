#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "sgmcmc/params.hpp"

namespace sgmcmc {

/// Distribution of the latent state just before the first modelled step.
/// `discrete` is empty for LGSSM; `mean`/`cov` are empty for the HMM families.
struct InitialDistribution {
  Vector discrete;
  Vector mean;
  Matrix cov;
};

/// Stationary distribution of a row-stochastic matrix by power iteration on
/// the lazy chain (I + Pi) / 2, with a direct solve as fallback.
Vector stationary_distribution(const Matrix& Pi, double tol = 1e-12);

/// Fixed point of V = Q + A V A^T; returns 10 * I when A is not stable.
Matrix steady_state_covariance(const Matrix& A, const Matrix& Q, double tol = 1e-12,
                               int max_iter = 1000);

/// Fixed point of V = sum_k w_k (Q_k + A_k V A_k^T), the second moment of a
/// switching system whose regimes are drawn independently with weights w.
Matrix switching_steady_state_covariance(const std::vector<Matrix>& A, const std::vector<Matrix>& Q,
                                         const Vector& weights, double tol = 1e-12,
                                         int max_iter = 1000);

InitialDistribution default_initial_distribution(const ModelParams& params);

struct LatentSequence {
  std::vector<int> z;  // empty for LGSSM
  Matrix x;            // T x n, empty for the HMM families
};

struct SimulatedData {
  LatentSequence latents;
  Matrix obs;  // T x m
};

SimulatedData simulate(const ModelParams& params, Index T, std::uint64_t seed);

enum class SyntheticModel { ARHMM, LGSSM, SLDS, RCHMM };

SyntheticModel parse_synthetic(std::string_view name);
std::string_view to_string(SyntheticModel model);

/// Ground-truth parameters of the synthetic benchmark models.
ModelParams make_synthetic_star(SyntheticModel model);

Matrix rotation2(double angle);

}  // namespace sgmcmc
