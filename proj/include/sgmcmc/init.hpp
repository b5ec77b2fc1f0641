#pragma once

#include <cstdint>
#include <vector>

#include "sgmcmc/params.hpp"
#include "sgmcmc/rng.hpp"

namespace sgmcmc {

struct KMeansResult {
  Matrix centroids;  // K x d
  std::vector<int> labels;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
/// at the point farthest from its current centroid.
KMeansResult kmeans(const Matrix& points, int K, std::uint64_t seed, int max_iter = 100);

struct InitOptions {
  int lag = 1;              // ARHMM
  Index latent_dim = 0;     // LGSSM / SLDS; 0 selects the observation dimension
  double a_col_var = 0.1;   // column variance for drawing LGSSM dynamics
  double c_var = 1.0;       // variance for drawing free emission entries
  double wishart_nu = 0.0;  // <= 0 selects dimension + 2
  double wishart_scale = 0.0;  // <= 0 selects nu
  double ridge = 1e-6;      // regularizer for per-cluster regressions
};

/// Sample a precision factor psi with psi psi^T ~ Wishart(nu, I / scale).
Matrix sample_wishart_factor(Rng& rng, Index dim, double nu, double scale);

/// Data-driven starting point: K-means for the switching families, a prior
/// draw for the LGSSM.
ModelParams init_params(Family family, const Matrix& obs, int K, std::uint64_t seed,
                        const InitOptions& options = {});

}  // namespace sgmcmc
