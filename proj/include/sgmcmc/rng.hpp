#pragma once

#include <cstdint>
#include <random>

#include "sgmcmc/types.hpp"

namespace sgmcmc {

using Rng = std::mt19937_64;

/// Seeds an engine from (seed, stream) through std::seed_seq so that
/// neighbouring streams are decorrelated.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Deterministic child seed for the given stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Vector standard_normal(Rng& rng, Index n);

/// Draws an index with probability proportional to `weights`.
int sample_categorical(Rng& rng, const Vector& weights);

/// Same, from unnormalized log weights.
int sample_log_categorical(Rng& rng, const Vector& log_weights);

}  // namespace sgmcmc
