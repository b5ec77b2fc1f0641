#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "sgmcmc/rng.hpp"
#include "sgmcmc/types.hpp"

namespace sgmcmc {

enum class SubsequenceScheme {
  Uniform,    // start drawn uniformly from {0, ..., T - S}
  Partition,  // start drawn uniformly from {0, S, 2S, ...}; needs S | T
};

SubsequenceScheme parse_scheme(std::string_view name);
std::string_view to_string(SubsequenceScheme scheme);

/// A core of S steps plus up to B buffer steps on each side, clipped to the
/// sequence. `weights(i)` is 1 / Pr(core.begin + i is in a sampled core).
struct BufferedSubsequence {
  IndexRange core;
  IndexRange window;
  Vector weights;
  SubsequenceScheme scheme = SubsequenceScheme::Uniform;
};

double inclusion_probability(Index t, Index T, Index S, SubsequenceScheme scheme);

std::vector<Index> possible_starts(Index T, Index S, SubsequenceScheme scheme);

BufferedSubsequence make_subsequence(Index T, Index start, Index S, Index B, SubsequenceScheme scheme);
BufferedSubsequence sample_subsequence(Index T, Index S, Index B, SubsequenceScheme scheme, Rng& rng);
BufferedSubsequence sample_subsequence(Index T, Index S, Index B, SubsequenceScheme scheme,
                                       std::uint64_t seed);

/// The whole sequence as a single core with unit weights.
BufferedSubsequence full_sequence(Index T);

}  // namespace sgmcmc
