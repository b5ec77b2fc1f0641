#include "sgmcmc/subsequence.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace sgmcmc {

SubsequenceScheme parse_scheme(std::string_view name) {
  if (name == "uniform") return SubsequenceScheme::Uniform;
  if (name == "partition") return SubsequenceScheme::Partition;
  throw std::invalid_argument("unknown subsequence scheme '" + std::string(name) + "'");
}

std::string_view to_string(SubsequenceScheme scheme) {
  return scheme == SubsequenceScheme::Uniform ? "uniform" : "partition";
}

namespace {

void check_sizes(Index T, Index S, SubsequenceScheme scheme) {
  if (T < 1) throw std::invalid_argument("sequence length must be positive");
  if (S < 1 || S > T)
    throw std::invalid_argument("subsequence length " + std::to_string(S) + " must lie in [1, " +
                                std::to_string(T) + "]");
  if (scheme == SubsequenceScheme::Partition && T % S != 0)
    throw std::invalid_argument("partition scheme needs the subsequence length to divide T");
}

}  // namespace

double inclusion_probability(Index t, Index T, Index S, SubsequenceScheme scheme) {
  check_sizes(T, S, scheme);
  if (t < 0 || t >= T) throw std::invalid_argument("time index out of range");
  if (scheme == SubsequenceScheme::Partition) return static_cast<double>(S) / static_cast<double>(T);
  const Index count = std::min({t + 1, T - t, S, T - S + 1});
  return static_cast<double>(count) / static_cast<double>(T - S + 1);
}

std::vector<Index> possible_starts(Index T, Index S, SubsequenceScheme scheme) {
  check_sizes(T, S, scheme);
  std::vector<Index> starts;
  const Index step = scheme == SubsequenceScheme::Partition ? S : 1;
  for (Index s = 0; s + S <= T; s += step) starts.push_back(s);
  return starts;
}

BufferedSubsequence make_subsequence(Index T, Index start, Index S, Index B, SubsequenceScheme scheme) {
  check_sizes(T, S, scheme);
  if (B < 0) throw std::invalid_argument("buffer length must be non-negative");
  if (start < 0 || start + S > T) throw std::invalid_argument("subsequence start out of range");
  if (scheme == SubsequenceScheme::Partition && start % S != 0)
    throw std::invalid_argument("partition start must be a multiple of the subsequence length");
  BufferedSubsequence sub;
  sub.scheme = scheme;
  sub.core = {start, start + S};
  sub.window = {std::max<Index>(0, start - B), std::min<Index>(T, start + S + B)};
  sub.weights.resize(S);
  for (Index i = 0; i < S; ++i) sub.weights(i) = 1.0 / inclusion_probability(start + i, T, S, scheme);
  return sub;
}

BufferedSubsequence sample_subsequence(Index T, Index S, Index B, SubsequenceScheme scheme, Rng& rng) {
  check_sizes(T, S, scheme);
  const Index n_starts = scheme == SubsequenceScheme::Partition ? T / S : T - S + 1;
  std::uniform_int_distribution<Index> pick(0, n_starts - 1);
  const Index j = pick(rng);
  const Index start = scheme == SubsequenceScheme::Partition ? j * S : j;
  return make_subsequence(T, start, S, B, scheme);
}

BufferedSubsequence sample_subsequence(Index T, Index S, Index B, SubsequenceScheme scheme,
                                       std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_subsequence(T, S, B, scheme, rng);
}

BufferedSubsequence full_sequence(Index T) {
  return make_subsequence(T, 0, T, 0, SubsequenceScheme::Uniform);
}

}  // namespace sgmcmc
