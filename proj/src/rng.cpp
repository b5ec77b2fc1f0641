#include "sgmcmc/rng.hpp"

#include <array>
#include <cmath>

namespace sgmcmc {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Vector standard_normal(Rng& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector xi(n);
  for (Index i = 0; i < n; ++i) xi(i) = normal(rng);
  return xi;
}

int sample_categorical(Rng& rng, const Vector& weights) {
  const double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericalError("categorical weights must have a positive finite sum");
  std::uniform_real_distribution<double> unif(0.0, total);
  const double u = unif(rng);
  double acc = 0.0;
  for (Index k = 0; k < weights.size(); ++k) {
    acc += weights(k);
    if (u < acc) return static_cast<int>(k);
  }
  for (Index k = weights.size() - 1; k >= 0; --k)
    if (weights(k) > 0.0) return static_cast<int>(k);
  return 0;
}

int sample_log_categorical(Rng& rng, const Vector& log_weights) {
  const double top = log_weights.maxCoeff();
  if (!std::isfinite(top)) throw NumericalError("categorical log weights are not finite");
  return sample_categorical(rng, (log_weights.array() - top).exp().matrix());
}

}  // namespace sgmcmc
