#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgmcmc/gradients.hpp"
#include "sgmcmc/preconditioner.hpp"
#include "sgmcmc/rng.hpp"
#include "sgmcmc/slds_gibbs.hpp"

namespace sgmcmc {

enum class SamplerKind { SGLD, SGRLD, LD, RLD };
SamplerKind parse_sampler(std::string_view name);
std::string_view to_string(SamplerKind kind);
bool is_riemannian(SamplerKind kind);
bool uses_full_gradient(SamplerKind kind);

struct StepSchedule {
  enum class Kind { Fixed, Poly } kind = Kind::Fixed;
  double s0 = 1000.0;
  double kappa = 0.51;
};

/// h * (1 + s / s0)^(-kappa) for the poly schedule, h otherwise.
double step_size(double h, const StepSchedule& schedule, Index step);

enum class ClockKind {
  Wall,  // seconds since the chain started
  Step,  // the step index, for byte-reproducible traces
};
ClockKind parse_clock(std::string_view name);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::SGRLD;
  double h = 1e-3;
  StepSchedule schedule;
  Index S = 10;
  Index B = 0;
  SubsequenceScheme scheme = SubsequenceScheme::Uniform;
  Index n_steps = 1000;
  std::uint64_t seed = 0;
  Index thin = 1;
  double nu_phi = kDefaultNuPhi;
  SLDSGradientOptions slds;
  bool identity_preconditioner = false;
  ClockKind clock = ClockKind::Wall;
  // Recompute B every `adapt_every` steps when > 0 and a selector is set.
  Index adapt_every = 0;
  std::function<Index(const ModelParams&, Rng&)> buffer_selector;
  // Stop early once this many wall seconds have elapsed (0 disables).
  double wall_limit = 0.0;
};

void validate(const SamplerConfig& config, Index T);

struct StepDiagnostics {
  double grad_norm = 0.0;
  Index buffer = 0;
  double step_size = 0.0;
};

struct Trace {
  std::vector<ModelParams> samples;
  std::vector<Index> steps;
  std::vector<double> seconds;
  std::vector<StepDiagnostics> diagnostics;  // one per completed step
  bool step_halved = false;
  bool hit_wall_limit = false;
  std::string error;  // set when the chain aborted; samples hold the partial trace
  bool ok() const { return error.empty(); }
};

/// u + h g + sqrt(2h) xi.
Vector langevin_step(const Vector& u, const Vector& grad, double h, Rng& rng);
/// u + h (D g + Gamma) + sqrt(2h) F xi with F F^T = D.
Vector riemannian_langevin_step(const Vector& u, const Vector& grad, const PreconditionerBlocks& blocks,
                                const NoiseFactor& factor, double h, Rng& rng);

/// Parameter-level steps in unconstrained space. Throw NonFiniteError with
/// the offending block when the update is not finite.
ModelParams sgld_step(const ModelParams& params, const GradientVector& grad, double h, std::uint64_t seed);
ModelParams sgrld_step(const ModelParams& params, const GradientVector& grad, const PreconditionerBlocks& blocks,
                       double h, std::uint64_t seed);

/// Noisy (or full, for LD/RLD) gradient of the log posterior at `params`.
GradientVector chain_gradient(const ModelParams& params, const Matrix& obs, const SamplerConfig& config,
                              const PriorSpec& prior, Index buffer, Rng& subseq_rng, Rng& gibbs_rng);

Trace run_chain(const Matrix& obs, const SamplerConfig& config, const PriorSpec& prior, const ModelParams& init);

}  // namespace sgmcmc
