#include "sgmcmc/samplers.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace sgmcmc {

SamplerKind parse_sampler(std::string_view name) {
  if (name == "sgld" || name == "SGLD") return SamplerKind::SGLD;
  if (name == "sgrld" || name == "SGRLD") return SamplerKind::SGRLD;
  if (name == "ld" || name == "LD") return SamplerKind::LD;
  if (name == "rld" || name == "RLD") return SamplerKind::RLD;
  throw std::invalid_argument("unknown sampler '" + std::string(name) + "'");
}

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::SGLD: return "sgld";
    case SamplerKind::SGRLD: return "sgrld";
    case SamplerKind::LD: return "ld";
    case SamplerKind::RLD: return "rld";
  }
  return "?";
}

bool is_riemannian(SamplerKind kind) { return kind == SamplerKind::SGRLD || kind == SamplerKind::RLD; }
bool uses_full_gradient(SamplerKind kind) { return kind == SamplerKind::LD || kind == SamplerKind::RLD; }

double step_size(double h, const StepSchedule& schedule, Index step) {
  if (schedule.kind == StepSchedule::Kind::Fixed) return h;
  return h * std::pow(1.0 + static_cast<double>(step) / schedule.s0, -schedule.kappa);
}

ClockKind parse_clock(std::string_view name) {
  if (name == "wall") return ClockKind::Wall;
  if (name == "step") return ClockKind::Step;
  throw std::invalid_argument("unknown clock '" + std::string(name) + "'");
}

void validate(const SamplerConfig& c, Index T) {
  if (!(c.h > 0.0) || !std::isfinite(c.h)) throw std::invalid_argument("step size must be positive");
  if (c.thin < 1) throw std::invalid_argument("thin must be at least 1");
  if (c.n_steps < 0) throw std::invalid_argument("n_steps must be non-negative");
  if (c.B < 0) throw std::invalid_argument("buffer size must be non-negative");
  if (!(c.nu_phi > 0.0)) throw std::invalid_argument("nu_phi must be positive");
  if (c.schedule.kind == StepSchedule::Kind::Poly && !(c.schedule.s0 > 0.0 && c.schedule.kappa >= 0.0))
    throw std::invalid_argument("poly schedule needs s0 > 0 and kappa >= 0");
  if (!uses_full_gradient(c.kind)) {
    if (c.S < 1 || c.S > T) throw std::invalid_argument("subsequence length must lie in [1, T]");
    if (c.scheme == SubsequenceScheme::Partition && T % c.S != 0)
      throw std::invalid_argument("partition scheme needs S to divide T");
  }
}

namespace {

void check_finite(const ParamLayout& layout, const Vector& v, const std::string& what) {
  for (const auto& b : layout.blocks())
    if (!v.segment(b.offset, b.size).allFinite())
      throw NonFiniteError(b.name, what + " is not finite in block '" + b.name + "'");
}

// Maps back to constrained parameters, rejecting values that overflow there.
ModelParams checked_constrain(const ModelParams& shape, const ParamLayout& layout, const Vector& u) {
  check_finite(layout, u, "update");
  ModelParams out = constrain(shape, u);
  try {
    validate(out);
  } catch (const std::invalid_argument& e) {
    throw NonFiniteError("constrained", std::string("update left the parameter space: ") + e.what());
  }
  return out;
}

}  // namespace

Vector langevin_step(const Vector& u, const Vector& grad, double h, Rng& rng) {
  const Vector xi = standard_normal(rng, u.size());
  return u + h * grad + std::sqrt(2.0 * h) * xi;
}

Vector riemannian_langevin_step(const Vector& u, const Vector& grad, const PreconditionerBlocks& blocks,
                                const NoiseFactor& factor, double h, Rng& rng) {
  const Vector xi = standard_normal(rng, u.size());
  const Vector drift = apply(blocks, grad) + blocks.gamma();
  return u + h * drift + std::sqrt(2.0 * h) * apply(factor, xi);
}

ModelParams sgld_step(const ModelParams& params, const GradientVector& grad, double h, std::uint64_t seed) {
  const ParamLayout layout = layout_of(params);
  if (!(grad.layout == layout)) throw std::invalid_argument("gradient layout does not match the parameters");
  if (h < 0.0) throw std::invalid_argument("step size must be non-negative");
  check_finite(layout, grad.values, "gradient");
  Rng rng = make_rng(seed);
  return checked_constrain(params, layout, langevin_step(unconstrain(params), grad.values, h, rng));
}

ModelParams sgrld_step(const ModelParams& params, const GradientVector& grad, const PreconditionerBlocks& blocks,
                       double h, std::uint64_t seed) {
  const ParamLayout layout = layout_of(params);
  if (!(grad.layout == layout) || !(blocks.layout == layout))
    throw std::invalid_argument("gradient or preconditioner layout does not match the parameters");
  if (h < 0.0) throw std::invalid_argument("step size must be non-negative");
  check_finite(layout, grad.values, "gradient");
  Rng rng = make_rng(seed);
  return checked_constrain(params, layout,
                           riemannian_langevin_step(unconstrain(params), grad.values, blocks, noise_factor(blocks), h, rng));
}

GradientVector chain_gradient(const ModelParams& params, const Matrix& obs, const SamplerConfig& config,
                              const PriorSpec& prior, Index buffer, Rng& subseq_rng, Rng& gibbs_rng) {
  const Index T = obs.rows();
  const BufferedSubsequence sub = uses_full_gradient(config.kind)
                                      ? full_sequence(T)
                                      : sample_subsequence(T, config.S, buffer, config.scheme, subseq_rng);
  const InitialDistribution p0 = default_initial_distribution(params);
  if (const auto* slds = std::get_if<SLDSParams>(&params))
    return slds_noisy_gradient(*slds, obs, sub, prior, p0, config.slds, gibbs_rng);
  return buffered_gradient(params, obs, sub, prior, p0);
}

Trace run_chain(const Matrix& obs, const SamplerConfig& config, const PriorSpec& prior, const ModelParams& init) {
  validate(init);
  validate(config, obs.rows());
  validate(prior, init);
  const ParamLayout layout = layout_of(init);
  Rng subseq_rng = make_rng(config.seed, 1);
  Rng noise_rng = make_rng(config.seed, 2);
  Rng gibbs_rng = make_rng(config.seed, 3);
  Rng adapt_rng = make_rng(config.seed, 4);

  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  Trace trace;
  trace.samples.push_back(init);
  trace.steps.push_back(0);
  trace.seconds.push_back(0.0);

  ModelParams current = init;
  Index buffer = config.B;
  double h_scale = 1.0;
  for (Index s = 1; s <= config.n_steps; ++s) {
    if (config.adapt_every > 0 && config.buffer_selector && (s - 1) % config.adapt_every == 0)
      buffer = config.buffer_selector(current, adapt_rng);

    StepDiagnostics diag;
    diag.buffer = buffer;
    bool done = false;
    while (!done) {
      try {
        const GradientVector grad = chain_gradient(current, obs, config, prior, buffer, subseq_rng, gibbs_rng);
        check_finite(layout, grad.values, "gradient");
        diag.grad_norm = grad.values.norm();
        diag.step_size = step_size(config.h, config.schedule, s - 1) * h_scale;
        const Vector u = unconstrain(current);
        Vector next;
        if (is_riemannian(config.kind)) {
          const PreconditionerBlocks blocks = config.identity_preconditioner
                                                  ? PreconditionerBlocks::identity(layout)
                                                  : precondition(current, config.nu_phi);
          next = riemannian_langevin_step(u, grad.values, blocks, noise_factor(blocks), diag.step_size, noise_rng);
        } else {
          next = langevin_step(u, grad.values, diag.step_size, noise_rng);
        }
        current = checked_constrain(current, layout, next);
        done = true;
      } catch (const std::runtime_error& e) {
        // NumericalError and NonFiniteError both land here.
        if (trace.step_halved) {
          trace.error = "step " + std::to_string(s) + ": " + e.what();
          return trace;
        }
        trace.step_halved = true;
        h_scale *= 0.5;
      }
    }
    trace.diagnostics.push_back(diag);
    if (s % config.thin == 0) {
      trace.samples.push_back(current);
      trace.steps.push_back(s);
      trace.seconds.push_back(config.clock == ClockKind::Step ? static_cast<double>(s) : elapsed());
    }
    if (config.wall_limit > 0.0 && elapsed() > config.wall_limit) {
      trace.hit_wall_limit = true;
      break;
    }
  }
  return trace;
}

}  // namespace sgmcmc
