#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgmcmc/experiments.hpp"

using nlohmann::json;
using namespace sgmcmc;

namespace {

// Flags shared by every subcommand. Each is copied into the config only when given.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
  std::optional<std::string> family, obs, test_obs, truth, synthetic, init, latents;
  std::optional<int> K;
};

struct SamplerFlags {
  std::optional<std::string> kind, clock, schedule, scheme, estimator;
  std::optional<double> h, wall_limit, nu_phi;
  std::optional<Index> S, B, n_steps, thin;
  std::optional<int> n_chains, n_samples, burn_in;
  bool identity = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "Experiment JSON; flags override its fields")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Random seed (falls back to SSM_SGMCMC_SEED)");
  app->add_option("-o,--out", c.out_dir, "Output directory");
  app->add_option("-j,--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--family", c.family, "hmm | arhmm | lgssm | slds");
  app->add_option("--synthetic", c.synthetic, "Synthetic model: arhmm | lgssm | slds | rc-hmm");
  app->add_option("--obs", c.obs, "Training observation CSV");
  app->add_option("--test-obs", c.test_obs, "Test observation CSV");
  app->add_option("--latents", c.latents, "True latent CSV for the training series");
  app->add_option("--truth", c.truth, "Ground-truth parameter JSON");
  app->add_option("--init", c.init, "kmeans | truth | parameter JSON path");
  app->add_option("-K,--states", c.K, "Number of discrete states");
}

void add_sampler(CLI::App* app, SamplerFlags& s) {
  app->add_option("--sampler", s.kind, "sgld | sgrld | ld | rld");
  app->add_option("--step-size", s.h, "Step size h");
  app->add_option("--schedule", s.schedule, "fixed | poly");
  app->add_option("--S", s.S, "Subsequence length");
  app->add_option("--B", s.B, "Buffer length");
  app->add_option("--scheme", s.scheme, "Subsequence sampling scheme");
  app->add_option("--n-steps", s.n_steps, "Number of sampler steps");
  app->add_option("--thin", s.thin, "Keep every n-th sample");
  app->add_option("--nu-phi", s.nu_phi, "Transition preconditioner offset");
  app->add_option("--clock", s.clock, "wall | step (step gives reproducible timestamps)");
  app->add_option("--wall-limit", s.wall_limit, "Stop after this many seconds");
  app->add_option("--estimator", s.estimator, "SLDS estimator: xz | z-marginal | x-marginal");
  app->add_option("--n-samples", s.n_samples, "SLDS Gibbs draws per gradient");
  app->add_option("--burn-in", s.burn_in, "SLDS Gibbs burn-in sweeps");
  app->add_option("--n-chains", s.n_chains, "Independent chains");
  app->add_flag("--identity-preconditioner", s.identity, "Use D = I in Riemannian samplers");
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

ExperimentConfig build_config(const Common& c, const json& extra) {
  ExperimentConfig cfg;
  if (!c.config.empty()) apply_json(cfg, read_json(c.config));
  json o = json::object();
  put(o, "seed", c.seed);
  put(o, "out_dir", c.out_dir);
  put(o, "jobs", c.jobs);
  put(o, "family", c.family);
  put(o, "truth", c.truth);
  put(o, "init", c.init);
  put(o, "K", c.K);
  json data = json::object();
  put(data, "synthetic", c.synthetic);
  put(data, "obs", c.obs);
  put(data, "test_obs", c.test_obs);
  put(data, "latents", c.latents);
  if (!data.empty()) o["data"] = data;
  o.merge_patch(extra);
  apply_json(cfg, o);
  return cfg;
}

json sampler_json(const SamplerFlags& s) {
  json j = json::object();
  put(j, "kind", s.kind);
  put(j, "h", s.h);
  put(j, "schedule", s.schedule);
  put(j, "S", s.S);
  put(j, "B", s.B);
  put(j, "scheme", s.scheme);
  put(j, "n_steps", s.n_steps);
  put(j, "thin", s.thin);
  put(j, "nu_phi", s.nu_phi);
  put(j, "clock", s.clock);
  put(j, "wall_limit", s.wall_limit);
  put(j, "estimator", s.estimator);
  put(j, "n_samples", s.n_samples);
  put(j, "burn_in", s.burn_in);
  if (s.identity) j["identity_preconditioner"] = true;
  json out = json::object();
  if (!j.empty()) out["sampler"] = j;
  put(out, "n_chains", s.n_chains);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic-gradient MCMC for state space models"};
  app.require_subcommand(1);

  Common gen_c, fit_c, eval_c, ge_c, buf_c;
  std::optional<Index> gen_T, gen_test_T;
  auto* gen = app.add_subcommand("generate", "Simulate a synthetic data set and its true parameters");
  add_common(gen, gen_c);
  gen->add_option("--T", gen_T, "Training length");
  gen->add_option("--test-T", gen_test_T, "Test length");

  SamplerFlags fit_s;
  auto* fit = app.add_subcommand("fit", "Run sampler chains and write traces");
  add_common(fit, fit_c);
  add_sampler(fit, fit_s);
  std::optional<double> fit_eps;
  bool fit_rel = false;
  std::optional<Index> fit_adapt;
  fit->add_option("--adapt-every", fit_adapt, "Re-select B every n steps");
  fit->add_option("--eps", fit_eps, "Buffer tolerance for adaptive selection");
  fit->add_flag("--rel-eps", fit_rel, "Tolerance relative to the full-gradient norm");

  std::string trace_path;
  std::vector<std::string> metrics;
  std::optional<Index> eval_every;
  auto* eval = app.add_subcommand("eval", "Evaluate metrics along a trace");
  add_common(eval, eval_c);
  eval->add_option("--trace", trace_path, "Trace CSV (default <out>/trace.csv)");
  eval->add_option("--metrics", metrics, "heldout, predictive, mse, ksd, nmi, rmse, em_bound")->delimiter(',');
  eval->add_option("--every", eval_every, "Evaluate every n-th sample");

  std::vector<Index> ge_S, ge_B;
  std::optional<Index> ge_trials;
  auto* ge = app.add_subcommand("grad-error", "Gradient error against buffer and subsequence length");
  add_common(ge, ge_c);
  ge->add_option("--S-list", ge_S, "Subsequence lengths")->delimiter(',');
  ge->add_option("--B-list", ge_B, "Buffer lengths")->delimiter(',');
  ge->add_option("--n-trials", ge_trials, "Draws per cell; 0 enumerates every start");

  std::optional<double> buf_eps, buf_pilot;
  std::optional<Index> buf_S, buf_Bstar, buf_nsub;
  bool buf_rel = false;
  auto* buf = app.add_subcommand("buffer", "Choose a buffer length for a tolerance");
  add_common(buf, buf_c);
  buf->add_option("--eps", buf_eps, "Gradient error tolerance");
  buf->add_flag("--rel-eps", buf_rel, "Tolerance relative to the full-gradient norm");
  buf->add_option("--pilot-eps", buf_pilot, "Pilot tolerance; extrapolate from it to --eps");
  buf->add_option("--S", buf_S, "Subsequence length");
  buf->add_option("--B-star", buf_Bstar, "Reference buffer length");
  buf->add_option("--n-subsequences", buf_nsub, "Monte Carlo subsequences");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      json extra = json::object();
      if (gen_T) extra["data"]["T"] = *gen_T;
      if (gen_test_T) extra["data"]["test_T"] = *gen_test_T;
      const auto r = cmd_generate(build_config(gen_c, extra));
      std::cout << "wrote " << r.obs << ", " << r.latents << ", " << r.test_obs << ", " << r.test_latents << ", "
                << r.truth << '\n';
    } else if (fit->parsed()) {
      json extra = sampler_json(fit_s);
      if (fit_adapt) extra["sampler"]["adapt_every"] = *fit_adapt;
      if (fit_eps) extra["buffer"]["eps"] = *fit_eps;
      if (fit_rel) extra["buffer"]["rel_eps"] = true;
      const auto r = cmd_fit(build_config(fit_c, extra));
      for (size_t c = 0; c < r.traces.size(); ++c) {
        const auto& t = r.chains[c];
        std::cout << r.traces[c] << ": " << t.samples.size() << " samples";
        if (t.step_halved) std::cout << ", step size halved";
        if (t.hit_wall_limit) std::cout << ", stopped at wall limit";
        if (!t.ok()) std::cout << ", aborted: " << t.error;
        std::cout << '\n';
      }
      for (const auto& t : r.chains)
        if (!t.ok()) return 1;
    } else if (eval->parsed()) {
      json extra = json::object();
      if (!metrics.empty()) extra["metrics"] = metrics;
      if (eval_every) extra["eval"]["every"] = *eval_every;
      const auto cfg = build_config(eval_c, extra);
      const std::string trace = trace_path.empty() ? (std::filesystem::path(cfg.out_dir) / "trace.csv").string() : trace_path;
      const auto rows = cmd_eval(cfg, trace);
      std::cout << rows.size() << " metric rows written to "
                << (std::filesystem::path(cfg.out_dir) / "metrics.csv").string() << '\n';
    } else if (ge->parsed()) {
      json extra = json::object();
      if (!ge_S.empty()) extra["grad_error"]["S"] = ge_S;
      if (!ge_B.empty()) extra["grad_error"]["B"] = ge_B;
      if (ge_trials) extra["grad_error"]["n_trials"] = *ge_trials;
      const auto cfg = build_config(ge_c, extra);
      const auto rows = cmd_grad_error(cfg);
      for (const auto& r : rows)
        std::printf("S=%lld B=%lld mean_err=%.6g sd_err=%.3g\n", static_cast<long long>(r.S),
                    static_cast<long long>(r.B), r.mean_err, r.sd_err);
    } else if (buf->parsed()) {
      json extra = json::object();
      if (buf_eps) extra["buffer"]["eps"] = *buf_eps;
      if (buf_rel) extra["buffer"]["rel_eps"] = true;
      if (buf_pilot) extra["buffer"]["pilot_eps"] = *buf_pilot;
      if (buf_S) extra["buffer"]["S"] = *buf_S;
      if (buf_Bstar) extra["buffer"]["B_star"] = *buf_Bstar;
      if (buf_nsub) extra["buffer"]["n_subsequences"] = *buf_nsub;
      std::cout << cmd_buffer(build_config(buf_c, extra)).to_json().dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
