#include "sgmcmc/experiments.hpp"

#include <cstdlib>
#include <filesystem>
#include <stdexcept>

#include "detail.hpp"

namespace sgmcmc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string estimator_name(SLDSEstimator e) {
  switch (e) {
    case SLDSEstimator::XZ: return "xz";
    case SLDSEstimator::ZMarginal: return "z-marginal";
    case SLDSEstimator::XMarginal: return "x-marginal";
  }
  return "z-marginal";
}

std::string init_mode_name(LatentInitMode m) { return m == LatentInitMode::Filtered ? "filtered" : "obs-proxy"; }

[[noreturn]] void unknown_key(const std::string& where, const std::string& key) {
  throw std::invalid_argument("unknown config key '" + where + key + "'");
}

template <class Fn>
void for_keys(const json& j, const std::string& where, Fn&& fn) {
  if (!j.is_object()) throw std::invalid_argument("config section '" + where + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!fn(key, value)) unknown_key(where, key);
}

template <class T>
std::vector<T> list_of(const json& v) {
  if (!v.is_array()) throw std::invalid_argument("expected a list");
  return v.get<std::vector<T>>();
}

void apply_sampler(SamplerConfig& s, const json& j) {
  for_keys(j, "sampler.", [&](const std::string& k, const json& v) {
    if (k == "kind") s.kind = parse_sampler(v.get<std::string>());
    else if (k == "h") s.h = v.get<double>();
    else if (k == "schedule") {
      const auto name = v.get<std::string>();
      if (name == "fixed") s.schedule.kind = StepSchedule::Kind::Fixed;
      else if (name == "poly") s.schedule.kind = StepSchedule::Kind::Poly;
      else throw std::invalid_argument("unknown schedule '" + name + "'");
    } else if (k == "s0") s.schedule.s0 = v.get<double>();
    else if (k == "kappa") s.schedule.kappa = v.get<double>();
    else if (k == "S") s.S = v.get<Index>();
    else if (k == "B") s.B = v.get<Index>();
    else if (k == "scheme") s.scheme = parse_scheme(v.get<std::string>());
    else if (k == "n_steps") s.n_steps = v.get<Index>();
    else if (k == "thin") s.thin = v.get<Index>();
    else if (k == "nu_phi") s.nu_phi = v.get<double>();
    else if (k == "clock") s.clock = parse_clock(v.get<std::string>());
    else if (k == "wall_limit") s.wall_limit = v.get<double>();
    else if (k == "adapt_every") s.adapt_every = v.get<Index>();
    else if (k == "identity_preconditioner") s.identity_preconditioner = v.get<bool>();
    else if (k == "estimator") s.slds.estimator = parse_slds_estimator(v.get<std::string>());
    else if (k == "n_samples") s.slds.n_samples = v.get<int>();
    else if (k == "burn_in") s.slds.burn_in = v.get<int>();
    else if (k == "latent_init") s.slds.init = parse_latent_init(v.get<std::string>());
    else return false;
    return true;
  });
}

void apply_prior(PriorSpec& p, const json& j) {
  for_keys(j, "prior.", [&](const std::string& k, const json& v) {
    if (k == "dirichlet_alpha") p.dirichlet_alpha = v.get<double>();
    else if (k == "matnormal_col_var") p.matnormal_col_var = v.get<double>();
    else if (k == "mean_var") p.mean_var = v.get<double>();
    else if (k == "wishart_nu") p.wishart_nu = v.get<double>();
    else if (k == "wishart_scale") p.wishart_scale = v.get<double>();
    else return false;
    return true;
  });
}

void apply_init_options(InitOptions& o, const json& j) {
  for_keys(j, "init_options.", [&](const std::string& k, const json& v) {
    if (k == "lag") o.lag = v.get<int>();
    else if (k == "latent_dim") o.latent_dim = v.get<Index>();
    else if (k == "a_col_var") o.a_col_var = v.get<double>();
    else if (k == "c_var") o.c_var = v.get<double>();
    else if (k == "wishart_nu") o.wishart_nu = v.get<double>();
    else if (k == "wishart_scale") o.wishart_scale = v.get<double>();
    else if (k == "ridge") o.ridge = v.get<double>();
    else return false;
    return true;
  });
}

void apply_data(DataSpec& d, const json& j) {
  for_keys(j, "data.", [&](const std::string& k, const json& v) {
    if (k == "synthetic") d.synthetic = v.get<std::string>();
    else if (k == "T") d.T = v.get<Index>();
    else if (k == "test_T") d.test_T = v.get<Index>();
    else if (k == "obs") d.obs = v.get<std::string>();
    else if (k == "test_obs") d.test_obs = v.get<std::string>();
    else if (k == "latents") d.latents = v.get<std::string>();
    else if (k == "train_fraction") d.train_fraction = v.get<double>();
    else return false;
    return true;
  });
}

void apply_eval(EvalSpec& e, const json& j) {
  for_keys(j, "eval.", [&](const std::string& k, const json& v) {
    if (k == "every") e.every = v.get<Index>();
    else if (k == "horizons") e.horizons = list_of<int>(v);
    else if (k == "ksd_samples") e.ksd_samples = v.get<Index>();
    else if (k == "em_mc") e.em_mc = v.get<int>();
    else if (k == "em_burn_in") e.em_burn_in = v.get<int>();
    else if (k == "average_burn_in") e.average_burn_in = v.get<double>();
    else return false;
    return true;
  });
}

void apply_grad_error(GradErrorSpec& g, const json& j) {
  for_keys(j, "grad_error.", [&](const std::string& k, const json& v) {
    if (k == "S") g.S = list_of<Index>(v);
    else if (k == "B") g.B = list_of<Index>(v);
    else if (k == "n_trials") g.n_trials = v.get<Index>();
    else return false;
    return true;
  });
}

void apply_buffer(BufferSpec& b, const json& j) {
  for_keys(j, "buffer.", [&](const std::string& k, const json& v) {
    if (k == "S") b.S = v.get<Index>();
    else if (k == "eps") b.eps = v.get<double>();
    else if (k == "rel_eps") b.rel_eps = v.get<bool>();
    else if (k == "pilot_eps") b.pilot_eps = v.get<double>();
    else if (k == "B_star") b.B_star = v.get<Index>();
    else if (k == "n_subsequences") b.n_subsequences = v.get<Index>();
    else return false;
    return true;
  });
}

}  // namespace

void apply_json(ExperimentConfig& c, const json& j) {
  for_keys(j, "", [&](const std::string& k, const json& v) {
    if (k == "family") c.family = v.get<std::string>();
    else if (k == "K") c.K = v.get<int>();
    else if (k == "init_options") apply_init_options(c.init_options, v);
    else if (k == "init") c.init = v.get<std::string>();
    else if (k == "truth") c.truth = v.get<std::string>();
    else if (k == "data") apply_data(c.data, v);
    else if (k == "sampler") apply_sampler(c.sampler, v);
    else if (k == "prior") apply_prior(c.prior, v);
    else if (k == "n_chains") c.n_chains = v.get<int>();
    else if (k == "metrics") c.metrics = list_of<std::string>(v);
    else if (k == "eval") apply_eval(c.eval, v);
    else if (k == "grad_error") apply_grad_error(c.grad_error, v);
    else if (k == "buffer") apply_buffer(c.buffer, v);
    else if (k == "out_dir") c.out_dir = v.get<std::string>();
    else if (k == "seed") {
      if (v.is_null()) c.seed.reset();
      else c.seed = v.get<std::uint64_t>();
    } else if (k == "jobs") c.jobs = v.get<int>();
    else return false;
    return true;
  });
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  apply_json(c, j);
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  const auto& s = c.sampler;
  json j;
  j["family"] = c.family;
  j["K"] = c.K;
  j["init_options"] = {{"lag", c.init_options.lag},
                       {"latent_dim", c.init_options.latent_dim},
                       {"a_col_var", c.init_options.a_col_var},
                       {"c_var", c.init_options.c_var},
                       {"wishart_nu", c.init_options.wishart_nu},
                       {"wishart_scale", c.init_options.wishart_scale},
                       {"ridge", c.init_options.ridge}};
  j["init"] = c.init;
  j["truth"] = c.truth;
  j["data"] = {{"synthetic", c.data.synthetic}, {"T", c.data.T},
               {"test_T", c.data.test_T},       {"obs", c.data.obs},
               {"test_obs", c.data.test_obs},   {"latents", c.data.latents},
               {"train_fraction", c.data.train_fraction}};
  j["sampler"] = {{"kind", std::string(to_string(s.kind))},
                  {"h", s.h},
                  {"schedule", s.schedule.kind == StepSchedule::Kind::Fixed ? "fixed" : "poly"},
                  {"s0", s.schedule.s0},
                  {"kappa", s.schedule.kappa},
                  {"S", s.S},
                  {"B", s.B},
                  {"scheme", std::string(to_string(s.scheme))},
                  {"n_steps", s.n_steps},
                  {"thin", s.thin},
                  {"nu_phi", s.nu_phi},
                  {"clock", s.clock == ClockKind::Wall ? "wall" : "step"},
                  {"wall_limit", s.wall_limit},
                  {"adapt_every", s.adapt_every},
                  {"identity_preconditioner", s.identity_preconditioner},
                  {"estimator", estimator_name(s.slds.estimator)},
                  {"n_samples", s.slds.n_samples},
                  {"burn_in", s.slds.burn_in},
                  {"latent_init", init_mode_name(s.slds.init)}};
  j["prior"] = {{"dirichlet_alpha", c.prior.dirichlet_alpha}, {"matnormal_col_var", c.prior.matnormal_col_var},
                {"mean_var", c.prior.mean_var},               {"wishart_nu", c.prior.wishart_nu},
                {"wishart_scale", c.prior.wishart_scale}};
  j["n_chains"] = c.n_chains;
  j["metrics"] = c.metrics;
  j["eval"] = {{"every", c.eval.every},
               {"horizons", c.eval.horizons},
               {"ksd_samples", c.eval.ksd_samples},
               {"em_mc", c.eval.em_mc},
               {"em_burn_in", c.eval.em_burn_in},
               {"average_burn_in", c.eval.average_burn_in}};
  j["grad_error"] = {{"S", c.grad_error.S}, {"B", c.grad_error.B}, {"n_trials", c.grad_error.n_trials}};
  j["buffer"] = {{"S", c.buffer.S},
                 {"eps", c.buffer.eps},
                 {"rel_eps", c.buffer.rel_eps},
                 {"pilot_eps", c.buffer.pilot_eps},
                 {"B_star", c.buffer.B_star},
                 {"n_subsequences", c.buffer.n_subsequences}};
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed ? json(*c.seed) : json();
  j["jobs"] = c.jobs;
  return j;
}

std::uint64_t resolve_seed(const ExperimentConfig& config, const std::string& command) {
  if (config.seed) return *config.seed;
  if (const char* env = std::getenv("SSM_SGMCMC_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw std::invalid_argument("SSM_SGMCMC_SEED is not an unsigned integer");
    return v;
  }
  throw std::invalid_argument(command + " needs --seed (or SSM_SGMCMC_SEED)");
}

namespace {

std::uint64_t seed_or_zero(const ExperimentConfig& config) {
  try {
    return resolve_seed(config, "");
  } catch (const std::invalid_argument&) {
    return 0;
  }
}

std::string out_path(const ExperimentConfig& config, const std::string& name) {
  return (fs::path(config.out_dir) / name).string();
}

void ensure_out_dir(const ExperimentConfig& config) {
  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);
}

std::optional<SyntheticModel> synthetic_model(const ExperimentConfig& config) {
  if (config.data.synthetic.empty()) return std::nullopt;
  return parse_synthetic(config.data.synthetic);
}

Family resolve_family(const ExperimentConfig& config) {
  if (!config.family.empty()) return parse_family(config.family);
  if (const auto m = synthetic_model(config)) return family_of(make_synthetic_star(*m));
  throw std::invalid_argument("config needs 'family' for CSV data");
}

int resolve_K(const ExperimentConfig& config) {
  if (config.K > 0) return config.K;
  if (const auto m = synthetic_model(config)) return static_cast<int>(std::max<Index>(1, num_states(make_synthetic_star(*m))));
  return 2;
}

std::optional<ModelParams> load_truth(const ExperimentConfig& config) {
  if (!config.truth.empty()) return read_params_json(config.truth);
  if (const auto m = synthetic_model(config)) {
    const std::string p = out_path(config, "theta_star.json");
    if (fs::exists(p)) return read_params_json(p);
    return make_synthetic_star(*m);
  }
  return std::nullopt;
}

InitOptions resolve_init_options(const ExperimentConfig& config) {
  InitOptions o = config.init_options;
  if (const auto m = synthetic_model(config)) {
    const ModelParams star = make_synthetic_star(*m);
    if (const auto* ar = std::get_if<ARHMMParams>(&star)) o.lag = ar->lag;
  }
  return o;
}

ModelParams initial_params(const ExperimentConfig& config, const Matrix& train, std::uint64_t seed) {
  if (config.init == "kmeans")
    return init_params(resolve_family(config), train, resolve_K(config), seed, resolve_init_options(config));
  if (config.init == "truth") {
    auto truth = load_truth(config);
    if (!truth) throw std::invalid_argument("init 'truth' needs a truth parameter file");
    return *truth;
  }
  return read_params_json(config.init);
}

}  // namespace

TrainTest load_data(const ExperimentConfig& config) {
  std::string obs = config.data.obs, test = config.data.test_obs;
  if (obs.empty() && synthetic_model(config)) {
    obs = out_path(config, "obs.csv");
    if (test.empty()) test = out_path(config, "test_obs.csv");
  }
  if (obs.empty()) throw std::invalid_argument("config needs data.obs or data.synthetic");
  TrainTest out;
  out.train = read_observations_csv(obs);
  if (!test.empty()) {
    out.test = read_observations_csv(test);
    return out;
  }
  const double f = config.data.train_fraction;
  if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("data.train_fraction must be in (0, 1)");
  const Index T = out.train.rows();
  const Index n_train = static_cast<Index>(std::floor(f * static_cast<double>(T)));
  if (n_train < 1 || n_train >= T) throw std::invalid_argument("series too short to split");
  out.test = out.train.bottomRows(T - n_train);
  out.train = Matrix(out.train.topRows(n_train));
  return out;
}

GenerateResult cmd_generate(const ExperimentConfig& config) {
  const auto model = synthetic_model(config);
  if (!model) throw std::invalid_argument("generate needs data.synthetic");
  const std::uint64_t seed = resolve_seed(config, "generate");
  if (config.data.T < 1 || config.data.test_T < 1) throw std::invalid_argument("data.T and data.test_T must be >= 1");
  const ModelParams star = make_synthetic_star(*model);
  const auto train = simulate(star, config.data.T, derive_seed(seed, 10));
  const auto test = simulate(star, config.data.test_T, derive_seed(seed, 11));
  ensure_out_dir(config);
  GenerateResult r{out_path(config, "obs.csv"), out_path(config, "latents.csv"), out_path(config, "test_obs.csv"),
                   out_path(config, "test_latents.csv"), out_path(config, "theta_star.json")};
  write_observations_csv(r.obs, train.obs);
  write_latents_csv(r.latents, train.latents);
  write_observations_csv(r.test_obs, test.obs);
  write_latents_csv(r.test_latents, test.latents);
  write_params_json(r.truth, star);
  return r;
}

std::string sidecar_path(const std::string& trace_csv) {
  return fs::path(trace_csv).replace_extension(".json").string();
}

FitResult cmd_fit(const ExperimentConfig& config) {
  const std::uint64_t seed = resolve_seed(config, "fit");
  if (config.n_chains < 1) throw std::invalid_argument("n_chains must be >= 1");
  const TrainTest data = load_data(config);
  const size_t n = static_cast<size_t>(config.n_chains);
  FitResult out;
  out.chains.resize(n);
  std::vector<ModelParams> inits(n);
  std::vector<SamplerConfig> configs(n, config.sampler);
  for (size_t c = 0; c < n; ++c) {
    configs[c].seed = c == 0 ? seed : derive_seed(seed, 100 + c);
    inits[c] = initial_params(config, data.train, derive_seed(seed, 200 + c));
    if (configs[c].adapt_every > 0) {
      AdaptiveBufferOptions opts;
      opts.B_star = config.buffer.B_star;
      opts.n_subsequences = config.buffer.n_subsequences;
      opts.scheme = configs[c].scheme;
      opts.slds = configs[c].slds;
      const Matrix& train = data.train;
      const ExperimentConfig& cfg = config;
      configs[c].buffer_selector = [opts, &train, &cfg](const ModelParams& p, Rng& rng) mutable {
        double eps = cfg.buffer.eps;
        if (cfg.buffer.rel_eps)
          eps *= full_gradient(p, train, cfg.prior, default_initial_distribution(p)).values.norm();
        opts.seed = rng();
        return adaptive_buffer(p, train, cfg.sampler.S, eps, opts).B;
      };
    }
  }
  detail::parallel_for(static_cast<Index>(n), config.jobs, [&](Index c) {
    const auto i = static_cast<size_t>(c);
    out.chains[i] = run_chain(data.train, configs[i], config.prior, inits[i]);
  });
  ensure_out_dir(config);
  for (size_t c = 0; c < n; ++c) {
    const std::string csv = out_path(config, n == 1 ? "trace.csv" : "trace_c" + std::to_string(c) + ".csv");
    write_trace_csv(csv, out.chains[c]);
    json cfg = config_to_json(config);
    cfg["seed"] = seed;
    cfg["chain"] = c;
    cfg["chain_seed"] = configs[c].seed;
    const bool identity = config.sampler.identity_preconditioner || !is_riemannian(config.sampler.kind) ||
                          precondition(inits[c], config.sampler.nu_phi).identity_second_moment;
    write_json(sidecar_path(csv), trace_sidecar(out.chains[c], cfg, identity));
    out.traces.push_back(csv);
  }
  return out;
}

std::vector<MetricRow> cmd_eval(const ExperimentConfig& config, const std::string& trace_csv) {
  const json side = read_json(sidecar_path(trace_csv));
  if (!side.contains("final_params") || side.at("final_params").is_null())
    throw std::invalid_argument("trace is empty");
  const ModelParams shape = params_from_json(side.at("final_params"));
  const Trace trace = read_trace_csv(trace_csv, shape);
  if (trace.samples.empty()) throw std::invalid_argument("trace is empty");
  const TrainTest data = load_data(config);
  const auto truth = load_truth(config);
  const Family family = family_of(shape);
  const std::uint64_t seed = seed_or_zero(config);
  const Index n = static_cast<Index>(trace.samples.size());
  if (config.eval.every < 1) throw std::invalid_argument("eval.every must be >= 1");

  std::vector<Index> checkpoints;
  for (Index s = 0; s < n; s += config.eval.every) checkpoints.push_back(s);
  if (checkpoints.back() != n - 1) checkpoints.push_back(n - 1);
  const auto meta = [&](Index s) {
    const auto i = static_cast<size_t>(s);
    return json{{"sample", s}, {"step", trace.steps[i]}, {"wall_seconds", trace.seconds[i]}}.dump();
  };

  if (!(config.eval.average_burn_in >= 0.0 && config.eval.average_burn_in < 1.0))
    throw std::invalid_argument("eval.average_burn_in must be in [0, 1)");
  // Running averages start after the burn-in; earlier checkpoints are skipped.
  const Index avg_start = static_cast<Index>(std::floor(config.eval.average_burn_in * static_cast<double>(n)));
  const auto averages = [&] {
    std::vector<DerivedParams> derived;
    for (Index s = avg_start; s < n; ++s) derived.push_back(derive(trace.samples[static_cast<size_t>(s)]));
    return running_average(derived);
  };
  std::vector<Index> avg_checkpoints;
  for (Index s : checkpoints)
    if (s >= avg_start) avg_checkpoints.push_back(s);

  std::vector<MetricRow> rows;
  for (const auto& metric : config.metrics) {
    if (metric == "heldout") {
      std::vector<double> values(checkpoints.size());
      detail::parallel_for(static_cast<Index>(checkpoints.size()), config.jobs, [&](Index i) {
        const auto& p = trace.samples[static_cast<size_t>(checkpoints[static_cast<size_t>(i)])];
        values[static_cast<size_t>(i)] =
            family == Family::SLDS
                ? slds_em_lower_bound(std::get<SLDSParams>(p), data.test, config.eval.em_mc, config.eval.em_burn_in,
                                      derive_seed(seed, 300 + static_cast<std::uint64_t>(i)))
                      .mean
                : heldout_loglik(p, data.test);
      });
      for (size_t i = 0; i < checkpoints.size(); ++i) rows.push_back({"heldout", "sample", values[i], meta(checkpoints[i])});
      if (family != Family::SLDS) {
        // Parameters at the running sample average.
        const auto avg = averages();
        std::vector<double> avg_values(avg_checkpoints.size());
        detail::parallel_for(static_cast<Index>(avg_checkpoints.size()), config.jobs, [&](Index i) {
          const auto s = static_cast<size_t>(avg_checkpoints[static_cast<size_t>(i)] - avg_start);
          avg_values[static_cast<size_t>(i)] = heldout_loglik(to_params(avg[s], shape), data.test);
        });
        for (size_t i = 0; i < avg_checkpoints.size(); ++i)
          rows.push_back({"heldout", "average", avg_values[i], meta(avg_checkpoints[i])});
      }
      if (truth && family != Family::SLDS)
        rows.push_back({"heldout", "truth", heldout_loglik(*truth, data.test), "{}"});
    } else if (metric == "predictive") {
      if (family == Family::SLDS) throw std::invalid_argument("predictive metric needs exact messages");
      for (int k : config.eval.horizons)
        rows.push_back({"predictive", "k=" + std::to_string(k), predictive_k_step(trace.samples.back(), data.test, k),
                        meta(n - 1)});
    } else if (metric == "mse") {
      if (!truth) throw std::invalid_argument("mse needs a truth parameter file");
      const auto avg = averages();
      const DerivedParams star = derive(*truth);
      for (Index s : avg_checkpoints) {
        const auto e = param_mse_aligned(avg[static_cast<size_t>(s - avg_start)], star);
        json m = json::parse(meta(s));
        m["permutation"] = e.permutation;
        for (const auto& [block, v] : e.block) rows.push_back({"mse", block, v, m.dump()});
        rows.push_back({"mse", "total", e.total, m.dump()});
      }
    } else if (metric == "ksd") {
      if (family == Family::SLDS) throw std::invalid_argument("ksd needs exact gradients");
      const Index first = n / 2, avail = n - first;
      const Index take = std::min(avail, std::max<Index>(2, config.eval.ksd_samples));
      if (avail < 2) throw std::invalid_argument("ksd needs at least four trace samples");
      std::vector<ModelParams> picked;
      for (Index i = 0; i < take; ++i)
        picked.push_back(trace.samples[static_cast<size_t>(first + (take == 1 ? 0 : i * (avail - 1) / (take - 1)))]);
      const auto score = [&](const ModelParams& p) {
        return full_gradient(p, data.train, config.prior, default_initial_distribution(p));
      };
      const auto k = ksd_imq(picked, score, config.jobs);
      const std::string m = json{{"n", take}, {"first_sample", first}}.dump();
      for (const auto& [block, v] : k.block) rows.push_back({"ksd", block, v, m});
      rows.push_back({"ksd", "total", k.total, m});
    } else if (metric == "nmi" || metric == "rmse") {
      if (config.data.latents.empty() && !synthetic_model(config))
        throw std::invalid_argument(metric + " needs data.latents");
      const std::string path = config.data.latents.empty() ? out_path(config, "latents.csv") : config.data.latents;
      const LatentSequence true_lat = read_latents_csv(path);
      const LatentSequence est = infer_latents(trace.samples.back(), data.train, seed);
      const Index T = data.train.rows();
      if (metric == "nmi") {
        if (true_lat.z.size() < static_cast<size_t>(T) || est.z.empty())
          throw std::invalid_argument("nmi needs discrete latents");
        const std::vector<int> z(true_lat.z.begin(), true_lat.z.begin() + T);
        rows.push_back({"nmi", "z", nmi(est.z, z), meta(n - 1)});
      } else {
        if (true_lat.x.rows() < T || est.x.size() == 0) throw std::invalid_argument("rmse needs continuous latents");
        rows.push_back({"rmse", "x", latent_rmse(est.x, true_lat.x.topRows(T)), meta(n - 1)});
      }
    } else if (metric == "em_bound") {
      if (family != Family::SLDS) throw std::invalid_argument("em_bound is for SLDS traces");
      const auto b = slds_em_lower_bound(std::get<SLDSParams>(trace.samples.back()), data.train, config.eval.em_mc,
                                         config.eval.em_burn_in, derive_seed(seed, 400));
      json m = json::parse(meta(n - 1));
      m["se"] = b.se;
      m["n_mc"] = b.n;
      rows.push_back({"em_bound", "train", b.mean, m.dump()});
    } else {
      throw std::invalid_argument("unknown metric '" + metric + "'");
    }
  }
  ensure_out_dir(config);
  write_metrics_csv(out_path(config, "metrics.csv"), rows);
  return rows;
}

namespace {

ModelParams analysis_params(const ExperimentConfig& config, const Matrix& train) {
  if (config.init != "kmeans" && config.init != "truth") return read_params_json(config.init);
  if (auto truth = load_truth(config)) return *truth;
  return initial_params(config, train, derive_seed(seed_or_zero(config), 200));
}

}  // namespace

std::vector<GradErrorRow> cmd_grad_error(const ExperimentConfig& config) {
  const TrainTest data = load_data(config);
  const ModelParams params = analysis_params(config, data.train);
  GradErrorOptions opts;
  opts.n_trials = config.grad_error.n_trials;
  opts.seed = seed_or_zero(config);
  opts.scheme = config.sampler.scheme;
  opts.jobs = config.jobs;
  const auto rows = empirical_grad_error_curve(params, data.train, config.grad_error.S, config.grad_error.B, opts);
  ensure_out_dir(config);
  write_grad_error_csv(out_path(config, "grad_error.csv"), rows);
  return rows;
}

json BufferReport::to_json() const {
  json evaluated = json::array();
  for (const auto& [B, err] : adaptive.evaluated) evaluated.push_back({{"B", B}, {"error", err}});
  json j{{"B", extrapolated ? *extrapolated : adaptive.B},
         {"adaptive_B", adaptive.B},
         {"reached", adaptive.reached},
         {"epsilon", epsilon},
         {"rho", rho},
         {"L_f", constants.L_f},
         {"L_b", constants.L_b},
         {"no_contraction", constants.no_contraction},
         {"evaluated", evaluated}};
  if (extrapolated) j["extrapolated_B"] = *extrapolated;
  if (constants.L_U) j["L_U"] = *constants.L_U;
  return j;
}

BufferReport cmd_buffer(const ExperimentConfig& config) {
  const TrainTest data = load_data(config);
  const ModelParams params = analysis_params(config, data.train);
  const auto& spec = config.buffer;
  BufferReport report;
  double scale = 1.0;
  if (spec.rel_eps) {
    if (family_of(params) == Family::SLDS) throw std::invalid_argument("relative tolerance needs an exact full gradient");
    scale = full_gradient(params, data.train, config.prior, default_initial_distribution(params)).values.norm();
  }
  report.epsilon = spec.eps * scale;
  if (const auto* lg = std::get_if<LGSSMParams>(&params)) {
    report.constants = lgssm_lipschitz(*lg);
    report.rho = std::max(report.constants.L_f, report.constants.L_b);
  } else {
    report.constants = dobrushin_bound(transition_matrix(std::visit(
        [](const auto& p) -> Matrix {
          if constexpr (requires { p.phi; }) return p.phi;
          else return Matrix();
        },
        params)));
    report.rho = report.constants.L;
  }
  AdaptiveBufferOptions opts;
  opts.B_star = spec.B_star;
  opts.n_subsequences = spec.n_subsequences;
  opts.seed = seed_or_zero(config);
  opts.scheme = config.sampler.scheme;
  opts.slds = config.sampler.slds;
  if (spec.pilot_eps > spec.eps) {
    const double pilot = spec.pilot_eps * scale;
    report.adaptive = adaptive_buffer(params, data.train, spec.S, pilot, opts);
    double eps_hat = pilot;
    for (const auto& [B, err] : report.adaptive.evaluated)
      if (B == report.adaptive.B) eps_hat = err;
    if (report.rho < 1.0 && eps_hat > 0.0)
      report.extrapolated = extrapolate_buffer(report.adaptive.B, eps_hat, report.epsilon, report.rho);
  } else {
    report.adaptive = adaptive_buffer(params, data.train, spec.S, report.epsilon, opts);
  }
  ensure_out_dir(config);
  write_json(out_path(config, "buffer.json"), report.to_json());
  return report;
}

}  // namespace sgmcmc
