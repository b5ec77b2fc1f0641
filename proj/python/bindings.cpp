#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sgmcmc/experiments.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace sgmcmc;

namespace {

// Python objects cross as JSON text through the stdlib json module.
json to_json(const py::object& obj) {
  if (obj.is_none()) return json::object();
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

ModelParams params_arg(const py::dict& d) { return params_from_json(to_json(d)); }

py::object params_out(const ModelParams& p) { return from_json(params_to_json(p)); }

ExperimentConfig config_arg(const py::object& d) { return config_from_json(to_json(d)); }

PriorSpec prior_arg(const py::object& d) {
  ExperimentConfig c;
  if (!d.is_none()) apply_json(c, json{{"prior", to_json(d)}});
  return c.prior;
}

py::dict gradient_out(const GradientVector& g) {
  py::dict out;
  for (const auto& b : g.layout.blocks()) out[py::str(b.name)] = Vector(g.block(b.name));
  return out;
}

SubsequenceScheme scheme_arg(const std::string& name) {
  ExperimentConfig c;
  apply_json(c, json{{"sampler", {{"scheme", name}}}});
  return c.sampler.scheme;
}

py::dict trace_out(const Trace& t) {
  py::list samples;
  for (const auto& p : t.samples) samples.append(params_out(p));
  py::dict out;
  out["samples"] = samples;
  out["steps"] = t.steps;
  out["seconds"] = t.seconds;
  out["step_halved"] = t.step_halved;
  out["hit_wall_limit"] = t.hit_wall_limit;
  out["error"] = t.error;
  return out;
}

py::list metric_rows_out(const std::vector<MetricRow>& rows) {
  py::list out;
  for (const auto& r : rows) {
    py::dict d;
    d["metric"] = r.metric;
    d["block"] = r.block;
    d["value"] = r.value;
    d["meta"] = from_json(json::parse(r.meta_json));
    out.append(d);
  }
  return out;
}

py::list grad_rows_out(const std::vector<GradErrorRow>& rows) {
  py::list out;
  for (const auto& r : rows) {
    py::dict d;
    d["S"] = r.S;
    d["B"] = r.B;
    d["mean_err"] = r.mean_err;
    d["sd_err"] = r.sd_err;
    d["n_trials"] = r.n_trials;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stochastic-gradient MCMC for state space models";

  m.def("synthetic_params", [](const std::string& name) { return params_out(make_synthetic_star(parse_synthetic(name))); },
        py::arg("name"), "Ground-truth parameters of a synthetic model: arhmm, lgssm, slds or rc-hmm.");

  m.def(
      "simulate",
      [](const py::dict& params, Index T, std::uint64_t seed) {
        const auto data = simulate(params_arg(params), T, seed);
        py::dict out;
        out["obs"] = data.obs;
        out["z"] = data.latents.z;
        out["x"] = data.latents.x;
        return out;
      },
      py::arg("params"), py::arg("T"), py::arg("seed"), "Draw observations and latents; returns obs, z and x.");

  m.def(
      "init_params",
      [](const std::string& family, const Matrix& obs, int K, std::uint64_t seed) {
        return params_out(init_params(parse_family(family), obs, K, seed));
      },
      py::arg("family"), py::arg("obs"), py::arg("K"), py::arg("seed"));

  m.def(
      "marginal_loglik",
      [](const py::dict& params, const Matrix& obs) {
        const auto p = params_arg(params);
        return marginal_loglik(p, obs, default_initial_distribution(p));
      },
      py::arg("params"), py::arg("obs"), "log p(obs | params) under the stationary initial distribution.");

  m.def(
      "full_gradient",
      [](const py::dict& params, const Matrix& obs, const py::object& prior) {
        const auto p = params_arg(params);
        return gradient_out(full_gradient(p, obs, prior_arg(prior), default_initial_distribution(p)));
      },
      py::arg("params"), py::arg("obs"), py::arg("prior") = py::none(),
      "Log-posterior gradient in unconstrained coordinates, by block.");

  m.def(
      "buffered_gradient",
      [](const py::dict& params, const Matrix& obs, Index start, Index S, Index B, const std::string& scheme,
         const py::object& prior) {
        const auto p = params_arg(params);
        const auto sub = make_subsequence(obs.rows(), start, S, B, scheme_arg(scheme));
        return gradient_out(buffered_gradient(p, obs, sub, prior_arg(prior), default_initial_distribution(p)));
      },
      py::arg("params"), py::arg("obs"), py::arg("start"), py::arg("S"), py::arg("B"),
      py::arg("scheme") = "uniform", py::arg("prior") = py::none());

  m.def(
      "run_chain",
      [](const Matrix& obs, const py::dict& init, const py::object& sampler, std::uint64_t seed,
         const py::object& prior) {
        ExperimentConfig c;
        if (!sampler.is_none()) apply_json(c, json{{"sampler", to_json(sampler)}});
        c.sampler.seed = seed;
        const auto start = params_arg(init);
        const auto pr = prior_arg(prior);
        Trace t;
        {
          py::gil_scoped_release release;
          t = run_chain(obs, c.sampler, pr, start);
        }
        return trace_out(t);
      },
      py::arg("obs"), py::arg("init"), py::arg("sampler") = py::none(), py::arg("seed") = 0,
      py::arg("prior") = py::none(), "Run one chain; `sampler` uses the config file's sampler section.");

  m.def(
      "heldout_loglik", [](const py::dict& params, const Matrix& test) { return heldout_loglik(params_arg(params), test); },
      py::arg("params"), py::arg("test_obs"));

  m.def(
      "predictive_k_step",
      [](const py::dict& params, const Matrix& obs, int k) { return predictive_k_step(params_arg(params), obs, k); },
      py::arg("params"), py::arg("obs"), py::arg("k"));

  m.def(
      "param_mse",
      [](const py::dict& est, const py::dict& truth) {
        const auto r = param_mse_aligned(params_arg(est), params_arg(truth));
        py::dict out;
        out["block"] = r.block;
        out["permutation"] = r.permutation;
        out["total"] = r.total;
        return out;
      },
      py::arg("estimate"), py::arg("truth"), "Per-block MSE after the best state relabeling.");

  m.def("imq_kernel", &imq_kernel, py::arg("x"), py::arg("y"));

  m.def(
      "ksd",
      [](const py::list& samples, const Matrix& obs, int jobs) {
        std::vector<ModelParams> ps;
        for (const auto& s : samples) ps.push_back(params_arg(s.cast<py::dict>()));
        const PriorSpec prior;
        KSDReport r;
        {
          py::gil_scoped_release release;
          r = ksd_imq(ps, [&](const ModelParams& p) {
            return full_gradient(p, obs, prior, default_initial_distribution(p));
          }, jobs);
        }
        py::dict out;
        out["block"] = r.block;
        out["total"] = r.total;
        return out;
      },
      py::arg("samples"), py::arg("obs"), py::arg("jobs") = 1, "IMQ kernel Stein discrepancy of a parameter sample.");

  m.def("nmi", &nmi, py::arg("a"), py::arg("b"));

  m.def(
      "grad_error_curve",
      [](const py::dict& params, const Matrix& obs, const std::vector<Index>& S_list, const std::vector<Index>& B_list,
         Index n_trials, std::uint64_t seed, int jobs) {
        GradErrorOptions opt;
        opt.n_trials = n_trials;
        opt.seed = seed;
        opt.jobs = jobs;
        const auto p = params_arg(params);
        std::vector<GradErrorRow> rows;
        {
          py::gil_scoped_release release;
          rows = empirical_grad_error_curve(p, obs, S_list, B_list, opt);
        }
        return grad_rows_out(rows);
      },
      py::arg("params"), py::arg("obs"), py::arg("S"), py::arg("B"), py::arg("n_trials") = 100, py::arg("seed") = 0,
      py::arg("jobs") = 1);

  // Command equivalents; `config` uses the experiment file layout.
  m.def(
      "cmd_generate",
      [](const py::dict& config) {
        const auto r = cmd_generate(config_arg(config));
        py::dict out;
        out["obs"] = r.obs;
        out["latents"] = r.latents;
        out["test_obs"] = r.test_obs;
        out["test_latents"] = r.test_latents;
        out["truth"] = r.truth;
        return out;
      },
      py::arg("config"));

  m.def(
      "cmd_fit",
      [](const py::dict& config) {
        const auto c = config_arg(config);
        FitResult r;
        {
          py::gil_scoped_release release;
          r = cmd_fit(c);
        }
        return r.traces;
      },
      py::arg("config"), "Returns the trace CSV paths.");

  m.def(
      "cmd_eval", [](const py::dict& config, const std::string& trace) {
        return metric_rows_out(cmd_eval(config_arg(config), trace));
      },
      py::arg("config"), py::arg("trace"));

  m.def(
      "cmd_grad_error", [](const py::dict& config) { return grad_rows_out(cmd_grad_error(config_arg(config))); },
      py::arg("config"));

  m.def(
      "cmd_buffer", [](const py::dict& config) { return from_json(cmd_buffer(config_arg(config)).to_json()); },
      py::arg("config"));
}
