#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgmcmc/buffer_theory.hpp"
#include "sgmcmc/evaluation.hpp"
#include "sgmcmc/init.hpp"
#include "sgmcmc/io.hpp"
#include "sgmcmc/prior.hpp"
#include "sgmcmc/samplers.hpp"

namespace sgmcmc {

struct DataSpec {
  std::string synthetic;  // generator tag; empty for CSV data
  Index T = 10000;
  Index test_T = 10000;
  std::string obs;       // training observations (or the full series to split)
  std::string test_obs;  // empty: split `obs` at train_fraction
  std::string latents;   // optional true latents aligned with the training series
  double train_fraction = 0.9;
};

struct EvalSpec {
  Index every = 1;                // evaluate every n-th trace sample (plus the last)
  std::vector<int> horizons{1};   // k for k-step prediction
  Index ksd_samples = 100;        // at most this many samples from the second half
  int em_mc = 50;
  int em_burn_in = 5;
  double average_burn_in = 0.0;   // leading fraction of samples left out of running averages
};

struct GradErrorSpec {
  std::vector<Index> S{10};
  std::vector<Index> B{0, 1, 2, 4, 8, 16};
  Index n_trials = 100;
};

struct BufferSpec {
  Index S = 10;
  double eps = 1e-3;
  bool rel_eps = false;       // eps relative to the full-gradient norm
  double pilot_eps = 0.0;     // > eps runs a pilot and extrapolates; 0 disables
  Index B_star = 100;
  Index n_subsequences = 1000;
};

struct ExperimentConfig {
  std::string family;  // required for CSV data; synthetic data implies it
  int K = 0;  // 0: the synthetic model's count, else 2
  InitOptions init_options;
  std::string init = "kmeans";  // or a parameter JSON path
  std::string truth;            // parameter JSON with the ground truth
  DataSpec data;
  SamplerConfig sampler;
  PriorSpec prior;
  int n_chains = 1;
  std::vector<std::string> metrics{"heldout"};
  EvalSpec eval;
  GradErrorSpec grad_error;
  BufferSpec buffer;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

/// Unknown keys are rejected so typos do not silently fall back to defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
/// Overlays the fields present in `j` onto `config`.
void apply_json(ExperimentConfig& config, const nlohmann::json& j);

/// Explicit seed, else SSM_SGMCMC_SEED, else an error naming `command`.
std::uint64_t resolve_seed(const ExperimentConfig& config, const std::string& command);

struct TrainTest {
  Matrix train;
  Matrix test;
};
/// Loads the configured observations; without a test file the series is
/// split into the first and last parts at train_fraction.
TrainTest load_data(const ExperimentConfig& config);

struct GenerateResult {
  std::string obs, latents, test_obs, test_latents, truth;
};
GenerateResult cmd_generate(const ExperimentConfig& config);

struct FitResult {
  std::vector<std::string> traces;  // CSV per chain; the JSON sidecar sits next to each
  std::vector<Trace> chains;
};
FitResult cmd_fit(const ExperimentConfig& config);

/// Metric rows for one trace; also written to <out_dir>/metrics.csv.
std::vector<MetricRow> cmd_eval(const ExperimentConfig& config, const std::string& trace_csv);

std::vector<GradErrorRow> cmd_grad_error(const ExperimentConfig& config);

struct BufferReport {
  AdaptiveBufferResult adaptive;
  double epsilon = 0.0;         // absolute tolerance used
  double rho = 1.0;             // decay rate used for extrapolation
  DecayConstants constants;
  std::optional<Index> extrapolated;
  nlohmann::json to_json() const;
};
BufferReport cmd_buffer(const ExperimentConfig& config);

/// Sidecar path for a trace CSV (same stem, .json).
std::string sidecar_path(const std::string& trace_csv);

}  // namespace sgmcmc
