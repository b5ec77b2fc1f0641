#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "sgmcmc/experiments.hpp"

using namespace sgmcmc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ssm_sgmcmc_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig small_arhmm(const fs::path& dir, std::uint64_t seed = 3) {
  ExperimentConfig c;
  c.data.synthetic = "arhmm";
  c.data.T = 300;
  c.data.test_T = 200;
  c.out_dir = dir.string();
  c.seed = seed;
  c.sampler.h = 1e-3;
  c.sampler.S = 5;
  c.sampler.B = 2;
  c.sampler.n_steps = 20;
  c.sampler.clock = ClockKind::Step;
  return c;
}

}  // namespace

TEST_CASE("config JSON round trip and validation") {
  ExperimentConfig c;
  c.family = "arhmm";
  c.K = 3;
  c.sampler.h = 2e-4;
  c.sampler.schedule.kind = StepSchedule::Kind::Poly;
  c.sampler.B = 7;
  c.metrics = {"heldout", "mse"};
  c.eval.horizons = {1, 3};
  c.grad_error.B = {0, 5};
  c.buffer.eps = 0.5;
  c.seed = 99;
  const auto j = config_to_json(c);
  const auto back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.sampler.B == 7);
  CHECK(back.K == 3);
  CHECK(*back.seed == 99);

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"samplr", nlohmann::json::object()}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sampler", {{"hh", 1.0}}}}), std::invalid_argument);

  ExperimentConfig d;
  apply_json(d, nlohmann::json{{"sampler", {{"S", 4}}}});
  CHECK(d.sampler.S == 4);
  CHECK(d.sampler.h == ExperimentConfig{}.sampler.h);
}

TEST_CASE("seed resolution") {
  ExperimentConfig c;
  c.seed = 12;
  CHECK(resolve_seed(c, "fit") == 12);
  c.seed.reset();
  unsetenv("SSM_SGMCMC_SEED");
  try {
    resolve_seed(c, "fit");
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("fit needs --seed") != std::string::npos);
  }
  setenv("SSM_SGMCMC_SEED", "77", 1);
  CHECK(resolve_seed(c, "fit") == 77);
  setenv("SSM_SGMCMC_SEED", "x7", 1);
  CHECK_THROWS_AS(resolve_seed(c, "fit"), std::invalid_argument);
  unsetenv("SSM_SGMCMC_SEED");
}

TEST_CASE("data split") {
  const auto dir = scratch("split");
  Matrix obs(50, 2);
  for (Index t = 0; t < 50; ++t) obs.row(t) << t, -t;
  write_observations_csv((dir / "all.csv").string(), obs);
  ExperimentConfig c;
  c.family = "hmm";
  c.data.obs = (dir / "all.csv").string();
  const auto tt = load_data(c);
  CHECK(tt.train.rows() == 45);
  CHECK(tt.test.rows() == 5);
  CHECK(tt.test(0, 0) == 45.0);
  c.data.train_fraction = 1.0;
  CHECK_THROWS_AS(load_data(c), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("generate is deterministic and fit with no steps keeps the start") {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  cmd_generate(small_arhmm(a));
  cmd_generate(small_arhmm(b));
  for (const char* f : {"obs.csv", "latents.csv", "test_obs.csv", "test_latents.csv", "theta_star.json"})
    CHECK(slurp(a / f) == slurp(b / f));
  CHECK(read_observations_csv((a / "obs.csv").string()).rows() == 300);

  auto c = small_arhmm(a);
  c.sampler.n_steps = 0;
  const auto r = cmd_fit(c);
  REQUIRE(r.chains.size() == 1);
  CHECK(r.chains[0].samples.size() == 1);
  const auto side = read_json(sidecar_path(r.traces[0]));
  CHECK(side["n_samples"] == 1);
  CHECK(side["config"]["seed"] == 3);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("SGRLD with identity preconditioner writes the SGLD trace") {
  const auto a = scratch("id_a"), b = scratch("id_b");
  auto c = small_arhmm(a);
  cmd_generate(c);
  cmd_generate(small_arhmm(b));
  c.sampler.kind = SamplerKind::SGLD;
  cmd_fit(c);
  auto d = small_arhmm(b);
  d.sampler.kind = SamplerKind::SGRLD;
  d.sampler.identity_preconditioner = true;
  cmd_fit(d);
  CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("eval metrics") {
  const auto dir = scratch("eval");
  auto c = small_arhmm(dir);
  cmd_generate(c);
  c.truth = (dir / "theta_star.json").string();
  c.init = "truth";
  c.sampler.n_steps = 0;
  cmd_fit(c);
  c.metrics = {"heldout", "mse", "predictive"};
  const auto rows = cmd_eval(c, (dir / "trace.csv").string());
  double sample = 0, average = 0, truth = 0, total = -1;
  for (const auto& r : rows) {
    if (r.metric == "heldout" && r.block == "sample") sample = r.value;
    if (r.metric == "heldout" && r.block == "average") average = r.value;
    if (r.metric == "heldout" && r.block == "truth") truth = r.value;
    if (r.metric == "mse" && r.block == "total") total = r.value;
  }
  // A constant trace at the truth: running average equals the sample.
  CHECK(sample == truth);
  CHECK(average == doctest::Approx(truth).epsilon(1e-10));
  CHECK(total == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(read_metrics_csv((dir / "metrics.csv").string()) == rows);

  // The truth predicts held-out data better than a perturbed model.
  auto star = std::get<ARHMMParams>(read_params_json(c.truth));
  auto bent = star;
  bent.A[0] *= 0.5;
  const Matrix test = read_observations_csv((dir / "test_obs.csv").string());
  CHECK(heldout_loglik(star, test) > heldout_loglik(bent, test));

  // An empty trace is an error.
  {
    std::ifstream in(dir / "trace.csv");
    std::string header;
    std::getline(in, header);
    std::ofstream out(dir / "empty.csv");
    out << header << '\n';
  }
  fs::copy_file(dir / "trace.json", dir / "empty.json");
  CHECK_THROWS_AS(cmd_eval(c, (dir / "empty.csv").string()), std::invalid_argument);
  c.metrics = {"bogus"};
  CHECK_THROWS_AS(cmd_eval(c, (dir / "trace.csv").string()), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("grad-error and buffer commands") {
  const auto dir = scratch("ge");
  auto c = small_arhmm(dir);
  cmd_generate(c);
  c.truth = (dir / "theta_star.json").string();
  c.grad_error.S = {4};
  c.grad_error.B = {0, 300};
  c.grad_error.n_trials = 20;
  const auto rows = cmd_grad_error(c);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mean_err > 0.0);
  CHECK(rows[1].mean_err <= 1e-10);
  CHECK(fs::exists(dir / "grad_error.csv"));

  c.buffer.S = 4;
  c.buffer.B_star = 40;
  c.buffer.n_subsequences = 50;
  c.buffer.eps = 1e-2;
  c.buffer.rel_eps = true;
  const auto rep = cmd_buffer(c);
  CHECK(rep.adaptive.B <= 40);
  CHECK(rep.rho > 0.0);
  CHECK(rep.rho < 1.0);
  const auto j = read_json((dir / "buffer.json").string());
  CHECK(j["B"] == rep.adaptive.B);
  fs::remove_all(dir);
}
