// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is the number of failing criteria, except that a criterion
// named with --allow-gap may fail only in its documented unattainable clause.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "sgmcmc/buffer_theory.hpp"
#include "sgmcmc/evaluation.hpp"
#include "sgmcmc/gradients.hpp"
#include "sgmcmc/hmm_messages.hpp"
#include "sgmcmc/init.hpp"
#include "sgmcmc/kalman.hpp"
#include "sgmcmc/preconditioner.hpp"
#include "sgmcmc/samplers.hpp"
#include "sgmcmc/slds_gibbs.hpp"

using namespace sgmcmc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  bool gap_only = false;  // every clause passed except the documented unattainable one
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix phi_of(const ModelParams& p) {
  return std::visit([](const auto& q) -> Matrix {
    if constexpr (requires { q.phi; }) return q.phi; else return Matrix();
  }, p);
}

Outcome discrete_oracle() {
  Rng rng = make_rng(101);
  std::uniform_int_distribution<int> pick_k(2, 3), pick_t(1, 6);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const Index K = pick_k(rng), T = pick_t(rng);
    const Family f = draw % 2 ? Family::ARHMM : Family::GaussianHMM;
    const ModelParams p = oracle::random_params(f, rng, K, 2, 2);
    const Matrix obs = simulate(p, T, 1000 + draw).obs;
    Vector p0 = oracle::random_phi(rng, K).col(0);
    p0 /= p0.sum();
    const IndexRange window{0, T};
    const auto msgs = hmm_forward_backward(p, obs, window, p0);
    const auto pair = hmm_pairwise_marginals(msgs, window);
    const auto truth = oracle::enumerate_hmm(emission_loglik(p, obs, window), transition_matrix(phi_of(p)), p0);
    worst = std::max(worst, std::abs(msgs.log_norm.sum() - truth.loglik));
    worst = std::max(worst, std::abs(hmm_marginal_loglik(p, obs, p0) - truth.loglik));
    for (Index t = 0; t < T; ++t) worst = std::max(worst, (pair[t] - truth.pairwise[t]).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-10, false, "max abs error " + fmt("%.2e", worst)};
}

Outcome gaussian_oracle() {
  Rng rng = make_rng(202);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const Index T = 5;
    const auto p = std::get<LGSSMParams>(oracle::random_params(Family::LGSSM, rng, 1, 2, 2));
    const Matrix obs = simulate(p, T, 2000 + draw).obs;
    InitialDistribution p0;
    p0.mean = oracle::random_matrix(rng, 2, 1, 0.5);
    p0.cov = covariance_from_factor(oracle::random_factor(rng, 2, 1.0));
    auto msgs = kalman_forward(p, obs, {0, T}, p0);
    kalman_backward(p, obs, msgs);
    const auto pair = lgssm_pairwise_marginals(p, obs, msgs);
    const auto smooth = kalman_smoothed_marginals(msgs);
    const auto truth = oracle::condition_lgssm({p.A}, {covariance_from_factor(p.psi_q)}, {}, p.C,
                                               covariance_from_factor(p.psi_r), p0.mean, p0.cov, obs);
    worst = std::max(worst, std::abs(lgssm_marginal_loglik(p, obs, p0) - truth.loglik));
    for (Index t = 0; t < T; ++t) {
      const Index off = 2 * t;
      worst = std::max(worst, (pair[t].mean - truth.mean.segment(off, 4)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (pair[t].cov - truth.cov.block(off, off, 4, 4)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (smooth.mean.row(t).transpose() - truth.mean.segment(off + 2, 2)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (smooth.cov[t] - truth.cov.block(off + 2, off + 2, 2, 2)).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-8, false, "max abs error " + fmt("%.2e", worst)};
}

Outcome fisher_identity() {
  Rng rng = make_rng(303);
  const PriorSpec prior;
  double worst = 0.0;
  for (Family f : {Family::GaussianHMM, Family::ARHMM, Family::LGSSM}) {
    const ModelParams p = oracle::random_params(f, rng, 2, 2, 2);
    const Matrix obs = simulate(p, 50, 7).obs;
    const auto p0 = default_initial_distribution(p);
    const GradientVector g = full_gradient(p, obs, prior, p0);
    const auto fn = [&](const Vector& v) {
      const ModelParams q = constrain(p, v);
      return marginal_loglik(q, obs, p0) + log_prior(q, prior);
    };
    const Vector fd = oracle::central_difference(fn, unconstrain(p), 1e-5);
    for (const auto& b : g.layout.blocks()) {
      const Vector a = g.values.segment(b.offset, b.size), d = fd.segment(b.offset, b.size);
      worst = std::max(worst, (a - d).norm() / std::max(d.norm(), 1e-8));
    }
  }
  return {worst < 1e-4, false, "worst block rel. error " + fmt("%.2e", worst)};
}

Outcome buffer_reduction() {
  const ModelParams star = make_synthetic_star(SyntheticModel::ARHMM);
  const Matrix obs = simulate(star, 1000, 4).obs;
  const auto p0 = default_initial_distribution(star);
  const PriorSpec prior;

  // B >= T against the full weighting pipeline.
  const auto full = pairwise_marginals(star, obs, {0, 1000}, p0);
  double exact_err = 0.0;
  for (Index start : {0, 313, 996}) {
    const auto sub = make_subsequence(1000, start, 4, 1000, SubsequenceScheme::Uniform);
    const Vector a = subsequence_loglik_gradient(star, obs, sub, p0).values;
    const Vector b = unbiased_loglik_gradient(star, obs, full, sub).values;
    exact_err = std::max(exact_err, (a - b).norm());
  }

  GradErrorOptions opt;
  opt.n_trials = 0;  // every start
  opt.jobs = 4;
  std::vector<Index> Bs;
  for (Index b = 0; b <= 12; ++b) Bs.push_back(b);
  const auto rows = empirical_grad_error_curve(star, obs, {4}, Bs, opt);
  const double ratio = rows[0].mean_err / rows[10].mean_err;
  const auto fit = fit_log_error_vs_buffer(rows);
  const bool ok = exact_err <= 1e-10 && ratio >= 10.0 && fit.slope < 0.0 && fit.r2 >= 0.8;
  return {ok, false,
          "B>=T diff " + fmt("%.1e", exact_err) + ", err(B=0)/err(B=10) " + fmt("%.1f", ratio) + ", slope " +
              fmt("%.3f", fit.slope) + ", R2 " + fmt("%.3f", fit.r2)};
}

Outcome lgssm_decay() {
  const ModelParams star = make_synthetic_star(SyntheticModel::LGSSM);
  const auto c = lgssm_lipschitz(std::get<LGSSMParams>(star));
  const double lf_err = std::abs(c.L_f - 0.7 / 1.1);
  GradErrorOptions opt;
  opt.n_trials = 0;
  opt.jobs = 4;
  std::vector<Index> Bs;
  for (Index b = 0; b <= 12; ++b) Bs.push_back(b);
  const auto rows = empirical_grad_error_curve(star, simulate(star, 1000, 5).obs, {4}, Bs, opt);
  bool monotone = true;
  for (size_t i = 1; i < rows.size(); ++i) monotone = monotone && rows[i].mean_err <= 1.05 * rows[i - 1].mean_err;
  return {lf_err <= 1e-10 && monotone, false,
          "L_f error " + fmt("%.1e", lf_err) + ", curve " + (monotone ? "monotone" : "not monotone") + " (" +
              fmt("%.3g", rows.front().mean_err) + " -> " + fmt("%.3g", rows.back().mean_err) + ")"};
}

Vector fd_divergence(const ModelParams& shape, const Vector& u) {
  const double eps = 1e-6;
  Vector out = Vector::Zero(u.size());
  for (Index j = 0; j < u.size(); ++j) {
    Vector up = u, down = u;
    up(j) += eps;
    down(j) -= eps;
    out += (dense(precondition(constrain(shape, up))).col(j) - dense(precondition(constrain(shape, down))).col(j)) /
           (2 * eps);
  }
  return out;
}

Outcome preconditioner() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng = make_rng(600 + seed);
    for (Family f : {Family::GaussianHMM, Family::ARHMM, Family::LGSSM, Family::SLDS}) {
      const ModelParams p = oracle::random_params(f, rng, 3, 2, 2);
      const auto blocks = precondition(p);
      const Vector gamma = blocks.gamma();
      const Vector fd = fd_divergence(p, unconstrain(p));
      for (const auto& b : blocks.layout.blocks()) {
        const Vector a = gamma.segment(b.offset, b.size), e = fd.segment(b.offset, b.size);
        worst = std::max(worst, e.norm() < 1e-8 ? a.norm() : (a - e).norm() / e.norm());
      }
    }
  }

  bool identical = true;
  Rng rng = make_rng(4);
  for (Family f : {Family::GaussianHMM, Family::ARHMM, Family::LGSSM, Family::SLDS}) {
    const ModelParams p = oracle::random_params(f, rng, 2, 2, 2);
    const Matrix obs = simulate(p, 60, 3).obs;
    SamplerConfig cfg;
    cfg.h = 1e-4;
    cfg.S = 5;
    cfg.B = 2;
    cfg.n_steps = 30;
    cfg.seed = 17;
    cfg.clock = ClockKind::Step;
    cfg.kind = SamplerKind::SGLD;
    const Trace a = run_chain(obs, cfg, PriorSpec{}, p);
    cfg.kind = SamplerKind::SGRLD;
    cfg.identity_preconditioner = true;
    const Trace b = run_chain(obs, cfg, PriorSpec{}, p);
    identical = identical && a.ok() && b.ok() && a.samples.size() == b.samples.size();
    for (size_t i = 0; identical && i < a.samples.size(); ++i)
      identical = unconstrain(a.samples[i]) == unconstrain(b.samples[i]);
  }
  return {worst < 1e-4 && identical, false,
          "worst divergence rel. error " + fmt("%.2e", worst) + ", identity SGRLD " +
              (identical ? "bit-identical to SGLD" : "differs from SGLD")};
}

struct Moments {
  double mean = 0.0, var = 0.0;
};

// Independent 1-d chains on N(0, sigma2), pooled after a burn-in.
Moments gaussian_chain(double sigma2, bool riemannian, std::uint64_t seed) {
  const Index coords = 256, n_steps = 100000;
  const double h = 1e-3;
  ParamLayout layout;
  layout.add("x", coords);
  auto blocks = PreconditionerBlocks::identity(layout);
  std::get<DiagonalPiece>(blocks.blocks[0].pieces[0]).diag.setConstant(sigma2);
  const auto factor = noise_factor(blocks);
  Rng rng = make_rng(seed);
  Vector u = Vector::Zero(coords);
  double sum = 0.0, sq = 0.0;
  const Index burn = static_cast<Index>(5.0 / h);
  for (Index s = 0; s < n_steps + burn; ++s) {
    const Vector g = -u / sigma2;
    u = riemannian ? riemannian_langevin_step(u, g, blocks, factor, h, rng) : langevin_step(u, g, h, rng);
    if (s >= burn) {
      sum += u.sum();
      sq += u.squaredNorm();
    }
  }
  const double n = static_cast<double>(n_steps * coords);
  return {sum / n, sq / n - (sum / n) * (sum / n)};
}

Outcome stationarity() {
  const auto plain = gaussian_chain(1.0, false, 1);
  const auto pre = gaussian_chain(4.0, true, 2);
  const bool ok = std::abs(plain.mean) < 0.05 && plain.var >= 0.9 && plain.var <= 1.1 && pre.var >= 3.6 &&
                  pre.var <= 4.4;
  return {ok, false,
          "SGLD mean " + fmt("%.4f", plain.mean) + " var " + fmt("%.4f", plain.var) + ", SGRLD var " +
              fmt("%.4f", pre.var)};
}

struct RecoveryRun {
  double heldout = 0.0;
  double mse_pi = 0.0;
};

RecoveryRun recovery_run(const Matrix& train, const Matrix& test, const ModelParams& star, Index B,
                         std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.kind = SamplerKind::SGRLD;
  cfg.h = 4e-5;
  cfg.schedule = {StepSchedule::Kind::Poly, 1000.0, 1.0};
  cfg.S = 2;
  cfg.B = B;
  cfg.n_steps = 10000;
  cfg.seed = seed;
  cfg.clock = ClockKind::Step;
  const ModelParams init = init_params(Family::ARHMM, train, 2, derive_seed(seed, 200));
  const Trace trace = run_chain(train, cfg, PriorSpec{}, init);
  if (!trace.ok()) return {-INFINITY, INFINITY};
  // Posterior mean estimate: average over the second half of the samples.
  std::vector<DerivedParams> kept;
  for (size_t i = trace.samples.size() / 2; i < trace.samples.size(); ++i) kept.push_back(derive(trace.samples[i]));
  const DerivedParams mean = running_average(kept).back();
  const ModelParams est = to_params(mean, init);
  return {heldout_loglik(est, test), param_mse_aligned(mean, derive(star)).block.at("Pi")};
}

Outcome desk_recovery(std::uint64_t seed) {
  const ModelParams star = make_synthetic_star(SyntheticModel::ARHMM);
  const Matrix train = simulate(star, 10000, derive_seed(seed, 10)).obs;
  const Matrix test = simulate(star, 10000, derive_seed(seed, 11)).obs;
  const double truth = heldout_loglik(star, test);
  const auto buffered = recovery_run(train, test, star, 2, seed);
  const auto plain = recovery_run(train, test, star, 0, seed);
  const double rel = std::abs(buffered.heldout - truth) / std::abs(truth);
  const bool recovered = buffered.mse_pi < 0.05 && rel < 0.02;
  const bool unbuffered_fails = plain.mse_pi >= 0.05;
  // Replicate summary so a single seed does not carry the comparison.
  int ok_buffered = 0, ok_plain = 0;
  const int replicates = 12;
  for (int r = 0; r < replicates; ++r) {
    const std::uint64_t s = derive_seed(seed, 1000 + r);
    const Matrix tr = simulate(star, 10000, derive_seed(s, 10)).obs;
    ok_buffered += recovery_run(tr, test, star, 2, s).mse_pi < 0.05;
    ok_plain += recovery_run(tr, test, star, 0, s).mse_pi < 0.05;
  }
  Outcome o;
  o.pass = recovered && unbuffered_fails;
  o.gap_only = recovered && !unbuffered_fails;
  o.detail = "B=2: MSE(Pi) " + fmt("%.2e", buffered.mse_pi) + ", heldout off by " + fmt("%.2f%%", 100 * rel) +
             "; B=0: MSE(Pi) " + fmt("%.2e", plain.mse_pi) + (unbuffered_fails ? " (fails" : " (does not fail") +
             " the 0.05 threshold); MSE(Pi) < 0.05 in " + std::to_string(ok_buffered) + "/" +
             std::to_string(replicates) + " replicates with B=2, " + std::to_string(ok_plain) + "/" +
             std::to_string(replicates) + " with B=0";
  return o;
}

// Per-replicate squared deviation of the A-block from its replicate mean.
std::vector<double> a_block_spread(const SLDSParams& star, const Matrix& obs, const BufferedSubsequence& sub,
                                   SLDSEstimator estimator, int reps) {
  const ModelParams wrapped{star};
  const auto p0 = default_initial_distribution(wrapped);
  SLDSGradientOptions opt;
  opt.estimator = estimator;
  opt.n_samples = 1;
  std::vector<Vector> draws;
  for (int r = 0; r < reps; ++r)
    draws.push_back(slds_noisy_gradient(star, obs, sub, PriorSpec{}, p0, opt, derive_seed(900, r)).block("A"));
  Vector mean = Vector::Zero(draws[0].size());
  for (const auto& d : draws) mean += d;
  mean /= reps;
  std::vector<double> out;
  for (const auto& d : draws) out.push_back((d - mean).squaredNorm() * reps / (reps - 1.0));
  return out;
}

Outcome slds_ordering() {
  const auto star = std::get<SLDSParams>(make_synthetic_star(SyntheticModel::SLDS));
  const Matrix obs = simulate(star, 1000, 8).obs;
  const auto sub = make_subsequence(1000, 500, 10, 10, SubsequenceScheme::Uniform);
  const int reps = 200;
  const auto zm = a_block_spread(star, obs, sub, SLDSEstimator::ZMarginal, reps);
  const auto xz = a_block_spread(star, obs, sub, SLDSEstimator::XZ, reps);
  // One-sided Welch test on the per-replicate squared deviations.
  const auto stats = [](const std::vector<double>& v) {
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / (v.size() - 1.0)};
  };
  const auto [m1, v1] = stats(zm);
  const auto [m2, v2] = stats(xz);
  const double se1 = v1 / reps, se2 = v2 / reps;
  const double t = (m2 - m1) / std::sqrt(se1 + se2);
  const double df = (se1 + se2) * (se1 + se2) / (se1 * se1 / (reps - 1) + se2 * se2 / (reps - 1));
  const double p = boost::math::cdf(boost::math::complement(boost::math::students_t(df), t));
  return {p < 0.01, false,
          "total A variance z-marginal " + fmt("%.4g", m1) + " vs xz " + fmt("%.4g", m2) + ", p = " + fmt("%.2e", p)};
}

Outcome ksd_ordering() {
  const bool spot = imq_kernel(Vector::Zero(3), Vector::Zero(3)) == 1.0 &&
                    imq_kernel(Vector::Zero(3), Vector::Ones(3)) == 0.5;
  Rng rng = make_rng(1010);
  std::normal_distribution<double> normal;
  int wins = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Matrix good(500, 1);
    for (Index i = 0; i < 500; ++i) good(i) = normal(rng);
    const Matrix bad = good.array() + 2.0;
    if (ksd_imq_dimensions(good, -good, 4)(0) < ksd_imq_dimensions(bad, -bad, 4)(0)) ++wins;
  }
  return {spot && wins >= 95, false,
          std::to_string(wins) + "/100 trials ordered, kernel spot values " + (spot ? "exact" : "wrong")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility(const std::string& cli, const fs::path& work) {
  if (cli.empty() || !fs::exists(cli)) return {false, false, "command line tool not found"};
  const std::vector<std::string> files{"obs.csv",       "latents.csv", "test_obs.csv",
                                       "test_latents.csv", "trace.csv", "metrics.csv"};
  std::vector<std::string> first;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work / ("run" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string base = "\"" + cli + "\" ";
    const std::string common = " --synthetic arhmm --seed 42 -o \"" + dir.string() + "\"";
    const std::string quiet = " > \"" + (dir / "log.txt").string() + "\" 2>&1";
    const std::vector<std::string> cmds{
        base + "generate" + common + " --T 500 --test-T 200" + quiet,
        base + "fit" + common + " --sampler sgrld --step-size 1e-3 --S 5 --B 2 --n-steps 50 --clock step" + quiet,
        base + "eval" + common + " --metrics heldout,mse,predictive" + quiet};
    for (const auto& c : cmds)
      if (std::system(c.c_str()) != 0) return {false, false, "command failed: " + c};
    std::vector<std::string> contents;
    for (const auto& f : files) contents.push_back(slurp(dir / f));
    if (run == 0) {
      first = contents;
      continue;
    }
    for (size_t i = 0; i < files.size(); ++i)
      if (contents[i].empty() || contents[i] != first[i]) return {false, false, files[i] + " differs between runs"};
  }
  return {true, false, std::to_string(files.size()) + " CSV files byte-identical across two runs"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli;
  std::string work = (fs::temp_directory_path() / "ssm_sgmcmc_acceptance").string();
  std::vector<int> only, allow_gap;
  std::uint64_t recovery_seed = 5;
  app.add_option("--cli", cli, "Path to the command line tool");
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--allow-gap", allow_gap, "Criteria whose documented unattainable clause may fail")->delimiter(',');
  app.add_option("--recovery-seed", recovery_seed, "Seed for the recovery study");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double budget;  // seconds; 0 means no limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "discrete messages vs path enumeration", 10, discrete_oracle},
      {2, "Kalman messages vs joint Gaussian conditioning", 10, gaussian_oracle},
      {3, "Fisher identity vs finite differences", 60, fisher_identity},
      {4, "buffer exactness and error reduction", 120, buffer_reduction},
      {5, "LGSSM decay constants and error curve", 120, lgssm_decay},
      {6, "preconditioner correction and identity reduction", 0, preconditioner},
      {7, "Langevin stationarity on Gaussian targets", 30, stationarity},
      {8, "desk-scale ARHMM recovery", 600, [&] { return desk_recovery(recovery_seed); }},
      {9, "SLDS estimator variance ordering", 600, slds_ordering},
      {10, "KSD ordering and kernel values", 0, ksd_ordering},
      {11, "generate, fit, eval reproducibility", 0, [&] { return reproducibility(cli, work); }},
  };

  const std::set<int> only_set(only.begin(), only.end()), gap_set(allow_gap.begin(), allow_gap.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only_set.empty() && !only_set.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, false, std::string("error: ") + e.what()};
    }
    const double took = seconds_since(t0);
    if (c.budget > 0 && took > c.budget) {
      o.pass = false;
      o.gap_only = false;
      o.detail += ", over the time budget";
    }
    std::printf("criterion %2d: %s  %s [%s; %.1f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                took);
    std::fflush(stdout);
    if (!o.pass && !(o.gap_only && gap_set.count(c.id))) ++failures;
  }
  return failures;
}
