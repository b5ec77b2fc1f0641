#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sgmcmc/gradients.hpp"

using namespace sgmcmc;

namespace {

// Per-block relative error of the analytic gradient against central
// differences of log p(y | theta) + log p(theta), with p0 held fixed.
double worst_block_error(const ModelParams& p, const Matrix& obs, const PriorSpec& prior) {
  const InitialDistribution p0 = default_initial_distribution(p);
  const GradientVector g = full_gradient(p, obs, prior, p0);
  const Vector u = unconstrain(p);
  const auto fn = [&](const Vector& v) {
    const ModelParams q = constrain(p, v);
    return marginal_loglik(q, obs, p0) + log_prior(q, prior);
  };
  const Vector fd = oracle::central_difference(fn, u, 1e-5);
  double worst = 0.0;
  for (const auto& b : g.layout.blocks()) {
    const Vector a = g.values.segment(b.offset, b.size), d = fd.segment(b.offset, b.size);
    worst = std::max(worst, (a - d).norm() / std::max(d.norm(), 1e-8));
  }
  return worst;
}

}  // namespace

TEST_CASE("Fisher identity gradients match finite differences") {
  Rng rng = make_rng(303);
  PriorSpec prior;
  for (Family f : {Family::GaussianHMM, Family::ARHMM, Family::LGSSM}) {
    for (int rep = 0; rep < 3; ++rep) {
      const ModelParams p = oracle::random_params(f, rng, 3, 2, rep == 2 ? 3 : 2, rep == 1 ? 2 : 1);
      const Matrix obs = simulate(p, 50, 40 + rep).obs;
      CAPTURE(to_string(f));
      CHECK(worst_block_error(p, obs, prior) < 1e-4);
    }
  }
}

TEST_CASE("subsequence weights and windows") {
  const Index T = 10, S = 3;
  double mass = 0.0;
  for (Index t = 0; t < T; ++t) mass += inclusion_probability(t, T, S, SubsequenceScheme::Uniform);
  CHECK(mass == doctest::Approx(static_cast<double>(S)));
  CHECK(inclusion_probability(0, T, S, SubsequenceScheme::Uniform) == doctest::Approx(1.0 / 8.0));
  CHECK(inclusion_probability(5, T, S, SubsequenceScheme::Uniform) == doctest::Approx(3.0 / 8.0));
  CHECK(inclusion_probability(4, 12, 3, SubsequenceScheme::Partition) == doctest::Approx(0.25));
  CHECK_THROWS_AS(inclusion_probability(0, 10, 3, SubsequenceScheme::Partition), std::invalid_argument);
  CHECK_THROWS_AS(make_subsequence(10, 0, 11, 0, SubsequenceScheme::Uniform), std::invalid_argument);

  const auto sub = make_subsequence(T, 1, S, 2, SubsequenceScheme::Uniform);
  CHECK(sub.window == IndexRange{0, 6});
  CHECK(sub.core == IndexRange{1, 4});

  Rng rng = make_rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto s = sample_subsequence(100, 7, 5, SubsequenceScheme::Uniform, rng);
    CHECK(s.window.contains(s.core));
    CHECK(s.core.size() == 7);
    CHECK(s.window.begin >= 0);
    CHECK(s.window.end <= 100);
  }
}

TEST_CASE("unbiased estimator averages to the full gradient") {
  Rng rng = make_rng(404);
  for (Family f : {Family::GaussianHMM, Family::ARHMM, Family::LGSSM}) {
    const ModelParams p = oracle::random_params(f, rng, 2, 2, 2);
    const Matrix obs = simulate(p, 30, 8).obs;
    const auto p0 = default_initial_distribution(p);
    const auto full = pairwise_marginals(p, obs, {0, 30}, p0);
    const Vector exact = expected_complete_grad(p, obs, full, {0, 30}, Vector::Ones(30)).values;
    for (auto scheme : {SubsequenceScheme::Uniform, SubsequenceScheme::Partition}) {
      const auto starts = possible_starts(30, 5, scheme);
      Vector mean = Vector::Zero(exact.size());
      for (Index s : starts)
        mean += unbiased_loglik_gradient(p, obs, full, make_subsequence(30, s, 5, 0, scheme)).values;
      mean /= static_cast<double>(starts.size());
      CHECK((mean - exact).norm() / exact.norm() < 1e-12);
    }
  }
}

TEST_CASE("buffers covering the sequence reproduce the unbiased estimator exactly") {
  Rng rng = make_rng(505);
  for (Family f : {Family::GaussianHMM, Family::ARHMM, Family::LGSSM}) {
    const ModelParams p = oracle::random_params(f, rng, 2, 2, 2);
    const Matrix obs = simulate(p, 40, 9).obs;
    const auto p0 = default_initial_distribution(p);
    const auto full = pairwise_marginals(p, obs, {0, 40}, p0);
    for (Index start : {0, 7, 36}) {
      const auto sub = make_subsequence(40, start, 4, 40, SubsequenceScheme::Uniform);
      const Vector buffered = subsequence_loglik_gradient(p, obs, sub, p0).values;
      const Vector unbiased = unbiased_loglik_gradient(p, obs, full, sub).values;
      CHECK((buffered - unbiased).norm() <= 1e-10);
    }
    // S = T with no buffer is the full gradient.
    const PriorSpec prior;
    const auto whole = make_subsequence(40, 0, 40, 0, SubsequenceScheme::Uniform);
    CHECK((buffered_gradient(p, obs, whole, prior, p0).values - full_gradient(p, obs, prior, p0).values).norm() == 0.0);
  }
}

TEST_CASE("gradient estimator errors") {
  const ModelParams p = make_synthetic_star(SyntheticModel::ARHMM);
  const Matrix obs = simulate(p, 20, 1).obs;
  const auto p0 = default_initial_distribution(p);
  auto sub = make_subsequence(20, 2, 4, 2, SubsequenceScheme::Uniform);
  sub.window = {4, 10};
  CHECK_THROWS_AS(subsequence_loglik_gradient(p, obs, sub, p0), std::invalid_argument);
  const auto too_long = make_subsequence(30, 2, 4, 2, SubsequenceScheme::Uniform);
  (void)too_long;
  const Matrix short_obs = obs.topRows(5);
  CHECK_THROWS_AS(subsequence_loglik_gradient(p, short_obs, make_subsequence(20, 2, 4, 2, SubsequenceScheme::Uniform), p0),
                  std::invalid_argument);
  CHECK_THROWS_AS(marginal_loglik(make_synthetic_star(SyntheticModel::SLDS), obs, p0), std::invalid_argument);
}
