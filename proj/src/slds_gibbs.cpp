#include "sgmcmc/slds_gibbs.hpp"

#include <cmath>
#include <stdexcept>

#include "detail.hpp"
#include "sgmcmc/hmm_messages.hpp"

namespace sgmcmc {

using detail::checked_llt;
using detail::symmetrize;

LatentInitMode parse_latent_init(std::string_view name) {
  if (name == "filtered") return LatentInitMode::Filtered;
  if (name == "obs-proxy" || name == "observation-proxy") return LatentInitMode::ObservationProxy;
  throw std::invalid_argument("unknown latent initialization '" + std::string(name) + "'");
}

SLDSEstimator parse_slds_estimator(std::string_view name) {
  if (name == "xz") return SLDSEstimator::XZ;
  if (name == "z-marginal" || name == "z") return SLDSEstimator::ZMarginal;
  if (name == "x-marginal" || name == "x") return SLDSEstimator::XMarginal;
  throw std::invalid_argument("unknown SLDS estimator '" + std::string(name) + "'");
}

namespace {

void check_window(IndexRange window, const Matrix& obs) {
  if (window.begin < 0 || window.end > obs.rows() || window.size() < 1)
    throw std::invalid_argument("window is empty or exceeds the sequence length");
}

void check_path(const DiscretePath& z, IndexRange window, Index K) {
  if (static_cast<Index>(z.z.size()) != window.size())
    throw std::invalid_argument("discrete path length does not match the window");
  const auto bad = [&](int k) { return k < 0 || k >= K; };
  if (bad(z.z_prev)) throw std::invalid_argument("discrete state out of range");
  for (int k : z.z)
    if (bad(k)) throw std::invalid_argument("discrete state out of range");
}

Vector draw_gaussian_natural(Rng& rng, const Matrix& precision, const Vector& h, const std::string& what) {
  auto llt = checked_llt(symmetrize(precision), what);
  const Vector mean = llt.solve(h);
  const Vector xi = standard_normal(rng, h.size());
  return mean + llt.matrixU().solve(xi);
}

// log N(x_t | A_k x_{t-1}, Q_k) for every window step and regime.
Matrix dynamics_loglik(const SLDSParams& p, const ContinuousPath& x) {
  const Index W = x.x.rows(), K = p.phi.rows();
  Matrix ll(W, K);
  for (Index i = 0; i < W; ++i) {
    const Vector cur = x.x.row(i).transpose();
    const Vector prev = i == 0 ? x.x_prev : Vector(x.x.row(i - 1).transpose());
    for (Index k = 0; k < K; ++k) ll(i, k) = gaussian_logpdf_factor(cur - p.A[k] * prev, p.psi_q[k]);
  }
  return ll;
}

}  // namespace

ContinuousPath slds_blocked_gibbs_x(const SLDSParams& params, const Matrix& obs, IndexRange window,
                                    const DiscretePath& z, const InitialDistribution& p0, Rng& rng) {
  check_window(window, obs);
  check_path(z, window, params.phi.rows());
  const auto sys = LinearGaussianSystem::from(params);
  const auto msgs = kalman_forward(sys, obs, window, p0, z.z);
  const Index W = window.size(), n = sys.latent_dim();
  ContinuousPath out;
  out.x.resize(W, n);
  Vector next = draw_gaussian_natural(rng, msgs.lambda_alpha.back(), msgs.h_alpha.back(), "final filtered state");
  out.x.row(W - 1) = next.transpose();
  for (Index i = W - 2; i >= -1; --i) {
    const int k = z.z[static_cast<size_t>(i + 1)];
    const Matrix& A = sys.A[static_cast<size_t>(k)];
    const Matrix QinvA = sys.Q_inv[static_cast<size_t>(k)] * A;
    const Matrix& lam = i >= 0 ? msgs.lambda_alpha[static_cast<size_t>(i)] : msgs.lambda_prior;
    const Vector& h = i >= 0 ? msgs.h_alpha[static_cast<size_t>(i)] : msgs.h_prior;
    next = draw_gaussian_natural(rng, lam + A.transpose() * QinvA, h + QinvA.transpose() * next,
                                 "backward sampling precision");
    if (i >= 0)
      out.x.row(i) = next.transpose();
    else
      out.x_prev = next;
  }
  return out;
}

ContinuousPath slds_blocked_gibbs_x(const SLDSParams& params, const Matrix& obs, IndexRange window,
                                    const DiscretePath& z, const InitialDistribution& p0, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return slds_blocked_gibbs_x(params, obs, window, z, p0, rng);
}

DiscretePath slds_blocked_gibbs_z(const SLDSParams& params, IndexRange window, const ContinuousPath& x,
                                  const InitialDistribution& p0, Rng& rng) {
  if (x.x.rows() != window.size()) throw std::invalid_argument("continuous path length does not match the window");
  const Matrix Pi = transition_matrix(params.phi);
  const Matrix ll = dynamics_loglik(params, x);
  const Matrix log_beta = discrete_backward(ll, Pi);
  const Index W = window.size(), K = Pi.rows();
  const Matrix log_pi = Pi.array().log();

  DiscretePath out;
  out.z.resize(static_cast<size_t>(W));
  const Vector first = (ll.row(0) + log_beta.row(0)).transpose();
  Vector w_prev(K);
  for (Index k = 0; k < K; ++k)
    w_prev(k) = std::log(p0.discrete(k)) + detail::log_sum_exp(log_pi.row(k).transpose() + first);
  out.z_prev = sample_log_categorical(rng, w_prev);
  int prev = out.z_prev;
  for (Index i = 0; i < W; ++i) {
    const Vector lw = log_pi.row(prev).transpose() + ll.row(i).transpose() + log_beta.row(i).transpose();
    prev = sample_log_categorical(rng, lw);
    out.z[static_cast<size_t>(i)] = prev;
  }
  return out;
}

DiscretePath slds_blocked_gibbs_z(const SLDSParams& params, IndexRange window, const ContinuousPath& x,
                                  const InitialDistribution& p0, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return slds_blocked_gibbs_z(params, window, x, p0, rng);
}

DiscretePath slds_init_latent(const SLDSParams& params, const Matrix& obs, IndexRange window,
                              const InitialDistribution& p0, LatentInitMode mode, Rng& rng) {
  check_window(window, obs);
  const Index W = window.size(), n = params.C.cols(), m = params.C.rows(), K = params.phi.rows();
  if (mode == LatentInitMode::ObservationProxy) {
    ContinuousPath proxy;
    proxy.x_prev = p0.mean;
    proxy.x = Matrix::Zero(W, n);
    const Index shared = std::min(n, m);
    proxy.x.leftCols(shared) = obs.middleRows(window.begin, W).leftCols(shared);
    return slds_blocked_gibbs_z(params, window, proxy, p0, rng);
  }

  const auto sys = LinearGaussianSystem::from(params);
  const Matrix log_pi = transition_matrix(params.phi).array().log();
  DiscretePath out;
  out.z.resize(static_cast<size_t>(W));
  out.z_prev = sample_categorical(rng, p0.discrete);
  Vector mean = p0.mean;
  Matrix cov = p0.cov;
  int prev = out.z_prev;
  for (Index i = 0; i < W; ++i) {
    const Vector y = obs.row(window.begin + i).transpose();
    std::vector<Vector> pred_mean(static_cast<size_t>(K));
    std::vector<Matrix> pred_cov(static_cast<size_t>(K));
    Vector lw(K);
    for (Index k = 0; k < K; ++k) {
      const auto s = static_cast<size_t>(k);
      pred_mean[s] = sys.A[s] * mean;
      pred_cov[s] = symmetrize(sys.A[s] * cov * sys.A[s].transpose() + sys.Q[s]);
      const Matrix S = symmetrize(sys.C * pred_cov[s] * sys.C.transpose() + sys.R);
      auto llt = checked_llt(S, "filtered initialization");
      const Vector r = y - sys.C * pred_mean[s];
      const Matrix L = llt.matrixL();
      lw(k) = log_pi(prev, k) - L.diagonal().array().log().sum() - 0.5 * r.dot(llt.solve(r));
    }
    prev = sample_log_categorical(rng, lw);
    out.z[static_cast<size_t>(i)] = prev;
    // Kalman update under the chosen regime.
    const auto s = static_cast<size_t>(prev);
    const Matrix S = symmetrize(sys.C * pred_cov[s] * sys.C.transpose() + sys.R);
    const Matrix gain = pred_cov[s] * sys.C.transpose() * checked_llt(S, "filtered initialization").solve(
                                                              Matrix::Identity(m, m));
    mean = pred_mean[s] + gain * (y - sys.C * pred_mean[s]);
    cov = symmetrize((Matrix::Identity(n, n) - gain * sys.C) * pred_cov[s]);
  }
  return out;
}

void slds_gibbs_sweep(const SLDSParams& params, const Matrix& obs, IndexRange window, SLDSGibbsState& state,
                      const InitialDistribution& p0, Rng& rng) {
  state.x = slds_blocked_gibbs_x(params, obs, window, state.z, p0, rng);
  state.z = slds_blocked_gibbs_z(params, window, state.x, p0, rng);
  ++state.sweeps;
}

double slds_collapsed_logjoint(const SLDSParams& params, const Matrix& obs, IndexRange window,
                               const DiscretePath& z, const InitialDistribution& p0) {
  check_path(z, window, params.phi.rows());
  const Matrix Pi = transition_matrix(params.phi);
  double lp = std::log(p0.discrete(z.z_prev));
  int prev = z.z_prev;
  for (int k : z.z) {
    lp += std::log(Pi(prev, k));
    prev = k;
  }
  const auto sys = LinearGaussianSystem::from(params);
  return lp + kalman_forward(sys, obs, window, p0, z.z).log_norm.sum();
}

DiscretePath slds_collapsed_z_sweep(const SLDSParams& params, const Matrix& obs, IndexRange window,
                                    DiscretePath z, const InitialDistribution& p0, Rng& rng) {
  check_path(z, window, params.phi.rows());
  const Index K = params.phi.rows();
  const Matrix Pi = transition_matrix(params.phi);
  {
    Vector lw(K);
    for (Index k = 0; k < K; ++k) lw(k) = std::log(p0.discrete(k)) + std::log(Pi(k, z.z.front()));
    z.z_prev = sample_log_categorical(rng, lw);
  }
  for (size_t i = 0; i < z.z.size(); ++i) {
    Vector lw(K);
    for (Index k = 0; k < K; ++k) {
      z.z[i] = static_cast<int>(k);
      lw(k) = slds_collapsed_logjoint(params, obs, window, z, p0);
    }
    z.z[i] = sample_log_categorical(rng, lw);
  }
  return z;
}

double slds_complete_loglik(const SLDSParams& params, const Matrix& obs, IndexRange window,
                            const ContinuousPath& x, const DiscretePath& z, const InitialDistribution& p0) {
  check_window(window, obs);
  check_path(z, window, params.phi.rows());
  const Matrix Pi = transition_matrix(params.phi);
  const Matrix ll = dynamics_loglik(params, x);
  const Matrix p0_factor = factor_from_covariance(p0.cov);
  double total = std::log(p0.discrete(z.z_prev)) + gaussian_logpdf_factor(x.x_prev - p0.mean, p0_factor);
  int prev = z.z_prev;
  for (Index i = 0; i < window.size(); ++i) {
    const int k = z.z[static_cast<size_t>(i)];
    total += std::log(Pi(prev, k)) + ll(i, k);
    const Vector r = obs.row(window.begin + i).transpose() - params.C * x.x.row(i).transpose();
    total += gaussian_logpdf_factor(r, params.psi_r);
    prev = k;
  }
  return total;
}

PairwiseMarginals slds_estimator_pairwise(const SLDSParams& params, const Matrix& obs, IndexRange window,
                                          const SLDSGibbsState& state, const InitialDistribution& p0,
                                          SLDSEstimator estimator) {
  const Index W = window.size(), K = params.phi.rows(), n = params.C.cols();
  PairwiseMarginals out;
  out.window = window;
  out.discrete.reserve(static_cast<size_t>(W));
  out.gaussian.reserve(static_cast<size_t>(W));

  const auto one_hot_pairs = [&] {
    int prev = state.z.z_prev;
    for (int k : state.z.z) {
      Matrix xi = Matrix::Zero(K, K);
      xi(prev, k) = 1.0;
      out.discrete.push_back(std::move(xi));
      prev = k;
    }
  };
  const auto point_pairs = [&] {
    for (Index i = 0; i < W; ++i) {
      GaussianPairwise pair;
      pair.mean.resize(2 * n);
      pair.mean.head(n) = i == 0 ? state.x.x_prev : Vector(state.x.x.row(i - 1).transpose());
      pair.mean.tail(n) = state.x.x.row(i).transpose();
      pair.cov = Matrix::Zero(2 * n, 2 * n);
      out.gaussian.push_back(std::move(pair));
    }
  };

  switch (estimator) {
    case SLDSEstimator::XZ:
      one_hot_pairs();
      point_pairs();
      break;
    case SLDSEstimator::ZMarginal: {
      one_hot_pairs();
      const auto sys = LinearGaussianSystem::from(params);
      auto msgs = kalman_forward(sys, obs, window, p0, state.z.z);
      kalman_backward(sys, obs, msgs, state.z.z);
      out.gaussian = kalman_pairwise_marginals(sys, obs, msgs, state.z.z);
      break;
    }
    case SLDSEstimator::XMarginal: {
      const auto msgs = discrete_forward_backward(dynamics_loglik(params, state.x), transition_matrix(params.phi),
                                                  p0.discrete, window);
      out.discrete = hmm_pairwise_marginals(msgs, window);
      point_pairs();
      break;
    }
  }
  return out;
}

GradientVector slds_noisy_gradient(const SLDSParams& params, const Matrix& obs, const BufferedSubsequence& sub,
                                   const PriorSpec& prior, const InitialDistribution& p0,
                                   const SLDSGradientOptions& options, Rng& rng) {
  if (options.n_samples < 1 || options.burn_in < 0)
    throw std::invalid_argument("SLDS gradient needs at least one sample and a non-negative burn-in");
  if (sub.window.end > obs.rows()) throw std::invalid_argument("subsequence window exceeds the sequence");
  const ModelParams wrapped{params};
  SLDSGibbsState state;
  state.z = slds_init_latent(params, obs, sub.window, p0, options.init, rng);
  for (int b = 0; b < options.burn_in; ++b) slds_gibbs_sweep(params, obs, sub.window, state, p0, rng);

  GradientVector total{layout_of(wrapped), Vector::Zero(layout_of(wrapped).dim())};
  for (int r = 0; r < options.n_samples; ++r) {
    slds_gibbs_sweep(params, obs, sub.window, state, p0, rng);
    const auto pairwise = slds_estimator_pairwise(params, obs, sub.window, state, p0, options.estimator);
    total.values += expected_complete_grad(wrapped, obs, pairwise, sub.core, sub.weights).values;
  }
  total.values /= static_cast<double>(options.n_samples);
  total.values += log_prior_grad(wrapped, prior).values;
  return total;
}

GradientVector slds_noisy_gradient(const SLDSParams& params, const Matrix& obs, const BufferedSubsequence& sub,
                                   const PriorSpec& prior, const InitialDistribution& p0,
                                   const SLDSGradientOptions& options, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return slds_noisy_gradient(params, obs, sub, prior, p0, options, rng);
}

}  // namespace sgmcmc
