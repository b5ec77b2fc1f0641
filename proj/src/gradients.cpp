#include "sgmcmc/gradients.hpp"

#include <stdexcept>

#include "detail.hpp"
#include "sgmcmc/hmm_messages.hpp"

namespace sgmcmc {

using detail::overloaded;

PairwiseMarginals pairwise_marginals(const ModelParams& params, const Matrix& obs, IndexRange window,
                                     const InitialDistribution& p0) {
  PairwiseMarginals out;
  out.window = window;
  std::visit(overloaded{
                 [&](const LGSSMParams& p) {
                   const auto sys = LinearGaussianSystem::from(p);
                   auto msgs = kalman_forward(sys, obs, window, p0);
                   kalman_backward(sys, obs, msgs);
                   out.gaussian = kalman_pairwise_marginals(sys, obs, msgs);
                 },
                 [&](const SLDSParams&) {
                   throw std::invalid_argument("SLDS pairwise moments are not tractable; use the Gibbs estimators");
                 },
                 [&](const auto&) {
                   const auto msgs = hmm_forward_backward(params, obs, window, p0.discrete);
                   out.discrete = hmm_pairwise_marginals(msgs, window);
                 }},
             params);
  return out;
}

namespace {

struct SecondMoments {
  Matrix prev_prev;  // E[x_{t-1} x_{t-1}^T]
  Matrix cur_prev;   // E[x_t x_{t-1}^T]
  Matrix cur_cur;    // E[x_t x_t^T]
  Vector cur_mean;
};

SecondMoments moments(const GaussianPairwise& pair) {
  const Index n = pair.mean.size() / 2;
  const Matrix M = pair.cov + pair.mean * pair.mean.transpose();
  return {M.topLeftCorner(n, n), M.bottomLeftCorner(n, n), M.bottomRightCorner(n, n), pair.mean.tail(n)};
}

void add_transition_terms(const Matrix& xi, const Matrix& Pi, double w, Matrix& grad_phi) {
  const Vector from = xi.rowwise().sum();
  grad_phi += w * (xi - from.asDiagonal() * Pi);
}

// Regression of x_t on x_{t-1} with noise precision factor psi.
void add_dynamics_terms(const SecondMoments& s, const Matrix& A, const Matrix& Q, const Matrix& Q_inv,
                        const Matrix& psi, double w, Matrix& grad_A, Matrix& grad_psi) {
  grad_A += w * Q_inv * (s.cur_prev - A * s.prev_prev);
  const Matrix resid = s.cur_cur - A * s.cur_prev.transpose() - s.cur_prev * A.transpose() +
                       A * s.prev_prev * A.transpose();
  grad_psi += w * (Q - resid) * psi;
}

void add_emission_terms(const SecondMoments& s, const Vector& y, const Matrix& C, const Matrix& R,
                        const Matrix& R_inv, const Matrix& psi, double w, Matrix& grad_C, Matrix& grad_psi) {
  grad_C += w * R_inv * (y * s.cur_mean.transpose() - C * s.cur_cur);
  const Vector Cm = C * s.cur_mean;
  const Matrix resid = y * y.transpose() - Cm * y.transpose() - y * Cm.transpose() + C * s.cur_cur * C.transpose();
  grad_psi += w * (R - resid) * psi;
}

}  // namespace

GradientVector expected_complete_grad(const ModelParams& params, const Matrix& obs,
                                      const PairwiseMarginals& pairwise, IndexRange core,
                                      const Vector& core_weights) {
  if (!pairwise.window.contains(core)) throw std::invalid_argument("core is not contained in the window");
  if (core_weights.size() != core.size()) throw std::invalid_argument("one weight per core step is required");
  ModelParams grad = zeros_like(params);
  const auto at = [&](Index t) { return static_cast<size_t>(t - pairwise.window.begin); };
  const auto need = [&](bool ok) {
    if (!ok) throw std::invalid_argument("pairwise moments do not match the model family");
  };

  std::visit(
      overloaded{
          [&](const GaussianHMMParams& p) {
            need(static_cast<Index>(pairwise.discrete.size()) == pairwise.window.size());
            auto& g = std::get<GaussianHMMParams>(grad);
            const Matrix Pi = transition_matrix(p.phi);
            std::vector<Matrix> cov;
            for (const auto& psi : p.psi_sigma) cov.push_back(covariance_from_factor(psi));
            for (Index t = core.begin; t < core.end; ++t) {
              const double w = core_weights(t - core.begin);
              const Matrix& xi = pairwise.discrete[at(t)];
              add_transition_terms(xi, Pi, w, g.phi);
              const Vector gamma = xi.colwise().sum().transpose();
              const Vector y = obs.row(t).transpose();
              for (size_t k = 0; k < p.mu.size(); ++k) {
                const double wk = w * gamma(static_cast<Index>(k));
                const Vector r = y - p.mu[k];
                g.mu[k] += wk * precision_from_factor(p.psi_sigma[k]) * r;
                g.psi_sigma[k] += wk * (cov[k] - r * r.transpose()) * p.psi_sigma[k];
              }
            }
          },
          [&](const ARHMMParams& p) {
            need(static_cast<Index>(pairwise.discrete.size()) == pairwise.window.size());
            auto& g = std::get<ARHMMParams>(grad);
            const Matrix Pi = transition_matrix(p.phi);
            std::vector<Matrix> cov, prec;
            for (const auto& psi : p.psi_q) {
              cov.push_back(covariance_from_factor(psi));
              prec.push_back(precision_from_factor(psi));
            }
            for (Index t = core.begin; t < core.end; ++t) {
              const double w = core_weights(t - core.begin);
              const Matrix& xi = pairwise.discrete[at(t)];
              add_transition_terms(xi, Pi, w, g.phi);
              const Vector gamma = xi.colwise().sum().transpose();
              const Vector y = obs.row(t).transpose();
              const Vector ctx = lagged_context(obs, t, p.lag);
              for (size_t k = 0; k < p.A.size(); ++k) {
                const double wk = w * gamma(static_cast<Index>(k));
                const Vector r = y - p.A[k] * ctx;
                g.A[k] += wk * prec[k] * r * ctx.transpose();
                g.psi_q[k] += wk * (cov[k] - r * r.transpose()) * p.psi_q[k];
              }
            }
          },
          [&](const LGSSMParams& p) {
            need(static_cast<Index>(pairwise.gaussian.size()) == pairwise.window.size());
            auto& g = std::get<LGSSMParams>(grad);
            const auto sys = LinearGaussianSystem::from(p);
            for (Index t = core.begin; t < core.end; ++t) {
              const double w = core_weights(t - core.begin);
              const SecondMoments s = moments(pairwise.gaussian[at(t)]);
              add_dynamics_terms(s, p.A, sys.Q[0], sys.Q_inv[0], p.psi_q, w, g.A, g.psi_q);
              add_emission_terms(s, obs.row(t).transpose(), p.C, sys.R, sys.R_inv, p.psi_r, w, g.C, g.psi_r);
            }
          },
          [&](const SLDSParams& p) {
            need(static_cast<Index>(pairwise.discrete.size()) == pairwise.window.size() &&
                 static_cast<Index>(pairwise.gaussian.size()) == pairwise.window.size());
            auto& g = std::get<SLDSParams>(grad);
            const auto sys = LinearGaussianSystem::from(p);
            const Matrix Pi = transition_matrix(p.phi);
            for (Index t = core.begin; t < core.end; ++t) {
              const double w = core_weights(t - core.begin);
              const Matrix& xi = pairwise.discrete[at(t)];
              add_transition_terms(xi, Pi, w, g.phi);
              const Vector gamma = xi.colwise().sum().transpose();
              const SecondMoments s = moments(pairwise.gaussian[at(t)]);
              for (size_t k = 0; k < p.A.size(); ++k) {
                const double wk = w * gamma(static_cast<Index>(k));
                if (wk == 0.0) continue;
                add_dynamics_terms(s, p.A[k], sys.Q[k], sys.Q_inv[k], p.psi_q[k], wk, g.A[k], g.psi_q[k]);
              }
              add_emission_terms(s, obs.row(t).transpose(), p.C, sys.R, sys.R_inv, p.psi_r, w, g.C, g.psi_r);
            }
          }},
      params);
  return {layout_of(params), pack_gradient(params, grad)};
}

GradientVector subsequence_loglik_gradient(const ModelParams& params, const Matrix& obs,
                                           const BufferedSubsequence& sub, const InitialDistribution& p0) {
  if (sub.window.end > obs.rows()) throw std::invalid_argument("subsequence window exceeds the sequence");
  const PairwiseMarginals pairwise = pairwise_marginals(params, obs, sub.window, p0);
  return expected_complete_grad(params, obs, pairwise, sub.core, sub.weights);
}

GradientVector buffered_gradient(const ModelParams& params, const Matrix& obs, const BufferedSubsequence& sub,
                                 const PriorSpec& prior, const InitialDistribution& p0) {
  GradientVector g = subsequence_loglik_gradient(params, obs, sub, p0);
  g.values += log_prior_grad(params, prior).values;
  return g;
}

GradientVector full_gradient(const ModelParams& params, const Matrix& obs, const PriorSpec& prior,
                             const InitialDistribution& p0) {
  return buffered_gradient(params, obs, full_sequence(obs.rows()), prior, p0);
}

GradientVector unbiased_loglik_gradient(const ModelParams& params, const Matrix& obs,
                                        const PairwiseMarginals& full_pairwise, const BufferedSubsequence& sub) {
  return expected_complete_grad(params, obs, full_pairwise, sub.core, sub.weights);
}

double marginal_loglik(const ModelParams& params, const Matrix& obs, const InitialDistribution& p0) {
  return std::visit(overloaded{[&](const LGSSMParams& p) { return lgssm_marginal_loglik(p, obs, p0); },
                               [&](const SLDSParams&) -> double {
                                 throw std::invalid_argument("SLDS marginal likelihood is intractable");
                               },
                               [&](const auto&) { return hmm_marginal_loglik(params, obs, p0.discrete); }},
                    params);
}

}  // namespace sgmcmc
