#include "sgmcmc/hmm_messages.hpp"

#include <cmath>
#include <stdexcept>

#include "detail.hpp"

namespace sgmcmc {

using detail::overloaded;

namespace {

void check_window(IndexRange window, Index T) {
  if (window.begin < 0 || window.end > T || window.size() < 1)
    throw std::invalid_argument("window [" + std::to_string(window.begin) + ", " +
                                std::to_string(window.end) + ") is empty or exceeds the sequence length " +
                                std::to_string(T));
}

// exp(row - max(row)) along with the subtracted max.
Vector scaled_likelihood(const Matrix& log_lik, Index i, double& shift) {
  shift = log_lik.row(i).maxCoeff();
  if (!std::isfinite(shift)) throw NumericalError("emission log-likelihood is not finite at step " + std::to_string(i));
  return (log_lik.row(i).array() - shift).exp().transpose();
}

}  // namespace

Matrix emission_loglik(const ModelParams& params, const Matrix& obs, IndexRange window) {
  check_window(window, obs.rows());
  const Index W = window.size();
  return std::visit(
      overloaded{
          [&](const GaussianHMMParams& p) -> Matrix {
            const Index K = p.phi.rows();
            Matrix ll(W, K);
            for (Index i = 0; i < W; ++i) {
              const Vector y = obs.row(window.begin + i).transpose();
              for (Index k = 0; k < K; ++k) ll(i, k) = gaussian_logpdf_factor(y - p.mu[k], p.psi_sigma[k]);
            }
            return ll;
          },
          [&](const ARHMMParams& p) -> Matrix {
            const Index K = p.phi.rows();
            Matrix ll(W, K);
            for (Index i = 0; i < W; ++i) {
              const Index t = window.begin + i;
              const Vector y = obs.row(t).transpose();
              const Vector ctx = lagged_context(obs, t, p.lag);
              for (Index k = 0; k < K; ++k) ll(i, k) = gaussian_logpdf_factor(y - p.A[k] * ctx, p.psi_q[k]);
            }
            return ll;
          },
          [](const auto&) -> Matrix {
            throw std::invalid_argument("discrete message passing needs a Gaussian HMM or ARHMM");
          }},
      params);
}

DiscreteMessageSet discrete_forward_backward(const Matrix& log_lik, const Matrix& transition,
                                             const Vector& p0, IndexRange window) {
  const Index W = log_lik.rows(), K = log_lik.cols();
  if (W != window.size()) throw std::invalid_argument("log-likelihood rows do not match the window");
  if (transition.rows() != K || transition.cols() != K || p0.size() != K)
    throw std::invalid_argument("transition matrix or p0 has the wrong size");
  DiscreteMessageSet msgs;
  msgs.window = window;
  msgs.p0 = p0;
  msgs.transition = transition;
  msgs.log_lik = log_lik;
  msgs.log_alpha.resize(W, K);
  msgs.log_norm.resize(W);

  Vector prev = p0;
  for (Index i = 0; i < W; ++i) {
    double shift = 0.0;
    const Vector e = scaled_likelihood(log_lik, i, shift);
    const Vector a = (transition.transpose() * prev).cwiseProduct(e);
    const double s = a.sum();
    if (!(s > 0.0) || !std::isfinite(s))
      throw NumericalError("forward pass reached a zero-probability step at t=" + std::to_string(window.begin + i));
    msgs.log_norm(i) = std::log(s) + shift;
    prev = a / s;
    msgs.log_alpha.row(i) = prev.array().log().transpose();
  }
  msgs.log_beta = discrete_backward(log_lik, transition);
  return msgs;
}

Matrix discrete_backward(const Matrix& log_lik, const Matrix& transition) {
  const Index W = log_lik.rows(), K = log_lik.cols();
  Matrix log_beta = Matrix::Zero(W, K);
  Vector beta = Vector::Ones(K);
  for (Index i = W - 2; i >= 0; --i) {
    double shift = 0.0;
    const Vector e = scaled_likelihood(log_lik, i + 1, shift);
    Vector v = transition * e.cwiseProduct(beta);
    const double top = v.maxCoeff();
    if (!(top > 0.0) || !std::isfinite(top)) throw NumericalError("backward pass underflowed");
    beta = v / top;
    log_beta.row(i) = beta.array().log().transpose();
  }
  return log_beta;
}

DiscreteMessageSet hmm_forward_backward(const ModelParams& params, const Matrix& obs,
                                        IndexRange window, const Vector& p0) {
  const Matrix ll = emission_loglik(params, obs, window);
  const Matrix Pi = std::visit(overloaded{[](const GaussianHMMParams& p) { return transition_matrix(p.phi); },
                                          [](const ARHMMParams& p) { return transition_matrix(p.phi); },
                                          [](const auto&) -> Matrix { throw std::invalid_argument("not a discrete family"); }},
                               params);
  return discrete_forward_backward(ll, Pi, p0, window);
}

std::vector<Matrix> hmm_pairwise_marginals(const DiscreteMessageSet& msgs, IndexRange window) {
  if (!(window == msgs.window)) throw std::invalid_argument("window does not match the message set");
  const Index W = window.size();
  std::vector<Matrix> out;
  out.reserve(static_cast<size_t>(W));
  for (Index i = 0; i < W; ++i) {
    const Vector prev = i == 0 ? msgs.p0 : Vector(msgs.log_alpha.row(i - 1).array().exp().transpose());
    double shift = 0.0;
    const Vector e = scaled_likelihood(msgs.log_lik, i, shift);
    const Vector right = e.cwiseProduct(msgs.log_beta.row(i).array().exp().matrix().transpose());
    Matrix xi = prev.asDiagonal() * msgs.transition * right.asDiagonal();
    const double s = xi.sum();
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericalError("pairwise marginal has zero mass");
    out.push_back(xi / s);
  }
  return out;
}

Matrix hmm_smoothed_marginals(const DiscreteMessageSet& msgs) {
  Matrix gamma = (msgs.log_alpha + msgs.log_beta).array().exp();
  for (Index i = 0; i < gamma.rows(); ++i) gamma.row(i) /= gamma.row(i).sum();
  return gamma;
}

double hmm_marginal_loglik(const ModelParams& params, const Matrix& obs, const Vector& p0) {
  return hmm_forward_backward(params, obs, {0, obs.rows()}, p0).log_norm.sum();
}

}  // namespace sgmcmc
