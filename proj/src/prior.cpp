#include "sgmcmc/prior.hpp"

#include <cmath>
#include <stdexcept>

#include "detail.hpp"

namespace sgmcmc {

using detail::overloaded;

double PriorSpec::nu_for(Index dim) const {
  return wishart_nu > 0.0 ? wishart_nu : static_cast<double>(dim) + 1.0;
}

double PriorSpec::scale_for(Index dim) const {
  return wishart_scale > 0.0 ? wishart_scale : nu_for(dim);
}

void validate(const PriorSpec& prior, const ModelParams& params) {
  if (!(prior.dirichlet_alpha > 0.0)) throw std::invalid_argument("dirichlet alpha must be positive");
  if (prior.dirichlet_alpha_matrix.size() > 0) {
    const Index K = num_states(params);
    if (prior.dirichlet_alpha_matrix.rows() != K || prior.dirichlet_alpha_matrix.cols() != K)
      throw std::invalid_argument("dirichlet alpha matrix must be K x K");
    if (!(prior.dirichlet_alpha_matrix.array() > 0.0).all())
      throw std::invalid_argument("dirichlet alpha entries must be positive");
  }
  if (!(prior.matnormal_col_var > 0.0) || !(prior.mean_var > 0.0))
    throw std::invalid_argument("prior variances must be positive");
  const Index dims[] = {obs_dim(params), latent_dim(params)};
  for (Index d : dims)
    if (d > 0 && prior.wishart_nu > 0.0 && prior.wishart_nu < static_cast<double>(d) + 1.0)
      throw std::invalid_argument("wishart degrees of freedom must be at least dimension + 1");
}

namespace {

Matrix alpha_matrix(const PriorSpec& prior, Index K) {
  if (prior.dirichlet_alpha_matrix.size() > 0) return prior.dirichlet_alpha_matrix;
  return Matrix::Constant(K, K, prior.dirichlet_alpha);
}

// Accumulates value and parameter-shaped gradient for each prior term.
struct Accumulator {
  const PriorSpec& prior;
  double value = 0.0;

  void phi(const Matrix& phi, Matrix& grad) {
    const Matrix alpha = alpha_matrix(prior, phi.rows());
    value += (alpha.array() * phi.array().log() - phi.array()).sum();
    grad += alpha - phi;
  }

  void mean(const Matrix& x, Matrix& grad) {
    value += -0.5 * x.squaredNorm() / prior.mean_var;
    grad += -x / prior.mean_var;
  }

  // Wishart on psi psi^T plus the log-Cholesky Jacobian.
  void factor(const Matrix& psi, Matrix& grad) {
    const Index d = psi.rows();
    const double nu = prior.nu_for(d);
    const double scale = prior.scale_for(d);
    const Vector diag = psi.diagonal();
    value += (nu - static_cast<double>(d) - 1.0) * diag.array().log().sum() -
             0.5 * scale * psi.squaredNorm();
    grad += -scale * psi;
    for (Index i = 0; i < d; ++i) {
      const double jac = static_cast<double>(d - i + 1);
      value += jac * std::log(diag(i));
      grad(i, i) += (nu - static_cast<double>(d) - 1.0 + jac) / diag(i);
    }
  }

  // Matrix normal regression prior with row covariance (psi psi^T)^{-1}.
  void regression(const Matrix& A, const Matrix& psi, Matrix& grad_A, Matrix& grad_psi) {
    const double v = prior.matnormal_col_var;
    const Matrix W = precision_from_factor(psi);
    const double cols = static_cast<double>(A.cols());
    value += -0.5 / v * (A.transpose() * W * A).trace() + cols * psi.diagonal().array().log().sum();
    grad_A += -(W * A) / v;
    grad_psi += -(A * A.transpose() * psi) / v;
    for (Index i = 0; i < psi.rows(); ++i) grad_psi(i, i) += cols / psi(i, i);
  }
};

}  // namespace

namespace {

std::pair<double, ModelParams> prior_terms(const ModelParams& params, const PriorSpec& prior) {
  validate(params);
  validate(prior, params);
  ModelParams grad = zeros_like(params);
  Accumulator acc{prior};
  std::visit(overloaded{
                 [&](const GaussianHMMParams& p) {
                   auto& g = std::get<GaussianHMMParams>(grad);
                   acc.phi(p.phi, g.phi);
                   for (size_t k = 0; k < p.mu.size(); ++k) {
                     Matrix gm = g.mu[k];
                     acc.mean(p.mu[k], gm);
                     g.mu[k] = gm;
                     acc.factor(p.psi_sigma[k], g.psi_sigma[k]);
                   }
                 },
                 [&](const ARHMMParams& p) {
                   auto& g = std::get<ARHMMParams>(grad);
                   acc.phi(p.phi, g.phi);
                   for (size_t k = 0; k < p.A.size(); ++k) {
                     acc.regression(p.A[k], p.psi_q[k], g.A[k], g.psi_q[k]);
                     acc.factor(p.psi_q[k], g.psi_q[k]);
                   }
                 },
                 [&](const LGSSMParams& p) {
                   auto& g = std::get<LGSSMParams>(grad);
                   acc.regression(p.A, p.psi_q, g.A, g.psi_q);
                   acc.factor(p.psi_q, g.psi_q);
                   Matrix free_c = p.C - identity_emission(p.C.rows(), p.C.cols());
                   acc.mean(free_c, g.C);
                   acc.factor(p.psi_r, g.psi_r);
                 },
                 [&](const SLDSParams& p) {
                   auto& g = std::get<SLDSParams>(grad);
                   acc.phi(p.phi, g.phi);
                   for (size_t k = 0; k < p.A.size(); ++k) {
                     acc.regression(p.A[k], p.psi_q[k], g.A[k], g.psi_q[k]);
                     acc.factor(p.psi_q[k], g.psi_q[k]);
                   }
                   Matrix free_c = p.C - identity_emission(p.C.rows(), p.C.cols());
                   acc.mean(free_c, g.C);
                   acc.factor(p.psi_r, g.psi_r);
                 }},
             params);
  return {acc.value, std::move(grad)};
}

}  // namespace

double log_prior(const ModelParams& params, const PriorSpec& prior) {
  return prior_terms(params, prior).first;
}

GradientVector log_prior_grad(const ModelParams& params, const PriorSpec& prior) {
  auto [value, grad] = prior_terms(params, prior);
  (void)value;
  return {layout_of(params), pack_gradient(params, grad)};
}

}  // namespace sgmcmc
