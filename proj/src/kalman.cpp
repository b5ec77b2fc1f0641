#include "sgmcmc/kalman.hpp"

#include <cmath>
#include <stdexcept>

#include "detail.hpp"

namespace sgmcmc {

using detail::checked_llt;
using detail::symmetrize;

LinearGaussianSystem LinearGaussianSystem::from(const LGSSMParams& params) {
  validate(ModelParams{params});
  LinearGaussianSystem sys;
  sys.A = {params.A};
  sys.Q = {covariance_from_factor(params.psi_q)};
  sys.Q_inv = {precision_from_factor(params.psi_q)};
  sys.C = params.C;
  sys.R = covariance_from_factor(params.psi_r);
  sys.R_inv = precision_from_factor(params.psi_r);
  return sys;
}

LinearGaussianSystem LinearGaussianSystem::from(const SLDSParams& params) {
  validate(ModelParams{params});
  LinearGaussianSystem sys;
  sys.A = params.A;
  for (const auto& psi : params.psi_q) {
    sys.Q.push_back(covariance_from_factor(psi));
    sys.Q_inv.push_back(precision_from_factor(psi));
  }
  sys.C = params.C;
  sys.R = covariance_from_factor(params.psi_r);
  sys.R_inv = precision_from_factor(params.psi_r);
  return sys;
}

namespace {

int regime_at(RegimePath regimes, Index i) {
  return regimes.empty() ? 0 : regimes[static_cast<size_t>(i)];
}

void check_inputs(const LinearGaussianSystem& sys, const Matrix& obs, IndexRange window, RegimePath regimes) {
  if (window.begin < 0 || window.end > obs.rows() || window.size() < 1)
    throw std::invalid_argument("window is empty or exceeds the sequence length");
  if (obs.cols() != sys.obs_dim()) throw std::invalid_argument("observation dimension mismatch");
  if (!regimes.empty() && static_cast<Index>(regimes.size()) != window.size())
    throw std::invalid_argument("regime path length does not match the window");
  for (int k : regimes)
    if (k < 0 || k >= static_cast<int>(sys.A.size())) throw std::invalid_argument("regime index out of range");
}

}  // namespace

GaussianMessageSet kalman_forward(const LinearGaussianSystem& sys, const Matrix& obs, IndexRange window,
                                  const InitialDistribution& p0, RegimePath regimes) {
  check_inputs(sys, obs, window, regimes);
  const Index n = sys.latent_dim(), W = window.size();
  if (p0.mean.size() != n || p0.cov.rows() != n || p0.cov.cols() != n)
    throw std::invalid_argument("initial distribution has the wrong dimension");
  Eigen::LLT<Matrix> p0_llt(p0.cov);
  if (p0_llt.info() != Eigen::Success) throw std::invalid_argument("initial covariance is not positive definite");

  const Matrix CtRinv = sys.C.transpose() * sys.R_inv;
  const Matrix CtRinvC = symmetrize(CtRinv * sys.C);

  GaussianMessageSet msgs;
  msgs.window = window;
  msgs.lambda_prior = symmetrize(p0_llt.solve(Matrix::Identity(n, n)));
  msgs.h_prior = msgs.lambda_prior * p0.mean;
  msgs.h_alpha.reserve(static_cast<size_t>(W));
  msgs.lambda_alpha.reserve(static_cast<size_t>(W));
  msgs.log_norm.resize(W);

  Vector mean = p0.mean;
  Matrix cov = p0.cov;
  for (Index i = 0; i < W; ++i) {
    const Index t = window.begin + i;
    const int k = regime_at(regimes, i);
    const Matrix& A = sys.A[static_cast<size_t>(k)];
    const Matrix pred_cov = symmetrize(sys.Q[static_cast<size_t>(k)] + A * cov * A.transpose());
    const Vector pred_mean = A * mean;
    auto pred_llt = checked_llt(pred_cov, "predictive covariance at t=" + std::to_string(t));
    const Matrix pred_prec = symmetrize(pred_llt.solve(Matrix::Identity(n, n)));
    const Vector y = obs.row(t).transpose();

    Matrix lambda = symmetrize(CtRinvC + pred_prec);
    Vector h = CtRinv * y + pred_prec * pred_mean;

    const Matrix S = symmetrize(sys.C * pred_cov * sys.C.transpose() + sys.R);
    auto s_llt = checked_llt(S, "innovation covariance at t=" + std::to_string(t));
    const Vector r = y - sys.C * pred_mean;
    const Matrix Ls = s_llt.matrixL();
    msgs.log_norm(i) = -0.5 * static_cast<double>(r.size()) * detail::kLog2Pi -
                       Ls.diagonal().array().log().sum() - 0.5 * r.dot(s_llt.solve(r));

    auto f_llt = checked_llt(lambda, "filtered precision at t=" + std::to_string(t));
    cov = symmetrize(f_llt.solve(Matrix::Identity(n, n)));
    mean = cov * h;
    msgs.h_alpha.push_back(std::move(h));
    msgs.lambda_alpha.push_back(std::move(lambda));
  }
  msgs.h_beta.assign(static_cast<size_t>(W), Vector::Zero(n));
  msgs.lambda_beta.assign(static_cast<size_t>(W), Matrix::Zero(n, n));
  return msgs;
}

void kalman_backward(const LinearGaussianSystem& sys, const Matrix& obs, GaussianMessageSet& msgs,
                     RegimePath regimes) {
  check_inputs(sys, obs, msgs.window, regimes);
  const Index n = sys.latent_dim(), W = msgs.window.size();
  const Matrix CtRinv = sys.C.transpose() * sys.R_inv;
  const Matrix CtRinvC = symmetrize(CtRinv * sys.C);
  msgs.h_beta.assign(static_cast<size_t>(W), Vector::Zero(n));
  msgs.lambda_beta.assign(static_cast<size_t>(W), Matrix::Zero(n, n));
  for (Index i = W - 2; i >= 0; --i) {
    const Index t_next = msgs.window.begin + i + 1;
    const int k = regime_at(regimes, i + 1);
    const Matrix& A = sys.A[static_cast<size_t>(k)];
    const Matrix& Qinv = sys.Q_inv[static_cast<size_t>(k)];
    const Matrix inner = symmetrize(Qinv + CtRinvC + msgs.lambda_beta[static_cast<size_t>(i + 1)]);
    auto llt = checked_llt(inner, "backward message at t=" + std::to_string(t_next));
    const Matrix QinvA = Qinv * A;
    const Vector rhs = CtRinv * obs.row(t_next).transpose() + msgs.h_beta[static_cast<size_t>(i + 1)];
    msgs.lambda_beta[static_cast<size_t>(i)] =
        symmetrize(A.transpose() * QinvA - QinvA.transpose() * llt.solve(QinvA));
    msgs.h_beta[static_cast<size_t>(i)] = QinvA.transpose() * llt.solve(rhs);
  }
}

std::vector<GaussianPairwise> kalman_pairwise_marginals(const LinearGaussianSystem& sys, const Matrix& obs,
                                                        const GaussianMessageSet& msgs, RegimePath regimes) {
  check_inputs(sys, obs, msgs.window, regimes);
  const Index n = sys.latent_dim(), W = msgs.window.size();
  const Matrix CtRinv = sys.C.transpose() * sys.R_inv;
  const Matrix CtRinvC = symmetrize(CtRinv * sys.C);
  std::vector<GaussianPairwise> out;
  out.reserve(static_cast<size_t>(W));
  for (Index i = 0; i < W; ++i) {
    const Index t = msgs.window.begin + i;
    const int k = regime_at(regimes, i);
    const Matrix& A = sys.A[static_cast<size_t>(k)];
    const Matrix& Qinv = sys.Q_inv[static_cast<size_t>(k)];
    const Matrix& lam_prev = i == 0 ? msgs.lambda_prior : msgs.lambda_alpha[static_cast<size_t>(i - 1)];
    const Vector& h_prev = i == 0 ? msgs.h_prior : msgs.h_alpha[static_cast<size_t>(i - 1)];
    const Matrix QinvA = Qinv * A;

    Matrix prec(2 * n, 2 * n);
    prec.topLeftCorner(n, n) = lam_prev + A.transpose() * QinvA;
    prec.topRightCorner(n, n) = -QinvA.transpose();
    prec.bottomLeftCorner(n, n) = -QinvA;
    prec.bottomRightCorner(n, n) = CtRinvC + Qinv + msgs.lambda_beta[static_cast<size_t>(i)];
    Vector h(2 * n);
    h.head(n) = h_prev;
    h.tail(n) = CtRinv * obs.row(t).transpose() + msgs.h_beta[static_cast<size_t>(i)];

    auto llt = checked_llt(symmetrize(prec), "pairwise precision at t=" + std::to_string(t));
    GaussianPairwise pair;
    pair.cov = symmetrize(llt.solve(Matrix::Identity(2 * n, 2 * n)));
    pair.mean = llt.solve(h);
    out.push_back(std::move(pair));
  }
  return out;
}

GaussianMessageSet kalman_forward(const LGSSMParams& params, const Matrix& obs, IndexRange window,
                                  const InitialDistribution& p0) {
  return kalman_forward(LinearGaussianSystem::from(params), obs, window, p0);
}

void kalman_backward(const LGSSMParams& params, const Matrix& obs, GaussianMessageSet& msgs) {
  kalman_backward(LinearGaussianSystem::from(params), obs, msgs);
}

std::vector<GaussianPairwise> lgssm_pairwise_marginals(const LGSSMParams& params, const Matrix& obs,
                                                       const GaussianMessageSet& msgs) {
  return kalman_pairwise_marginals(LinearGaussianSystem::from(params), obs, msgs);
}

SmoothedGaussian kalman_smoothed_marginals(const GaussianMessageSet& msgs) {
  const Index W = msgs.window.size();
  const Index n = msgs.h_alpha.empty() ? 0 : msgs.h_alpha[0].size();
  SmoothedGaussian out;
  out.mean.resize(W, n);
  for (Index i = 0; i < W; ++i) {
    const auto s = static_cast<size_t>(i);
    auto llt = checked_llt(symmetrize(msgs.lambda_alpha[s] + msgs.lambda_beta[s]), "smoothed precision");
    out.cov.push_back(symmetrize(llt.solve(Matrix::Identity(n, n))));
    out.mean.row(i) = llt.solve(msgs.h_alpha[s] + msgs.h_beta[s]).transpose();
  }
  return out;
}

double lgssm_marginal_loglik(const LGSSMParams& params, const Matrix& obs, const InitialDistribution& p0) {
  return kalman_forward(params, obs, {0, obs.rows()}, p0).log_norm.sum();
}

}  // namespace sgmcmc
