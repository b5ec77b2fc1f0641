#include "sgmcmc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "detail.hpp"
#include "sgmcmc/hmm_messages.hpp"
#include "sgmcmc/kalman.hpp"

namespace sgmcmc {

using detail::overloaded;

double heldout_loglik(const ModelParams& params, const Matrix& test_obs) {
  if (family_of(params) == Family::SLDS)
    throw std::invalid_argument("SLDS marginal likelihood is intractable; use slds_em_lower_bound");
  return marginal_loglik(params, test_obs, default_initial_distribution(params));
}

double predictive_k_step(const ModelParams& params, const Matrix& obs, int k) {
  if (k < 1) throw std::invalid_argument("prediction horizon must be at least 1");
  validate(params);
  const Index T = obs.rows();
  const InitialDistribution p0 = default_initial_distribution(params);
  double total = 0.0;
  if (const auto* lg = std::get_if<LGSSMParams>(&params)) {
    const auto msgs = kalman_forward(*lg, obs, {0, T}, p0);
    const Matrix Q = covariance_from_factor(lg->psi_q), R = covariance_from_factor(lg->psi_r);
    for (Index t = 0; t + k < T; ++t) {
      auto llt = detail::checked_llt(msgs.lambda_alpha[static_cast<size_t>(t)], "filtered precision");
      Vector mean = llt.solve(msgs.h_alpha[static_cast<size_t>(t)]);
      Matrix cov = llt.solve(Matrix::Identity(mean.size(), mean.size()));
      for (int s = 0; s < k; ++s) {
        mean = lg->A * mean;
        cov = detail::symmetrize(lg->A * cov * lg->A.transpose() + Q);
      }
      const Matrix S = detail::symmetrize(lg->C * cov * lg->C.transpose() + R);
      const Vector r = obs.row(t + k).transpose() - lg->C * mean;
      total += gaussian_logpdf_factor(r, factor_from_precision(detail::spd_inverse(S, "predictive covariance")));
    }
    return total;
  }
  if (family_of(params) == Family::SLDS) throw std::invalid_argument("k-step prediction needs exact messages");
  const auto msgs = hmm_forward_backward(params, obs, {0, T}, p0.discrete);
  Matrix Pk = Matrix::Identity(msgs.transition.rows(), msgs.transition.cols());
  for (int s = 0; s < k; ++s) Pk = Pk * msgs.transition;
  for (Index t = 0; t + k < T; ++t) {
    const Vector pred = (msgs.log_alpha.row(t).array().exp().matrix() * Pk).transpose();
    total += detail::log_sum_exp(pred.array().log().matrix() + msgs.log_lik.row(t + k).transpose());
  }
  return total;
}

std::pair<std::string, std::string> state_block_names(Family family) {
  switch (family) {
    case Family::GaussianHMM: return {"mu", "Sigma"};
    default: return {"A", "Q"};
  }
}

DerivedParams derive(const ModelParams& params) {
  DerivedParams d;
  d.family = family_of(params);
  std::visit(overloaded{[&](const GaussianHMMParams& p) {
                          d.Pi = transition_matrix(p.phi);
                          for (size_t k = 0; k < p.mu.size(); ++k) {
                            d.state_mean.push_back(p.mu[k]);
                            d.state_cov.push_back(covariance_from_factor(p.psi_sigma[k]));
                          }
                        },
                        [&](const ARHMMParams& p) {
                          d.Pi = transition_matrix(p.phi);
                          for (size_t k = 0; k < p.A.size(); ++k) {
                            d.state_mean.push_back(p.A[k]);
                            d.state_cov.push_back(covariance_from_factor(p.psi_q[k]));
                          }
                        },
                        [&](const LGSSMParams& p) {
                          d.state_mean = {p.A};
                          d.state_cov = {covariance_from_factor(p.psi_q)};
                          d.C = p.C;
                          d.R = covariance_from_factor(p.psi_r);
                        },
                        [&](const SLDSParams& p) {
                          d.Pi = transition_matrix(p.phi);
                          for (size_t k = 0; k < p.A.size(); ++k) {
                            d.state_mean.push_back(p.A[k]);
                            d.state_cov.push_back(covariance_from_factor(p.psi_q[k]));
                          }
                          d.C = p.C;
                          d.R = covariance_from_factor(p.psi_r);
                        }},
             params);
  return d;
}

ModelParams to_params(const DerivedParams& d, const ModelParams& shape) {
  ModelParams out = shape;
  std::visit(overloaded{[&](GaussianHMMParams& p) {
                          p.phi = d.Pi;
                          for (size_t k = 0; k < p.mu.size(); ++k) {
                            p.mu[k] = d.state_mean[k].col(0);
                            p.psi_sigma[k] = factor_from_covariance(d.state_cov[k]);
                          }
                        },
                        [&](ARHMMParams& p) {
                          p.phi = d.Pi;
                          for (size_t k = 0; k < p.A.size(); ++k) {
                            p.A[k] = d.state_mean[k];
                            p.psi_q[k] = factor_from_covariance(d.state_cov[k]);
                          }
                        },
                        [&](LGSSMParams& p) {
                          p.A = d.state_mean.front();
                          p.psi_q = factor_from_covariance(d.state_cov.front());
                          p.C = d.C;
                          p.psi_r = factor_from_covariance(d.R);
                        },
                        [&](SLDSParams& p) {
                          p.phi = d.Pi;
                          for (size_t k = 0; k < p.A.size(); ++k) {
                            p.A[k] = d.state_mean[k];
                            p.psi_q[k] = factor_from_covariance(d.state_cov[k]);
                          }
                          p.C = d.C;
                          p.psi_r = factor_from_covariance(d.R);
                        }},
             out);
  validate(out);
  return out;
}

std::vector<DerivedParams> running_average(const std::vector<DerivedParams>& samples) {
  std::vector<DerivedParams> out;
  out.reserve(samples.size());
  DerivedParams sum;
  for (size_t s = 0; s < samples.size(); ++s) {
    const auto& x = samples[s];
    if (s == 0) {
      sum = x;
    } else {
      sum.Pi += x.Pi;
      for (size_t k = 0; k < x.state_mean.size(); ++k) {
        sum.state_mean[k] += x.state_mean[k];
        sum.state_cov[k] += x.state_cov[k];
      }
      sum.C += x.C;
      sum.R += x.R;
    }
    DerivedParams avg = sum;
    const double w = 1.0 / static_cast<double>(s + 1);
    avg.Pi *= w;
    for (size_t k = 0; k < avg.state_mean.size(); ++k) {
      avg.state_mean[k] *= w;
      avg.state_cov[k] *= w;
    }
    avg.C *= w;
    avg.R *= w;
    out.push_back(std::move(avg));
  }
  return out;
}

namespace {

double mse(const Matrix& a, const Matrix& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

void check_shapes(const DerivedParams& est, const DerivedParams& truth) {
  const auto same = [](const Matrix& a, const Matrix& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
  bool ok = est.family == truth.family && same(est.Pi, truth.Pi) && est.state_mean.size() == truth.state_mean.size() &&
            same(est.C, truth.C) && same(est.R, truth.R);
  for (size_t k = 0; ok && k < est.state_mean.size(); ++k)
    ok = same(est.state_mean[k], truth.state_mean[k]) && same(est.state_cov[k], truth.state_cov[k]);
  if (!ok) throw std::invalid_argument("estimate and truth have different families or shapes");
}

}  // namespace

AlignedMSE param_mse_with(const DerivedParams& est, const DerivedParams& truth, const std::vector<int>& perm) {
  check_shapes(est, truth);
  const Index K = static_cast<Index>(truth.state_mean.size());
  if (static_cast<Index>(perm.size()) != K) throw std::invalid_argument("permutation has the wrong length");
  AlignedMSE out;
  out.permutation = perm;
  if (truth.Pi.size() > 0) {
    Matrix aligned(K, K);
    for (Index i = 0; i < K; ++i)
      for (Index j = 0; j < K; ++j) aligned(i, j) = est.Pi(perm[i], perm[j]);
    out.block["Pi"] = mse(aligned, truth.Pi);
  }
  const auto [mean_name, cov_name] = state_block_names(truth.family);
  double sm = 0.0, sc = 0.0;
  Index nm = 0, nc = 0;
  for (Index j = 0; j < K; ++j) {
    const auto s = static_cast<size_t>(j);
    sm += (est.state_mean[static_cast<size_t>(perm[s])] - truth.state_mean[s]).squaredNorm();
    sc += (est.state_cov[static_cast<size_t>(perm[s])] - truth.state_cov[s]).squaredNorm();
    nm += truth.state_mean[s].size();
    nc += truth.state_cov[s].size();
  }
  out.block[mean_name] = sm / static_cast<double>(std::max<Index>(nm, 1));
  out.block[cov_name] = sc / static_cast<double>(std::max<Index>(nc, 1));
  if (truth.C.size() > 0) {
    out.block["C"] = mse(est.C, truth.C);
    out.block["R"] = mse(est.R, truth.R);
  }
  for (const auto& [name, v] : out.block) out.total += v;
  return out;
}

std::vector<int> hungarian(const Matrix& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("assignment needs a square cost matrix");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials method, 1-indexed with a dummy column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Index i0 = match[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(static_cast<size_t>(n));
  for (Index j = 1; j <= n; ++j) out[static_cast<size_t>(match[j] - 1)] = static_cast<int>(j - 1);
  return out;
}

AlignedMSE param_mse_aligned(const DerivedParams& est, const DerivedParams& truth) {
  check_shapes(est, truth);
  const int K = static_cast<int>(truth.state_mean.size());
  std::vector<int> perm(static_cast<size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  if (K <= 8) {
    AlignedMSE best = param_mse_with(est, truth, perm);
    while (std::next_permutation(perm.begin(), perm.end())) {
      AlignedMSE cand = param_mse_with(est, truth, perm);
      if (cand.total < best.total) best = std::move(cand);
    }
    return best;
  }
  // cost(i, j): truth state i matched with estimate state j.
  Matrix cost(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      cost(i, j) = (est.state_mean[j] - truth.state_mean[i]).squaredNorm() +
                   (est.state_cov[j] - truth.state_cov[i]).squaredNorm();
      if (truth.Pi.size() > 0) cost(i, j) += std::pow(est.Pi(j, j) - truth.Pi(i, i), 2);
    }
  return param_mse_with(est, truth, hungarian(cost));
}

AlignedMSE param_mse_aligned(const ModelParams& est, const ModelParams& truth) {
  return param_mse_aligned(derive(est), derive(truth));
}

double imq_kernel(const Vector& x, const Vector& y) { return 1.0 / std::sqrt(1.0 + (x - y).squaredNorm()); }

Vector ksd_imq_dimensions(const Matrix& points, const Matrix& scores, int jobs) {
  const Index n = points.rows(), d = points.cols();
  if (n < 2) throw std::invalid_argument("KSD needs at least two samples");
  if (scores.rows() != n || scores.cols() != d) throw std::invalid_argument("scores do not match the samples");
  if (!scores.allFinite()) throw std::invalid_argument("scores contain non-finite values");
  // Row i accumulates sum_j k0^d(x_i, x_j); rows are summed in order.
  Matrix partial = Matrix::Zero(n, d);
  const auto row = [&](Index i) {
    for (Index j = 0; j < n; ++j) {
      const Eigen::RowVectorXd r = points.row(i) - points.row(j);
      const double u = 1.0 + r.squaredNorm();
      const double k = 1.0 / std::sqrt(u), k3 = k / u, k5 = k3 / u;
      // grad_x k = -k3 r, grad_y k = k3 r, d2k/dx_d dy_d = k3 - 3 r_d^2 k5.
      partial.row(i) += (scores.row(i).array() * scores.row(j).array() * k - scores.row(j).array() * k3 * r.array() +
                         scores.row(i).array() * k3 * r.array() + k3 - 3.0 * r.array().square() * k5)
                            .matrix();
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) row(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (Index i = w; i < n; i += workers) row(i);
      });
    for (auto& t : pool) t.join();
  }
  Vector sum = Vector::Zero(d);
  for (Index i = 0; i < n; ++i) sum += partial.row(i).transpose();
  return (sum / static_cast<double>(n * n)).cwiseMax(0.0).cwiseSqrt();
}

std::vector<bool> log_scale_mask(const ModelParams& params) {
  const ParamLayout layout = layout_of(params);
  std::vector<bool> mask(static_cast<size_t>(layout.dim()), false);
  const auto factor_dim = [&](const std::string& name) -> Index {
    return std::visit(overloaded{[&](const GaussianHMMParams& p) { return p.mu.front().size(); },
                                 [&](const ARHMMParams& p) { return p.A.front().rows(); },
                                 [&](const LGSSMParams& p) { return name == "psi_q" ? p.A.rows() : p.C.rows(); },
                                 [&](const SLDSParams& p) { return name == "psi_q" ? p.C.cols() : p.C.rows(); }},
                      params);
  };
  for (const auto& b : layout.blocks()) {
    if (b.name == "phi") {
      for (Index i = 0; i < b.size; ++i) mask[static_cast<size_t>(b.offset + i)] = true;
    } else if (b.name.rfind("psi", 0) == 0) {
      const Index d = factor_dim(b.name), tri = d * (d + 1) / 2;
      for (Index f = 0; f < b.size / tri; ++f) {
        Index pos = b.offset + f * tri;
        for (Index c = 0; c < d; ++c) {
          mask[static_cast<size_t>(pos)] = true;
          pos += d - c;
        }
      }
    }
  }
  return mask;
}

Vector constrained_coordinates(const ModelParams& params) {
  Vector u = unconstrain(params);
  const auto mask = log_scale_mask(params);
  for (Index i = 0; i < u.size(); ++i)
    if (mask[static_cast<size_t>(i)]) u(i) = std::exp(u(i));
  return u;
}

KSDReport ksd_imq(const std::vector<ModelParams>& samples, const ScoreFunction& score, int jobs) {
  if (samples.size() < 2) throw std::invalid_argument("KSD needs at least two samples");
  const ParamLayout layout = layout_of(samples.front());
  const auto mask = log_scale_mask(samples.front());
  const Index n = static_cast<Index>(samples.size()), d = layout.dim();
  Matrix points(n, d), scores(n, d);
  for (Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    if (!(layout_of(s) == layout)) throw std::invalid_argument("samples have different layouts");
    const Vector theta = constrained_coordinates(s);
    Vector g = score(s).values;
    if (g.size() != d) throw std::invalid_argument("score has the wrong dimension");
    for (Index j = 0; j < d; ++j)
      if (mask[static_cast<size_t>(j)]) g(j) = (g(j) - 1.0) / theta(j);
    points.row(i) = theta.transpose();
    scores.row(i) = g.transpose();
  }
  const Vector per_dim = ksd_imq_dimensions(points, scores, jobs);
  KSDReport out;
  for (const auto& b : layout.blocks()) {
    out.block[b.name] = per_dim.segment(b.offset, b.size).sum();
    out.total += out.block[b.name];
  }
  return out;
}

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("assignments have different lengths");
  if (a.empty()) throw std::invalid_argument("assignments are empty");
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  const double w = 1.0 / static_cast<double>(a.size());
  for (size_t t = 0; t < a.size(); ++t) {
    pa[a[t]] += w;
    pb[b[t]] += w;
    pab[{a[t], b[t]}] += w;
  }
  const auto entropy = [](const std::map<int, double>& p) {
    double h = 0.0;
    for (const auto& [k, v] : p) h -= v * std::log(v);
    return h;
  };
  const double ha = entropy(pa), hb = entropy(pb);
  const bool const_a = pa.size() == 1, const_b = pb.size() == 1;
  if (const_a && const_b) return 1.0;
  if (const_a || const_b) return 0.0;
  double mi = 0.0;
  for (const auto& [key, v] : pab) mi += v * std::log(v / (pa[key.first] * pb[key.second]));
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

double latent_rmse(const Matrix& x_est, const Matrix& x_true, bool literal_sum) {
  if (x_est.rows() != x_true.rows() || x_est.cols() != x_true.cols())
    throw std::invalid_argument("latent sequences have different shapes");
  if (x_est.rows() == 0) throw std::invalid_argument("latent sequences are empty");
  const Vector dist2 = (x_est - x_true).rowwise().squaredNorm();
  if (literal_sum) return dist2.cwiseSqrt().sum();
  return std::sqrt(dist2.mean());
}

MonteCarloEstimate slds_em_lower_bound(const SLDSParams& params, const Matrix& obs, int n_mc, int burn_in,
                                       std::uint64_t seed) {
  if (n_mc < 1 || burn_in < 0) throw std::invalid_argument("need n_mc >= 1 and burn_in >= 0");
  validate(ModelParams{params});
  const IndexRange window{0, obs.rows()};
  const InitialDistribution p0 = default_initial_distribution(ModelParams{params});
  Rng rng = make_rng(seed);
  SLDSGibbsState state;
  state.z = slds_init_latent(params, obs, window, p0, LatentInitMode::Filtered, rng);
  for (int b = 0; b < burn_in; ++b) slds_gibbs_sweep(params, obs, window, state, p0, rng);
  Vector values(n_mc);
  for (int r = 0; r < n_mc; ++r) {
    slds_gibbs_sweep(params, obs, window, state, p0, rng);
    values(r) = slds_complete_loglik(params, obs, window, state.x, state.z, p0);
  }
  MonteCarloEstimate out;
  out.n = n_mc;
  out.mean = values.mean();
  out.se = n_mc > 1 ? std::sqrt((values.array() - out.mean).square().sum() / (n_mc - 1) / n_mc) : 0.0;
  return out;
}

LatentSequence infer_latents(const ModelParams& params, const Matrix& obs, std::uint64_t seed, int sweeps) {
  validate(params);
  const Index T = obs.rows();
  const InitialDistribution p0 = default_initial_distribution(params);
  LatentSequence out;
  if (const auto* lg = std::get_if<LGSSMParams>(&params)) {
    auto msgs = kalman_forward(*lg, obs, {0, T}, p0);
    kalman_backward(*lg, obs, msgs);
    out.x = kalman_smoothed_marginals(msgs).mean;
    return out;
  }
  if (const auto* sl = std::get_if<SLDSParams>(&params)) {
    Rng rng = make_rng(seed);
    SLDSGibbsState state;
    state.z = slds_init_latent(*sl, obs, {0, T}, p0, LatentInitMode::Filtered, rng);
    for (int s = 0; s < std::max(1, sweeps); ++s) slds_gibbs_sweep(*sl, obs, {0, T}, state, p0, rng);
    out.z = state.z.z;
    out.x = state.x.x;
    return out;
  }
  const Matrix marg = hmm_smoothed_marginals(hmm_forward_backward(params, obs, {0, T}, p0.discrete));
  out.z.resize(static_cast<size_t>(T));
  for (Index t = 0; t < T; ++t) marg.row(t).maxCoeff(&out.z[static_cast<size_t>(t)]);
  return out;
}

}  // namespace sgmcmc
