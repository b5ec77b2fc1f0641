#include "sgmcmc/buffer_theory.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "detail.hpp"

namespace sgmcmc {

namespace {

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

void check_stochastic(const Matrix& Pi) {
  if (Pi.rows() < 1 || Pi.rows() != Pi.cols()) throw std::invalid_argument("transition matrix must be square");
  if (!Pi.allFinite() || (Pi.array() < 0.0).any()) throw std::invalid_argument("transition matrix has invalid entries");
  for (Index i = 0; i < Pi.rows(); ++i)
    if (std::abs(Pi.row(i).sum() - 1.0) > 1e-8) throw std::invalid_argument("transition rows must sum to one");
}

}  // namespace

DecayConstants dobrushin_bound(const Matrix& Pi) {
  check_stochastic(Pi);
  const Vector kappa = Pi.colwise().mean().transpose();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Index j = 0; j < Pi.cols(); ++j) {
    if (kappa(j) <= 0.0) continue;  // unreachable state
    for (Index i = 0; i < Pi.rows(); ++i) {
      lo = std::min(lo, Pi(i, j) / kappa(j));
      hi = std::max(hi, Pi(i, j) / kappa(j));
    }
  }
  DecayConstants out;
  out.source = DecayConstants::Source::Dobrushin;
  bool identical_rows = true;
  for (Index i = 1; i < Pi.rows(); ++i) identical_rows = identical_rows && Pi.row(i) == Pi.row(0);
  if (identical_rows)
    out.L = 0.0;
  else
    out.L = lo > 0.0 ? std::clamp(1.0 - lo / hi, 0.0, 1.0) : 1.0;
  out.L_f = out.L_b = out.L;
  out.no_contraction = !(out.L < 1.0);
  return out;
}

DecayConstants lgssm_lipschitz(const LGSSMParams& p, const std::optional<Matrix>& p0_cov) {
  validate(ModelParams{p});
  const Index n = p.A.rows();
  const Matrix Q = covariance_from_factor(p.psi_q), Q_inv = precision_from_factor(p.psi_q);
  const Matrix R_inv = precision_from_factor(p.psi_r);
  const Matrix I = Matrix::Identity(n, n);
  const Matrix info = Q * p.C.transpose() * R_inv * p.C;

  DecayConstants out;
  out.source = DecayConstants::Source::LgssmLemma;
  out.L_f = spectral_norm(p.A * (I + info).inverse());

  const Matrix V_inf = steady_state_covariance(p.A, Q);
  const Matrix prior = p0_cov ? *p0_cov : V_inf;
  const bool stable = p.A.eigenvalues().cwiseAbs().maxCoeff() < 1.0;
  const bool commute = stable && (p.A * Q - Q * p.A).norm() < 1e-10;
  const bool below = Eigen::SelfAdjointEigenSolver<Matrix>(detail::symmetrize(V_inf - prior)).eigenvalues().minCoeff() >=
                     -1e-10 * std::max(1.0, V_inf.norm());
  if (p.A.isZero(0.0)) {
    out.L_b = 0.0;
  } else if (commute && below) {
    out.tight_backward = true;
    out.L_b = out.L_f;
  } else {
    const Matrix inner = Q * p.A.transpose() * Q_inv * p.A + info;
    Eigen::FullPivLU<Matrix> lu(inner);
    out.L_b = lu.isInvertible() ? spectral_norm(p.A * lu.inverse()) : std::numeric_limits<double>::infinity();
  }
  out.L = std::max(out.L_f, out.L_b);
  out.no_contraction = !(out.L < 1.0);

  // Spectral norms of Kronecker products multiply.
  const double nA = spectral_norm(p.A), nC = spectral_norm(p.C);
  const double nPsiQ = spectral_norm(p.psi_q), nPsiQA = spectral_norm(p.psi_q * p.A);
  const std::vector<double> omega = {spectral_norm(Q_inv),
                                     spectral_norm(Q_inv * p.A),
                                     nPsiQ,
                                     nPsiQA,
                                     nPsiQ * nA,
                                     nPsiQA * nA,
                                     spectral_norm(R_inv),
                                     spectral_norm(R_inv * p.C),
                                     spectral_norm(p.psi_r * p.C) * nC};
  out.L_U = *std::max_element(omega.begin(), omega.end());
  return out;
}

Index extrapolate_buffer(Index B_hat, double eps_hat, double epsilon, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0, 1)");
  if (!(eps_hat > 0.0 && epsilon > 0.0)) throw std::invalid_argument("error levels must be positive");
  if (B_hat < 0) throw std::invalid_argument("B_hat must be non-negative");
  const double extra = std::log(eps_hat / epsilon) / std::log(1.0 / rho);
  return std::max<Index>(0, static_cast<Index>(std::ceil(static_cast<double>(B_hat) + extra - 1e-9)));
}

namespace {

// Likelihood part of the buffered estimator; SLDS draws use a fixed seed per
// subsequence so that candidates share their Monte Carlo noise.
Vector loglik_part(const ModelParams& params, const Matrix& obs, const BufferedSubsequence& sub,
                   const InitialDistribution& p0, const SLDSGradientOptions& slds, std::uint64_t seed,
                   const Vector& prior_grad) {
  if (const auto* s = std::get_if<SLDSParams>(&params))
    return slds_noisy_gradient(*s, obs, sub, PriorSpec{}, p0, slds, seed).values - prior_grad;
  return subsequence_loglik_gradient(params, obs, sub, p0).values;
}

}  // namespace

AdaptiveBufferResult adaptive_buffer(const ModelParams& params, const Matrix& obs, Index S, double epsilon,
                                     const AdaptiveBufferOptions& options) {
  validate(params);
  const Index T = obs.rows();
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (S < 1 || S > T) throw std::invalid_argument("subsequence length must lie in [1, T]");
  if (options.B_star < 0 || options.n_subsequences < 1) throw std::invalid_argument("invalid adaptive buffer options");

  const InitialDistribution p0 = default_initial_distribution(params);
  const Vector prior_grad = log_prior_grad(params, PriorSpec{}).values;
  Rng rng = make_rng(options.seed);
  std::vector<Index> starts(static_cast<size_t>(options.n_subsequences));
  std::vector<std::uint64_t> seeds(starts.size());
  for (size_t i = 0; i < starts.size(); ++i) {
    starts[i] = sample_subsequence(T, S, 0, options.scheme, rng).core.begin;
    seeds[i] = derive_seed(options.seed, i + 1);
  }
  const auto gradient = [&](size_t i, Index B) {
    return loglik_part(params, obs, make_subsequence(T, starts[i], S, B, options.scheme), p0, options.slds, seeds[i],
                       prior_grad);
  };
  std::vector<Vector> reference(starts.size());
  for (size_t i = 0; i < starts.size(); ++i) reference[i] = gradient(i, options.B_star);

  AdaptiveBufferResult out;
  std::map<Index, double> cache;
  const auto error = [&](Index B) {
    if (auto it = cache.find(B); it != cache.end()) return it->second;
    double total = 0.0;
    for (size_t i = 0; i < starts.size(); ++i) total += (gradient(i, B) - reference[i]).norm();
    const double e = total / static_cast<double>(starts.size());
    cache[B] = e;
    out.evaluated.emplace_back(B, e);
    return e;
  };

  Index lo = -1, hi = -1;  // last failing, first passing
  for (Index B = 0;; B = B == 0 ? 1 : 2 * B) {
    const Index cand = std::min(B, options.B_star);
    if (error(cand) < epsilon) {
      hi = cand;
      break;
    }
    lo = cand;
    if (cand == options.B_star) break;
  }
  if (hi < 0) {
    out.B = options.B_star;
    out.reached = false;
    return out;
  }
  while (hi - lo > 1) {
    const Index mid = lo + (hi - lo) / 2;
    if (error(mid) < epsilon)
      hi = mid;
    else
      lo = mid;
  }
  out.B = hi;
  return out;
}

std::vector<GradErrorRow> empirical_grad_error_curve(const ModelParams& params, const Matrix& obs,
                                                     const std::vector<Index>& S_list, const std::vector<Index>& B_list,
                                                     const GradErrorOptions& options) {
  validate(params);
  if (family_of(params) == Family::SLDS)
    throw std::invalid_argument("gradient error curves need exact smoothing; the SLDS family is not supported");
  if (options.n_trials < 0) throw std::invalid_argument("n_trials must be non-negative");
  const Index T = obs.rows();
  for (Index S : S_list)
    if (S < 1 || S > T) throw std::invalid_argument("subsequence length exceeds the sequence");
  for (Index B : B_list)
    if (B < 0) throw std::invalid_argument("buffer sizes must be non-negative");

  const InitialDistribution p0 = default_initial_distribution(params);
  const PairwiseMarginals full = pairwise_marginals(params, obs, {0, T}, p0);
  std::vector<GradErrorRow> rows;
  for (size_t si = 0; si < S_list.size(); ++si) {
    const Index S = S_list[si];
    std::vector<Index> starts;
    if (options.n_trials == 0) {
      starts = possible_starts(T, S, options.scheme);
    } else {
      Rng rng = make_rng(options.seed, si);
      for (Index i = 0; i < options.n_trials; ++i)
        starts.push_back(sample_subsequence(T, S, 0, options.scheme, rng).core.begin);
    }
    const Index n = static_cast<Index>(starts.size());
    Matrix errs(n, static_cast<Index>(B_list.size()));
    detail::parallel_for(n, options.jobs, [&](Index i) {
      const auto core = make_subsequence(T, starts[static_cast<size_t>(i)], S, 0, options.scheme);
      const Vector exact = unbiased_loglik_gradient(params, obs, full, core).values;
      for (size_t bi = 0; bi < B_list.size(); ++bi) {
        const auto sub = make_subsequence(T, starts[static_cast<size_t>(i)], S, B_list[bi], options.scheme);
        errs(i, static_cast<Index>(bi)) = (subsequence_loglik_gradient(params, obs, sub, p0).values - exact).norm();
      }
    });
    for (size_t bi = 0; bi < B_list.size(); ++bi) {
      const Vector col = errs.col(static_cast<Index>(bi));
      GradErrorRow row;
      row.S = S;
      row.B = B_list[bi];
      row.n_trials = n;
      row.mean_err = col.mean();
      row.sd_err = n > 1 ? std::sqrt((col.array() - row.mean_err).square().sum() / static_cast<double>(n - 1)) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear fit needs two or more points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw std::invalid_argument("linear fit needs distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

namespace {

LinearFit fit_rows(const std::vector<GradErrorRow>& rows, bool log_x, bool by_length) {
  std::vector<double> x, y;
  for (const auto& r : rows) {
    if (!(r.mean_err > 0.0)) continue;
    const double v = static_cast<double>(by_length ? r.S : r.B);
    x.push_back(log_x ? std::log(v) : v);
    y.push_back(std::log(r.mean_err));
  }
  return linear_fit(x, y);
}

}  // namespace

LinearFit fit_log_error_vs_buffer(const std::vector<GradErrorRow>& rows) { return fit_rows(rows, false, false); }
LinearFit fit_log_error_vs_length(const std::vector<GradErrorRow>& rows) { return fit_rows(rows, true, true); }

void write_grad_error_csv(const std::string& path, const std::vector<GradErrorRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "S,B,mean_err,sd_err,n_trials\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g,%lld\n", static_cast<long long>(r.S),
                  static_cast<long long>(r.B), r.mean_err, r.sd_err, static_cast<long long>(r.n_trials));
    out << buf;
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace sgmcmc
