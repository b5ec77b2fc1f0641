#include "sgmcmc/init.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "detail.hpp"

namespace sgmcmc {

namespace {

Index count_distinct_rows(const Matrix& points) {
  std::vector<Index> order(static_cast<size_t>(points.rows()));
  std::iota(order.begin(), order.end(), 0);
  const auto less = [&](Index a, Index b) {
    for (Index j = 0; j < points.cols(); ++j)
      if (points(a, j) != points(b, j)) return points(a, j) < points(b, j);
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  Index distinct = order.empty() ? 0 : 1;
  for (size_t i = 1; i < order.size(); ++i)
    if (less(order[i - 1], order[i])) ++distinct;
  return distinct;
}

Vector squared_distances(const Matrix& points, const Eigen::RowVectorXd& center) {
  return (points.rowwise() - center).rowwise().squaredNorm();
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int K, std::uint64_t seed, int max_iter) {
  const Index N = points.rows();
  if (K < 1) throw std::invalid_argument("number of clusters must be positive");
  if (count_distinct_rows(points) < K)
    throw std::invalid_argument("number of clusters exceeds the number of distinct observations");
  Rng rng = make_rng(seed);

  KMeansResult out;
  out.centroids.resize(K, points.cols());
  std::uniform_int_distribution<Index> first(0, N - 1);
  out.centroids.row(0) = points.row(first(rng));
  Vector nearest = squared_distances(points, out.centroids.row(0));
  for (int k = 1; k < K; ++k) {
    const Index pick = sample_categorical(rng, nearest);
    out.centroids.row(k) = points.row(pick);
    nearest = nearest.cwiseMin(squared_distances(points, out.centroids.row(k)));
  }

  out.labels.assign(static_cast<size_t>(N), -1);
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    bool changed = false;
    Vector best_dist(N);
    for (Index i = 0; i < N; ++i) {
      Index best = 0;
      const double d = (out.centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      best_dist(i) = d;
      if (out.labels[static_cast<size_t>(i)] != static_cast<int>(best)) {
        out.labels[static_cast<size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    Matrix sums = Matrix::Zero(K, points.cols());
    std::vector<Index> counts(static_cast<size_t>(K), 0);
    for (Index i = 0; i < N; ++i) {
      sums.row(out.labels[static_cast<size_t>(i)]) += points.row(i);
      ++counts[static_cast<size_t>(out.labels[static_cast<size_t>(i)])];
    }
    for (int k = 0; k < K; ++k) {
      if (counts[static_cast<size_t>(k)] > 0) {
        out.centroids.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<size_t>(k)]);
        continue;
      }
      Index far = 0;
      best_dist.maxCoeff(&far);
      out.centroids.row(k) = points.row(far);
      best_dist(far) = 0.0;
      changed = true;
    }
    if (!changed) break;
  }
  return out;
}

Matrix sample_wishart_factor(Rng& rng, Index dim, double nu, double scale) {
  if (nu < static_cast<double>(dim)) throw std::invalid_argument("wishart degrees of freedom too small");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix bartlett = Matrix::Zero(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    std::chi_squared_distribution<double> chi2(nu - static_cast<double>(i));
    bartlett(i, i) = std::sqrt(chi2(rng));
    for (Index j = 0; j < i; ++j) bartlett(i, j) = normal(rng);
  }
  return bartlett / std::sqrt(scale);
}

namespace {

Matrix transitions_from_labels(const std::vector<int>& labels, int K) {
  Matrix counts = Matrix::Ones(K, K);
  for (size_t t = 1; t < labels.size(); ++t) counts(labels[t - 1], labels[t]) += 1.0;
  return transition_matrix(counts);
}

Matrix covariance_of(const Matrix& rows, double jitter) {
  const Index d = rows.cols();
  const Matrix centered = rows.rowwise() - rows.colwise().mean();
  const double denom = std::max<double>(1.0, static_cast<double>(rows.rows() - 1));
  Matrix cov = centered.transpose() * centered / denom;
  const double scale = std::max(cov.trace() / static_cast<double>(d), 1e-8);
  return detail::symmetrize(cov) + jitter * scale * Matrix::Identity(d, d);
}

struct Regression {
  Matrix coef;
  Matrix noise_cov;
};

// Least squares of target on regressor rows, restricted to rows with the label.
Regression regress(const Matrix& target, const Matrix& regressor, const std::vector<int>& labels, int k,
                   double ridge) {
  const Index d_out = target.cols(), d_in = regressor.cols();
  Matrix xx = ridge * Matrix::Identity(d_in, d_in), yx = Matrix::Zero(d_out, d_in);
  Index n = 0;
  for (Index t = 0; t < target.rows(); ++t) {
    if (labels[static_cast<size_t>(t)] != k) continue;
    xx += regressor.row(t).transpose() * regressor.row(t);
    yx += target.row(t).transpose() * regressor.row(t);
    ++n;
  }
  Regression out;
  out.coef = xx.ldlt().solve(yx.transpose()).transpose();
  Matrix resid_outer = Matrix::Zero(d_out, d_out);
  for (Index t = 0; t < target.rows(); ++t) {
    if (labels[static_cast<size_t>(t)] != k) continue;
    const Vector r = target.row(t).transpose() - out.coef * regressor.row(t).transpose();
    resid_outer += r * r.transpose();
  }
  if (n <= d_in) {
    out.noise_cov = covariance_of(target, 1e-3);
  } else {
    out.noise_cov = resid_outer / static_cast<double>(n);
    const double scale = std::max(out.noise_cov.trace() / static_cast<double>(d_out), 1e-8);
    out.noise_cov = detail::symmetrize(out.noise_cov) + 1e-3 * scale * Matrix::Identity(d_out, d_out);
  }
  return out;
}

// Rows [x_t, x_{t-1}, ..., x_{t-lag}] for t >= lag, with the labels of the
// first lag steps copied from step lag.
struct LaggedDesign {
  Matrix target;
  Matrix regressor;
};

LaggedDesign lagged_design(const Matrix& x, int lag) {
  const Index T = x.rows(), d = x.cols();
  LaggedDesign out;
  out.target.resize(T - lag, d);
  out.regressor.resize(T - lag, d * lag);
  for (Index t = lag; t < T; ++t) {
    out.target.row(t - lag) = x.row(t);
    out.regressor.row(t - lag) = lagged_context(x, t, lag).transpose();
  }
  return out;
}

std::vector<int> extend_labels(const std::vector<int>& labels, int lag) {
  std::vector<int> full(static_cast<size_t>(lag), labels.front());
  full.insert(full.end(), labels.begin(), labels.end());
  return full;
}

}  // namespace

ModelParams init_params(Family family, const Matrix& obs, int K, std::uint64_t seed, const InitOptions& options) {
  const Index T = obs.rows(), m = obs.cols();
  if (T < 2 || m < 1) throw std::invalid_argument("need at least two observations for initialization");
  if (!obs.allFinite()) throw std::invalid_argument("observations contain non-finite values");
  Rng rng = make_rng(seed, 1);
  const auto wishart = [&](Index dim) {
    const double nu = options.wishart_nu > 0.0 ? options.wishart_nu : static_cast<double>(dim) + 2.0;
    const double scale = options.wishart_scale > 0.0 ? options.wishart_scale : nu;
    return sample_wishart_factor(rng, dim, nu, scale);
  };

  switch (family) {
    case Family::GaussianHMM: {
      const auto km = kmeans(obs, K, seed);
      GaussianHMMParams p;
      p.phi = transitions_from_labels(km.labels, K);
      const Matrix overall = covariance_of(obs, 1e-3);
      for (int k = 0; k < K; ++k) {
        std::vector<Index> rows;
        for (Index t = 0; t < T; ++t)
          if (km.labels[static_cast<size_t>(t)] == k) rows.push_back(t);
        p.mu.push_back(km.centroids.row(k).transpose());
        const Matrix cov = static_cast<Index>(rows.size()) > m ? covariance_of(obs(rows, Eigen::all), 1e-3) : overall;
        p.psi_sigma.push_back(factor_from_covariance(cov));
      }
      return p;
    }
    case Family::ARHMM: {
      const int lag = options.lag;
      if (lag < 1 || T <= lag + 1) throw std::invalid_argument("sequence too short for the requested lag");
      const auto design = lagged_design(obs, lag);
      Matrix features(design.target.rows(), m * (lag + 1));
      features << design.target, design.regressor;
      const auto km = kmeans(features, K, seed);
      ARHMMParams p;
      p.lag = lag;
      p.phi = transitions_from_labels(extend_labels(km.labels, lag), K);
      for (int k = 0; k < K; ++k) {
        const auto fit = regress(design.target, design.regressor, km.labels, k, options.ridge);
        p.A.push_back(fit.coef);
        p.psi_q.push_back(factor_from_covariance(fit.noise_cov));
      }
      return p;
    }
    case Family::LGSSM: {
      const Index n = options.latent_dim > 0 ? options.latent_dim : m;
      LGSSMParams p;
      p.psi_q = wishart(n);
      const Matrix Q = covariance_from_factor(p.psi_q);
      const Matrix Lq = Eigen::LLT<Matrix>(Q).matrixL();
      p.A = std::sqrt(options.a_col_var) * Lq * standard_normal(rng, n * n).reshaped(n, n);
      p.C = identity_emission(m, n);
      std::normal_distribution<double> normal(0.0, std::sqrt(options.c_var));
      for (Index c = 0; c < n; ++c)
        for (Index r = 0; r < m; ++r)
          if (is_free_emission_entry(r, c, m, n)) p.C(r, c) = normal(rng);
      p.psi_r = wishart(m);
      return p;
    }
    case Family::SLDS: {
      const Index n = options.latent_dim > 0 ? options.latent_dim : m;
      Matrix proxy = Matrix::Zero(T, n);
      const Index shared = std::min(n, m);
      proxy.leftCols(shared) = obs.leftCols(shared);
      const auto design = lagged_design(proxy, 1);
      Matrix features(design.target.rows(), 2 * n);
      features << design.target, design.regressor;
      const auto km = kmeans(features, K, seed);
      SLDSParams p;
      p.phi = transitions_from_labels(extend_labels(km.labels, 1), K);
      for (int k = 0; k < K; ++k) {
        const auto fit = regress(design.target, design.regressor, km.labels, k, std::max(options.ridge, 1e-3));
        p.A.push_back(fit.coef);
        p.psi_q.push_back(factor_from_covariance(fit.noise_cov));
      }
      p.C = identity_emission(m, n);
      p.psi_r = wishart(m);
      return p;
    }
  }
  throw std::invalid_argument("unknown family");
}

}  // namespace sgmcmc
