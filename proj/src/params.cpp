#include "sgmcmc/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "detail.hpp"

namespace sgmcmc {

using detail::overloaded;

std::string_view to_string(Family family) {
  switch (family) {
    case Family::GaussianHMM: return "gaussian_hmm";
    case Family::ARHMM: return "arhmm";
    case Family::LGSSM: return "lgssm";
    case Family::SLDS: return "slds";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  if (name == "gaussian_hmm" || name == "hmm") return Family::GaussianHMM;
  if (name == "arhmm") return Family::ARHMM;
  if (name == "lgssm") return Family::LGSSM;
  if (name == "slds") return Family::SLDS;
  throw std::invalid_argument("unknown model family '" + std::string(name) + "'");
}

Family family_of(const ModelParams& params) {
  return std::visit(overloaded{[](const GaussianHMMParams&) { return Family::GaussianHMM; },
                               [](const ARHMMParams&) { return Family::ARHMM; },
                               [](const LGSSMParams&) { return Family::LGSSM; },
                               [](const SLDSParams&) { return Family::SLDS; }},
                    params);
}

Index num_states(const ModelParams& params) {
  return std::visit(overloaded{[](const LGSSMParams&) -> Index { return 1; },
                               [](const auto& p) -> Index { return p.phi.rows(); }},
                    params);
}

Index obs_dim(const ModelParams& params) {
  return std::visit(
      overloaded{[](const GaussianHMMParams& p) -> Index { return p.mu.empty() ? 0 : p.mu[0].size(); },
                 [](const ARHMMParams& p) -> Index { return p.A.empty() ? 0 : p.A[0].rows(); },
                 [](const LGSSMParams& p) -> Index { return p.C.rows(); },
                 [](const SLDSParams& p) -> Index { return p.C.rows(); }},
      params);
}

Index latent_dim(const ModelParams& params) {
  return std::visit(overloaded{[](const LGSSMParams& p) -> Index { return p.A.rows(); },
                               [](const SLDSParams& p) -> Index { return p.C.cols(); },
                               [](const auto&) -> Index { return 0; }},
                    params);
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_phi(const Matrix& phi) {
  require(phi.rows() >= 1 && phi.rows() == phi.cols(), "phi must be a non-empty square matrix");
  require(phi.allFinite(), "phi has non-finite entries");
  require((phi.array() > 0.0).all(), "phi entries must be strictly positive");
}

void check_factor(const Matrix& psi, Index dim, const std::string& name) {
  require(psi.rows() == dim && psi.cols() == dim,
          name + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
  require(psi.allFinite(), name + " has non-finite entries");
  for (Index c = 0; c < dim; ++c) {
    require(psi(c, c) > 0.0, name + " diagonal entries must be positive");
    for (Index r = 0; r < c; ++r)
      require(psi(r, c) == 0.0, name + " must be lower triangular");
  }
}

void check_emission(const Matrix& C, Index m, Index n) {
  require(C.rows() == m && C.cols() == n, "C has the wrong shape");
  require(C.allFinite(), "C has non-finite entries");
  const Index k = std::min(m, n);
  require(C.topLeftCorner(k, k) == Matrix::Identity(k, k),
          "leading block of C must be the identity");
}

template <class P>
void check_states(const P& p, Index K) {
  require(static_cast<Index>(p.A.size()) == K && static_cast<Index>(p.psi_q.size()) == K,
          "per-state parameter lists must have one entry per state");
}

}  // namespace

void validate(const ModelParams& params) {
  std::visit(
      overloaded{
          [](const GaussianHMMParams& p) {
            check_phi(p.phi);
            const Index K = p.phi.rows();
            require(static_cast<Index>(p.mu.size()) == K && static_cast<Index>(p.psi_sigma.size()) == K,
                    "per-state parameter lists must have one entry per state");
            const Index m = p.mu[0].size();
            require(m >= 1, "observation dimension must be positive");
            for (Index k = 0; k < K; ++k) {
              require(p.mu[k].size() == m && p.mu[k].allFinite(), "mu has the wrong shape or non-finite entries");
              check_factor(p.psi_sigma[k], m, "psi_sigma");
            }
          },
          [](const ARHMMParams& p) {
            check_phi(p.phi);
            require(p.lag >= 1, "lag must be at least 1");
            const Index K = p.phi.rows();
            check_states(p, K);
            const Index m = p.A[0].rows();
            require(m >= 1, "observation dimension must be positive");
            for (Index k = 0; k < K; ++k) {
              require(p.A[k].rows() == m && p.A[k].cols() == m * p.lag, "A has the wrong shape");
              require(p.A[k].allFinite(), "A has non-finite entries");
              check_factor(p.psi_q[k], m, "psi_q");
            }
          },
          [](const LGSSMParams& p) {
            const Index n = p.A.rows();
            require(n >= 1 && p.A.cols() == n, "A must be a non-empty square matrix");
            require(p.A.allFinite(), "A has non-finite entries");
            check_factor(p.psi_q, n, "psi_q");
            const Index m = p.C.rows();
            require(m >= 1, "observation dimension must be positive");
            check_emission(p.C, m, n);
            check_factor(p.psi_r, m, "psi_r");
          },
          [](const SLDSParams& p) {
            check_phi(p.phi);
            const Index K = p.phi.rows();
            check_states(p, K);
            const Index n = p.C.cols();
            const Index m = p.C.rows();
            require(n >= 1 && m >= 1, "latent and observation dimensions must be positive");
            for (Index k = 0; k < K; ++k) {
              require(p.A[k].rows() == n && p.A[k].cols() == n, "A has the wrong shape");
              require(p.A[k].allFinite(), "A has non-finite entries");
              check_factor(p.psi_q[k], n, "psi_q");
            }
            check_emission(p.C, m, n);
            check_factor(p.psi_r, m, "psi_r");
          }},
      params);
}

Matrix transition_matrix(const Matrix& phi) {
  Matrix pi = phi;
  for (Index k = 0; k < phi.rows(); ++k) pi.row(k) /= phi.row(k).sum();
  return pi;
}

Matrix precision_from_factor(const Matrix& psi) {
  return detail::symmetrize(psi * psi.transpose());
}

Matrix covariance_from_factor(const Matrix& psi) {
  const Matrix inv = psi.triangularView<Eigen::Lower>().solve(Matrix::Identity(psi.rows(), psi.cols()));
  return detail::symmetrize(inv.transpose() * inv);
}

Matrix factor_from_precision(const Matrix& precision) {
  auto llt = detail::checked_llt(detail::symmetrize(precision), "precision factor");
  Matrix L = llt.matrixL();
  return L;
}

Matrix factor_from_covariance(const Matrix& cov) {
  return factor_from_precision(detail::spd_inverse(cov, "covariance inverse"));
}

bool is_free_emission_entry(Index row, Index col, Index m, Index n) {
  const Index k = std::min(m, n);
  return !(row < k && col < k);
}

Index free_emission_count(Index m, Index n) {
  const Index k = std::min(m, n);
  return m * n - k * k;
}

Matrix identity_emission(Index m, Index n) {
  Matrix C = Matrix::Zero(m, n);
  const Index k = std::min(m, n);
  C.topLeftCorner(k, k).setIdentity();
  return C;
}

void ParamLayout::add(std::string name, Index size) {
  blocks_.push_back({std::move(name), dim_, size});
  dim_ += size;
}

const ParamBlock& ParamLayout::block(std::string_view name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw std::invalid_argument("no parameter block named '" + std::string(name) + "'");
}

bool ParamLayout::has(std::string_view name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const auto& b) { return b.name == name; });
}

namespace {

Index tri_size(Index d) { return d * (d + 1) / 2; }

class Writer {
 public:
  explicit Writer(Vector& out) : out_(out) {}
  void phi(const Matrix& phi) {
    for (Index r = 0; r < phi.rows(); ++r)
      for (Index c = 0; c < phi.cols(); ++c) out_(pos_++) = std::log(phi(r, c));
  }
  void raw(const Matrix& m) {
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) out_(pos_++) = m(r, c);
  }
  void factor(const Matrix& psi) {
    for (Index c = 0; c < psi.cols(); ++c)
      for (Index r = c; r < psi.rows(); ++r) out_(pos_++) = r == c ? std::log(psi(r, c)) : psi(r, c);
  }
  void emission(const Matrix& C) {
    for (Index c = 0; c < C.cols(); ++c)
      for (Index r = 0; r < C.rows(); ++r)
        if (is_free_emission_entry(r, c, C.rows(), C.cols())) out_(pos_++) = C(r, c);
  }

 private:
  Vector& out_;
  Index pos_ = 0;
};

class Reader {
 public:
  explicit Reader(const Vector& in) : in_(in) {}
  void phi(Matrix& phi) {
    for (Index r = 0; r < phi.rows(); ++r)
      for (Index c = 0; c < phi.cols(); ++c) phi(r, c) = std::exp(in_(pos_++));
  }
  void raw(Matrix& m) {
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) m(r, c) = in_(pos_++);
  }
  void raw(Vector& v) {
    for (Index r = 0; r < v.size(); ++r) v(r) = in_(pos_++);
  }
  void factor(Matrix& psi) {
    psi.setZero();
    for (Index c = 0; c < psi.cols(); ++c)
      for (Index r = c; r < psi.rows(); ++r) psi(r, c) = r == c ? std::exp(in_(pos_++)) : in_(pos_++);
  }
  void emission(Matrix& C) {
    C = identity_emission(C.rows(), C.cols());
    for (Index c = 0; c < C.cols(); ++c)
      for (Index r = 0; r < C.rows(); ++r)
        if (is_free_emission_entry(r, c, C.rows(), C.cols())) C(r, c) = in_(pos_++);
  }

 private:
  const Vector& in_;
  Index pos_ = 0;
};

// Gradient packer: phi slots already hold d/dlog(phi); psi diagonal slots
// are multiplied by the factor diagonal.
class GradWriter {
 public:
  explicit GradWriter(Vector& out) : out_(out) {}
  void phi(const Matrix& g) {
    for (Index r = 0; r < g.rows(); ++r)
      for (Index c = 0; c < g.cols(); ++c) out_(pos_++) = g(r, c);
  }
  void raw(const Matrix& g) {
    for (Index c = 0; c < g.cols(); ++c)
      for (Index r = 0; r < g.rows(); ++r) out_(pos_++) = g(r, c);
  }
  void factor(const Matrix& psi, const Matrix& g) {
    for (Index c = 0; c < g.cols(); ++c)
      for (Index r = c; r < g.rows(); ++r) out_(pos_++) = r == c ? psi(r, c) * g(r, c) : g(r, c);
  }
  void emission(const Matrix& g) {
    for (Index c = 0; c < g.cols(); ++c)
      for (Index r = 0; r < g.rows(); ++r)
        if (is_free_emission_entry(r, c, g.rows(), g.cols())) out_(pos_++) = g(r, c);
  }

 private:
  Vector& out_;
  Index pos_ = 0;
};

}  // namespace

ParamLayout layout_of(const ModelParams& params) {
  ParamLayout layout;
  std::visit(overloaded{
                 [&](const GaussianHMMParams& p) {
                   const Index K = p.phi.rows(), m = p.mu.empty() ? 0 : p.mu[0].size();
                   layout.add("phi", K * K);
                   layout.add("mu", K * m);
                   layout.add("psi_sigma", K * tri_size(m));
                 },
                 [&](const ARHMMParams& p) {
                   const Index K = p.phi.rows(), m = p.A.empty() ? 0 : p.A[0].rows();
                   layout.add("phi", K * K);
                   layout.add("A", K * m * m * p.lag);
                   layout.add("psi_q", K * tri_size(m));
                 },
                 [&](const LGSSMParams& p) {
                   const Index n = p.A.rows(), m = p.C.rows();
                   layout.add("A", n * n);
                   layout.add("psi_q", tri_size(n));
                   layout.add("C", free_emission_count(m, n));
                   layout.add("psi_r", tri_size(m));
                 },
                 [&](const SLDSParams& p) {
                   const Index K = p.phi.rows(), n = p.C.cols(), m = p.C.rows();
                   layout.add("phi", K * K);
                   layout.add("A", K * n * n);
                   layout.add("psi_q", K * tri_size(n));
                   layout.add("C", free_emission_count(m, n));
                   layout.add("psi_r", tri_size(m));
                 }},
             params);
  return layout;
}

Vector unconstrain(const ModelParams& params) {
  validate(params);
  Vector u(layout_of(params).dim());
  Writer w(u);
  std::visit(overloaded{
                 [&](const GaussianHMMParams& p) {
                   w.phi(p.phi);
                   for (const auto& mu : p.mu) w.raw(mu);
                   for (const auto& psi : p.psi_sigma) w.factor(psi);
                 },
                 [&](const ARHMMParams& p) {
                   w.phi(p.phi);
                   for (const auto& A : p.A) w.raw(A);
                   for (const auto& psi : p.psi_q) w.factor(psi);
                 },
                 [&](const LGSSMParams& p) {
                   w.raw(p.A);
                   w.factor(p.psi_q);
                   w.emission(p.C);
                   w.factor(p.psi_r);
                 },
                 [&](const SLDSParams& p) {
                   w.phi(p.phi);
                   for (const auto& A : p.A) w.raw(A);
                   for (const auto& psi : p.psi_q) w.factor(psi);
                   w.emission(p.C);
                   w.factor(p.psi_r);
                 }},
             params);
  return u;
}

ModelParams constrain(const ModelParams& shape, const Vector& u) {
  const ParamLayout layout = layout_of(shape);
  if (u.size() != layout.dim())
    throw std::invalid_argument("unconstrained vector has length " + std::to_string(u.size()) +
                                ", expected " + std::to_string(layout.dim()));
  ModelParams out = shape;
  Reader r(u);
  std::visit(overloaded{
                 [&](GaussianHMMParams& p) {
                   r.phi(p.phi);
                   for (auto& mu : p.mu) r.raw(mu);
                   for (auto& psi : p.psi_sigma) r.factor(psi);
                 },
                 [&](ARHMMParams& p) {
                   r.phi(p.phi);
                   for (auto& A : p.A) r.raw(A);
                   for (auto& psi : p.psi_q) r.factor(psi);
                 },
                 [&](LGSSMParams& p) {
                   r.raw(p.A);
                   r.factor(p.psi_q);
                   r.emission(p.C);
                   r.factor(p.psi_r);
                 },
                 [&](SLDSParams& p) {
                   r.phi(p.phi);
                   for (auto& A : p.A) r.raw(A);
                   for (auto& psi : p.psi_q) r.factor(psi);
                   r.emission(p.C);
                   r.factor(p.psi_r);
                 }},
             out);
  return out;
}

Vector pack_gradient(const ModelParams& at, const ModelParams& grad) {
  Vector g(layout_of(at).dim());
  GradWriter w(g);
  std::visit(overloaded{
                 [&](const GaussianHMMParams& p) {
                   const auto& d = std::get<GaussianHMMParams>(grad);
                   w.phi(d.phi);
                   for (const auto& mu : d.mu) w.raw(mu);
                   for (size_t k = 0; k < p.psi_sigma.size(); ++k) w.factor(p.psi_sigma[k], d.psi_sigma[k]);
                 },
                 [&](const ARHMMParams& p) {
                   const auto& d = std::get<ARHMMParams>(grad);
                   w.phi(d.phi);
                   for (const auto& A : d.A) w.raw(A);
                   for (size_t k = 0; k < p.psi_q.size(); ++k) w.factor(p.psi_q[k], d.psi_q[k]);
                 },
                 [&](const LGSSMParams& p) {
                   const auto& d = std::get<LGSSMParams>(grad);
                   w.raw(d.A);
                   w.factor(p.psi_q, d.psi_q);
                   w.emission(d.C);
                   w.factor(p.psi_r, d.psi_r);
                 },
                 [&](const SLDSParams& p) {
                   const auto& d = std::get<SLDSParams>(grad);
                   w.phi(d.phi);
                   for (const auto& A : d.A) w.raw(A);
                   for (size_t k = 0; k < p.psi_q.size(); ++k) w.factor(p.psi_q[k], d.psi_q[k]);
                   w.emission(d.C);
                   w.factor(p.psi_r, d.psi_r);
                 }},
             at);
  return g;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams out = params;
  auto zero_all = [](auto& list) {
    for (auto& x : list) x.setZero();
  };
  std::visit(overloaded{
                 [&](GaussianHMMParams& p) {
                   p.phi.setZero();
                   zero_all(p.mu);
                   zero_all(p.psi_sigma);
                 },
                 [&](ARHMMParams& p) {
                   p.phi.setZero();
                   zero_all(p.A);
                   zero_all(p.psi_q);
                 },
                 [&](LGSSMParams& p) {
                   p.A.setZero();
                   p.psi_q.setZero();
                   p.C.setZero();
                   p.psi_r.setZero();
                 },
                 [&](SLDSParams& p) {
                   p.phi.setZero();
                   zero_all(p.A);
                   zero_all(p.psi_q);
                   p.C.setZero();
                   p.psi_r.setZero();
                 }},
             out);
  return out;
}

Vector lagged_context(const Matrix& obs, Index t, int lag) {
  const Index m = obs.cols();
  Vector ctx = Vector::Zero(m * lag);
  for (int l = 1; l <= lag; ++l)
    if (t - l >= 0) ctx.segment((l - 1) * m, m) = obs.row(t - l).transpose();
  return ctx;
}

double gaussian_logpdf_factor(const Vector& residual, const Matrix& psi) {
  const Vector white = psi.transpose() * residual;
  return -0.5 * static_cast<double>(residual.size()) * detail::kLog2Pi +
         psi.diagonal().array().log().sum() - 0.5 * white.squaredNorm();
}

}  // namespace sgmcmc
