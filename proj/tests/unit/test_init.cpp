#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "sgmcmc/init.hpp"
#include "sgmcmc/simulate.hpp"

using namespace sgmcmc;

TEST_CASE("k-means separates well separated clusters") {
  Rng rng = make_rng(1);
  Matrix pts(300, 2);
  for (Index i = 0; i < 300; ++i) {
    const double cx = (i % 3) * 10.0;
    pts.row(i) = Eigen::RowVector2d(cx, -cx) + 0.3 * standard_normal(rng, 2).transpose();
  }
  const auto km = kmeans(pts, 3, 9);
  for (Index i = 3; i < 300; ++i) CHECK(km.labels[static_cast<size_t>(i)] == km.labels[static_cast<size_t>(i % 3)]);
  std::set<int> distinct(km.labels.begin(), km.labels.end());
  CHECK(distinct.size() == 3);
  const auto again = kmeans(pts, 3, 9);
  CHECK(again.labels == km.labels);

  Matrix dup = Matrix::Zero(10, 2);
  dup.row(0) << 1.0, 1.0;
  CHECK_THROWS_AS(kmeans(dup, 3, 1), std::invalid_argument);
  CHECK_NOTHROW(kmeans(dup, 2, 1));
}

TEST_CASE("initial parameters are valid for every family") {
  for (auto model : {SyntheticModel::ARHMM, SyntheticModel::LGSSM, SyntheticModel::SLDS, SyntheticModel::RCHMM}) {
    const ModelParams star = make_synthetic_star(model);
    const Matrix obs = simulate(star, 500, 3).obs;
    Family f = family_of(star);
    InitOptions opt;
    if (auto* ar = std::get_if<ARHMMParams>(&star)) opt.lag = ar->lag;
    opt.latent_dim = latent_dim(star);
    const auto p = init_params(f, obs, static_cast<int>(std::max<Index>(1, num_states(star))), 4, opt);
    CHECK_NOTHROW(validate(p));
    CHECK(family_of(p) == f);
    CHECK(layout_of(p) == layout_of(star));
    CHECK(unconstrain(init_params(f, obs, static_cast<int>(std::max<Index>(1, num_states(star))), 4, opt)) ==
          unconstrain(p));
  }
  CHECK_NOTHROW(validate(init_params(Family::GaussianHMM, simulate(make_synthetic_star(SyntheticModel::RCHMM), 200, 1).obs,
                                     2, 1)));
  CHECK_THROWS_AS(init_params(Family::ARHMM, Matrix::Zero(1, 2), 2, 1), std::invalid_argument);
}

TEST_CASE("wishart factor draws have the right mean") {
  Rng rng = make_rng(5);
  const int draws = 20000;
  Matrix mean = Matrix::Zero(2, 2);
  for (int i = 0; i < draws; ++i) mean += precision_from_factor(sample_wishart_factor(rng, 2, 4.0, 4.0));
  mean /= draws;
  // E[W] = nu * scale^{-1} I = I.
  CHECK((mean - Matrix::Identity(2, 2)).norm() < 0.03);
}
