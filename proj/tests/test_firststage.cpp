#include "cate/errors.hpp"
#include "cate/firststage.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace cate;

namespace {

//! n rows, p standard-normal covariates, D from a logistic in x1 - x2.
SampleSet
random_sample(int n, int p, std::uint64_t seed, double noise = 0.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SampleSet s;
  s.X.resize(n, p);
  s.Y.resize(n);
  s.D.resize(static_cast<std::size_t>(n));
  s.x1_idx = { 0 };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j)
      s.X(i, j) = z(rng);
    const double eta = 0.5 * s.X(i, 0) - 0.7 * s.X(i, 1) + 0.2;
    s.D[static_cast<std::size_t>(i)] = u(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
    s.Y(i) = 1.0 + 2.0 * s.X(i, 0) - 0.5 * s.X(i, 1) * s.X(i, 1) + noise * z(rng);
  }
  return s;
}

} // namespace

TEST_SUITE("firststage")
{
  TEST_CASE("basis parsing and evaluation")
  {
    const auto b = BasisSpec::parse({ "1", "x1", "x2^2", "x1*x3" });
    const std::vector<double> x{ 2.0, -3.0, 0.5 };
    const auto row = b.row(x);
    CHECK(row.size() == 4);
    CHECK(row(0) == 1.0);
    CHECK(row(1) == 2.0);
    CHECK(row(2) == 9.0);
    CHECK(row(3) == 1.0);

    const auto named = BasisSpec::parse({ "1", "age^2", "age*wt" }, { "age", "wt" });
    CHECK(named.row(std::vector<double>{ 3.0, 2.0 })(1) == 9.0);
    CHECK(named.row(std::vector<double>{ 3.0, 2.0 })(2) == 6.0);

    CHECK_THROWS_AS(BasisSpec::parse({ "1", "height" }, { "age", "wt" }), std::invalid_argument);
    CHECK_THROWS_AS(BasisSpec::parse({}), std::invalid_argument);
    CHECK_THROWS_AS(b.row(std::vector<double>{ 1.0, 2.0 }), std::invalid_argument);
  }

  TEST_CASE("least squares recovers noiseless coefficients")
  {
    const SampleSet s = random_sample(80, 2, 3);
    const auto basis = BasisSpec::parse({ "1", "x1", "x2^2" });
    for (int arm : { 0, 1 }) {
      const auto fit = fit_outcome_ls(s, arm, basis);
      CHECK(fit.alpha(0) == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(fit.alpha(1) == doctest::Approx(2.0).epsilon(1e-10));
      CHECK(fit.alpha(2) == doctest::Approx(-0.5).epsilon(1e-10));
    }
  }

  TEST_CASE("weighted least squares matches the normal equations")
  {
    const SampleSet s = random_sample(60, 2, 5, 0.3);
    const auto basis = BasisSpec::parse({ "1", "x1", "x2" });
    Eigen::VectorXd w(s.n());
    for (Index i = 0; i < s.n(); ++i)
      w(i) = 0.5 + 0.1 * static_cast<double>(i % 7);
    const auto fit = fit_outcome_ls(s, 1, basis, w);

    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (Index i = 0; i < s.n(); ++i) {
      if (s.D[static_cast<std::size_t>(i)] != 1)
        continue;
      const Eigen::Vector3d z(1.0, s.X(i, 0), s.X(i, 1));
      A += w(i) * z * z.transpose();
      rhs += w(i) * s.Y(i) * z;
    }
    const Eigen::Vector3d ref = A.inverse() * rhs;
    for (int j = 0; j < 3; ++j)
      CHECK(fit.alpha(j) == doctest::Approx(ref(j)).epsilon(1e-9));

    Eigen::VectorXd bad = w;
    bad(0) = 0.0;
    CHECK_THROWS_AS(fit_outcome_ls(s, 1, basis, bad), std::invalid_argument);
  }

  TEST_CASE("collinear basis is rank deficient")
  {
    const SampleSet s = random_sample(50, 2, 7);
    CHECK_THROWS_AS(fit_outcome_ls(s, 1, BasisSpec::parse({ "1", "x1", "x1" })), RankDeficient);
  }

  TEST_CASE("logistic fit solves the score equations")
  {
    const SampleSet s = random_sample(400, 2, 9);
    const auto fit = fit_logistic(s, { 0, 1 });
    Eigen::Vector3d score = Eigen::Vector3d::Zero();
    for (Index i = 0; i < s.n(); ++i) {
      const double p = fit.probability(s.row(i));
      const Eigen::Vector3d z(1.0, s.X(i, 0), s.X(i, 1));
      score += (s.D[static_cast<std::size_t>(i)] - p) * z;
    }
    CHECK(score.lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(fit.coefficients(1) > 0.0);
    CHECK(fit.coefficients(2) < 0.0);
  }

  TEST_CASE("intercept-only logistic fit returns the treated share")
  {
    const SampleSet s = random_sample(300, 2, 13);
    const auto fit = fit_logistic(s, {});
    double share = 0.0;
    for (int d : s.D)
      share += d;
    share /= static_cast<double>(s.n());
    CHECK(fit.probability(s.row(0)) == doctest::Approx(share).epsilon(1e-9));
  }

  TEST_CASE("separated classes are reported")
  {
    SampleSet s = random_sample(60, 2, 17);
    for (Index i = 0; i < s.n(); ++i)
      s.D[static_cast<std::size_t>(i)] = s.X(i, 0) > 0.0 ? 1 : 0;
    CHECK_THROWS_AS(fit_logistic(s, { 0 }), Separation);
  }

  TEST_CASE("propensity clipping")
  {
    const auto pm = PropensityModel::from_function([](std::span<const double> x) { return x[0]; }, 0.05);
    CHECK(pm(std::vector<double>{ 0.001 }) == 0.05);
    CHECK(pm(std::vector<double>{ 0.999 }) == 0.95);
    CHECK(pm(std::vector<double>{ 0.3 }) == 0.3);
    CHECK(pm.raw(std::vector<double>{ 0.001 }) == 0.001);
    CHECK_THROWS_AS(PropensityModel::from_function([](std::span<const double>) { return 0.5; }, 0.5),
                    std::invalid_argument);
  }

  TEST_CASE("single-index propensity direction follows the logistic slope")
  {
    const SampleSet s = random_sample(500, 2, 19);
    const auto pm = fit_propensity_single_index(s, 0.4, make_kernel(KernelFamily::gaussian, 2, 1));
    const auto& lf = pm.logistic()->coefficients;
    Eigen::Vector2d slope(lf(1), lf(2));
    slope /= slope.norm();
    if (slope(0) < 0)
      slope = -slope;
    CHECK(pm.direction()(0) == doctest::Approx(slope(0)).epsilon(1e-12));
    CHECK(pm.direction()(1) == doctest::Approx(slope(1)).epsilon(1e-12));
    CHECK(pm.kind() == PropensityModel::Kind::single_index);
  }

  TEST_CASE("direction normalisation")
  {
    Eigen::VectorXd v(3);
    v << 0.0, -3.0, 4.0;
    const auto u = normalize_direction(v);
    CHECK(u.norm() == doctest::Approx(1.0));
    CHECK(u(1) == doctest::Approx(0.6));
    CHECK(u(2) == doctest::Approx(-0.8));
    CHECK_THROWS_AS(normalize_direction(Eigen::VectorXd::Zero(3)), RankDeficient);
  }

  TEST_CASE("least-squares index direction on a linear index")
  {
    SampleSet s = random_sample(100, 3, 23);
    for (Index i = 0; i < s.n(); ++i)
      s.Y(i) = 2.0 * (s.X(i, 1) + s.X(i, 2)) - 1.0;
    const auto b = estimate_directions(s, 1, DirectionMethod::index_ls(1));
    CHECK(b.cols() == 1);
    CHECK(std::abs(b(0, 0)) < 1e-10);
    CHECK(b(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
    CHECK(b(2, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));

    CHECK(estimate_directions(s, 0, DirectionMethod::index_ls(0)).cols() == 0);
    CHECK_THROWS_AS(estimate_directions(s, 1, DirectionMethod::index_ls(2)), UnsupportedRank);
    CHECK_THROWS_AS(estimate_directions(s, 1, DirectionMethod::known(Eigen::MatrixXd::Identity(2, 2))),
                    std::invalid_argument);
    Eigen::MatrixXd dup(3, 2);
    dup << 1, 2, 1, 2, 0, 0;
    CHECK_THROWS_AS(estimate_directions(s, 1, DirectionMethod::known(dup)), RankDeficient);
  }
}
