#include "cate/errors.hpp"
#include "cate/estimators.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace cate;

namespace {

// Six units, two covariates, X1 = first column.
const oracle::Rows kX{ { -0.30, 0.8 }, { -0.10, 1.4 }, { 0.05, 0.6 }, { 0.20, 1.1 }, { 0.35, 1.7 }, { -0.20, 1.2 } };
const std::vector<double> kY{ 0.9, 2.1, 0.4, 1.8, 2.6, 0.0 };
const std::vector<int> kD{ 1, 1, 0, 1, 1, 0 };

SampleSet
toy()
{
  SampleSet s;
  s.X.resize(6, 2);
  s.Y.resize(6);
  for (std::size_t i = 0; i < 6; ++i) {
    s.X(static_cast<Index>(i), 0) = kX[i][0];
    s.X(static_cast<Index>(i), 1) = kX[i][1];
    s.Y(static_cast<Index>(i)) = kY[i];
  }
  s.D = kD;
  s.x1_idx = { 0 };
  s.validate();
  return s;
}

BandwidthPlan
plan_with(double h1, double h2, double h4, KernelOrders orders, KernelFamily fam = KernelFamily::gaussian)
{
  BandwidthPlan p;
  p.h1 = h1;
  p.h2 = h2;
  p.h4 = h4;
  p.orders = orders;
  p.family = fam;
  return p;
}

RowMatrix
column(std::initializer_list<double> v)
{
  RowMatrix g(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v)
    g(i++, 0) = x;
  return g;
}

bool
close(double a, double b, double tol = 1e-12)
{
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

//! Model-like sample: X1 uniform, X2 = (1 + 2 X1)^2 + U, Y(1) = X1^2 + X2 + noise, Y(0) = c0.
SampleSet
linear_sample(int n, std::uint64_t seed, double noise, double c0 = 0.0)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> z;
  SampleSet s;
  s.X.resize(n, 2);
  s.Y.resize(n);
  s.D.resize(static_cast<std::size_t>(n));
  s.x1_idx = { 0 };
  for (int i = 0; i < n; ++i) {
    const double x1 = u(rng);
    const double x2 = (1 + 2 * x1) * (1 + 2 * x1) + u(rng);
    s.X(i, 0) = x1;
    s.X(i, 1) = x2;
    const int d = unit(rng) < 0.5 ? 1 : 0;
    s.D[static_cast<std::size_t>(i)] = d;
    s.Y(i) = d ? x1 * x1 + x2 + noise * z(rng) : c0;
  }
  return s;
}

} // namespace

TEST_SUITE("estimators")
{
  TEST_CASE("second-step smoother matches explicit weights")
  {
    const SampleSet s = toy();
    const std::vector<double> pseudo{ 0.5, -1.0, 2.0, 0.3, 1.1, -0.4 };
    const Eigen::VectorXd ps = Eigen::Map<const Eigen::VectorXd>(pseudo.data(), 6);
    const RowMatrix grid = column({ -0.2, 0.0, 0.15 });
    for (int order : { 2, 4, 6 }) {
      const double h1 = 0.25;
      const auto c = second_step_smooth(ps, s, grid, h1, make_kernel(KernelFamily::gaussian, order, 1));
      for (Index g = 0; g < grid.rows(); ++g)
        CHECK(close(c.estimates(g), oracle::second_step(kX, { 0 }, pseudo, { grid(g, 0) }, h1,
                                                        oracle::gaussian_of(order))));
    }
    const auto plan = plan_with(0.25, 1.0, 1.0, { 4, 2, 2 });
    const auto c = second_step_smooth(EstimatorId::PCATE, PseudoOutcome::inverse_weighted(ps), s, grid, plan);
    CHECK(c.id == EstimatorId::PCATE);
    CHECK(close(c.estimates(1), oracle::second_step(kX, { 0 }, pseudo, { 0.0 }, 0.25, oracle::gaussian_of(4))));
  }

  TEST_CASE("NRCATE matches the explicit double smoother")
  {
    const SampleSet s = toy();
    const RowMatrix grid = column({ -0.25, 0.0, 0.3 });
    for (const auto& [orders, h2] : { std::pair{ KernelOrders{ 4, 2, 2 }, 0.6 }, { KernelOrders{ 6, 4, 2 }, 0.9 } }) {
      const auto plan = plan_with(0.3, h2, 0.5, orders);
      const auto c = nrcate(s, grid, plan);
      const auto pseudo = oracle::nr_pseudo(kX, kY, kD, h2, oracle::gaussian_of(orders.s2));
      for (Index g = 0; g < grid.rows(); ++g)
        CHECK(close(c.estimates(g), oracle::second_step(kX, { 0 }, pseudo, { grid(g, 0) }, 0.3,
                                                        oracle::gaussian_of(orders.s1))));
    }
  }

  TEST_CASE("leave-one-out NRCATE drops the self term")
  {
    const SampleSet s = toy();
    const auto plan = plan_with(0.3, 0.7, 0.5, { 4, 2, 2 });
    const auto ps = nr_pseudo(s, plan, true);
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<int> t1(kD.begin(), kD.end());
      std::vector<int> t0;
      for (int d : kD)
        t0.push_back(1 - d);
      t1[i] = 0;
      t0[i] = 0;
      const double want = oracle::nw(kX, kY, kX[i], 0.7, oracle::gaussian_of(2), t1) -
                          oracle::nw(kX, kY, kX[i], 0.7, oracle::gaussian_of(2), t0);
      CHECK(close(ps.values()(static_cast<Index>(i)), want));
    }
  }

  TEST_CASE("IPW estimator matches the explicit transform")
  {
    const SampleSet s = toy();
    const auto prop = PropensityModel::from_function(
      [](std::span<const double> x) { return 1.0 / (1.0 + std::exp(-(x[0] + 0.5 * x[1] - 0.3))); }, 0.01);
    const auto plan = plan_with(0.3, 1.0, 1.0, { 4, 2, 2 });
    const RowMatrix grid = column({ -0.2, 0.1 });
    const auto c = ipw_cate(s, prop, grid, plan);
    CHECK(c.id == EstimatorId::OCATE);
    std::vector<double> p;
    for (const auto& x : kX)
      p.push_back(1.0 / (1.0 + std::exp(-(x[0] + 0.5 * x[1] - 0.3))));
    const auto pseudo = oracle::ipw_pseudo(kY, kD, p);
    for (Index g = 0; g < grid.rows(); ++g)
      CHECK(close(c.estimates(g),
                  oracle::second_step(kX, { 0 }, pseudo, { grid(g, 0) }, 0.3, oracle::gaussian_of(4))));
  }

  TEST_CASE("PRCATE equals ORCATE on noiseless correctly specified data")
  {
    const SampleSet s = linear_sample(300, 41, 0.0);
    const auto plan = plan_with(0.08, 0.3, 0.3, { 4, 2, 2 });
    const RowMatrix grid = column({ -0.4, -0.2, 0.0, 0.2, 0.4 });
    const auto pr = prcate(s, BasisSpec::parse({ "1", "x1^2", "x2" }), BasisSpec::parse({ "1" }), grid, plan);
    const auto orc = orcate(s, [](std::span<const double> x) { return x[0] * x[0] + x[1]; }, grid, plan);
    for (Index g = 0; g < grid.rows(); ++g)
      CHECK(std::abs(pr.estimates(g) - orc.estimates(g)) <= 1e-8);
  }

  TEST_CASE("NRCATE equals SRCATE with identity directions")
  {
    const SampleSet s = linear_sample(120, 43, 0.25);
    const auto plan = plan_with(0.1, 0.4, 0.4, { 4, 2, 2 });
    const RowMatrix grid = column({ -0.3, 0.0, 0.3 });
    const auto nr = nrcate(s, grid, plan);
    const auto sr = srcate(s, DirectionSet::identity(2), grid, plan);
    for (Index g = 0; g < grid.rows(); ++g)
      CHECK(nr.estimates(g) == sr.estimates(g));
  }

  TEST_CASE("regression curves ignore a common outcome shift")
  {
    const SampleSet s = linear_sample(150, 47, 0.25);
    SampleSet shifted = s;
    shifted.Y.array() += 7.5;
    const auto plan = plan_with(0.1, 0.4, 0.4, { 4, 2, 2 });
    const RowMatrix grid = column({ -0.3, 0.0, 0.3 });
    const auto b1 = BasisSpec::parse({ "1", "x1^2", "x2" });
    const auto b0 = BasisSpec::parse({ "1" });
    DirectionSet dirs;
    dirs.beta1 = Eigen::MatrixXd::Identity(2, 2);
    dirs.beta0 = Eigen::MatrixXd(2, 0);
    for (Index g = 0; g < grid.rows(); ++g) {
      CHECK(std::abs(prcate(s, b1, b0, grid, plan).estimates(g) - prcate(shifted, b1, b0, grid, plan).estimates(g)) <=
            1e-10);
      CHECK(std::abs(nrcate(s, grid, plan).estimates(g) - nrcate(shifted, grid, plan).estimates(g)) <= 1e-10);
      CHECK(std::abs(srcate(s, dirs, grid, plan).estimates(g) - srcate(shifted, dirs, grid, plan).estimates(g)) <=
            1e-10);
    }
  }

  TEST_CASE("zero-rank control arm contributes its mean")
  {
    const SampleSet s = toy();
    DirectionSet dirs;
    dirs.beta1 = Eigen::MatrixXd::Identity(2, 2);
    dirs.beta0 = Eigen::MatrixXd(2, 0);
    const auto plan = plan_with(0.3, 0.5, 0.5, { 4, 2, 2 });
    const auto ps = sr_pseudo(s, dirs, plan);
    for (Index i = 0; i < 6; ++i)
      CHECK(close(ps.m0(i), 0.2)); // mean of 0.4 and 0.0
  }

  TEST_CASE("degenerate grid points")
  {
    const SampleSet s = toy();
    const auto plan = plan_with(0.05, 1.0, 1.0, { 2, 2, 2 }, KernelFamily::compact);
    const RowMatrix grid = column({ -0.3, 0.45 });
    const Eigen::VectorXd ps = Eigen::VectorXd::Ones(6);
    const auto c = second_step_smooth(EstimatorId::ORCATE, PseudoOutcome::inverse_weighted(ps), s, grid, plan,
                                      MassPolicy::mark_missing);
    CHECK_FALSE(c.missing[0]);
    CHECK(c.missing[1]);
    CHECK(std::isnan(c.estimates(1)));
    CHECK_FALSE(c.complete());
    try {
      second_step_smooth(EstimatorId::ORCATE, PseudoOutcome::inverse_weighted(ps), s, grid, plan);
      FAIL("expected DegenerateMass");
    } catch (const DegenerateMass& e) {
      REQUIRE(e.index().has_value());
      CHECK(*e.index() == 1);
    }
  }

  TEST_CASE("names and tags")
  {
    for (auto id : kAllEstimators) {
      CHECK(parse_estimator(tag(id)) == id);
      CHECK(parse_estimator(name(id)) == id);
    }
    CHECK(parse_estimator("nr") == EstimatorId::NRCATE);
    CHECK(tag(EstimatorId::SCATE) == "S");
    CHECK(name(EstimatorId::SRCATE) == "SRCATE");
    CHECK(is_ipw(EstimatorId::NCATE));
    CHECK_FALSE(is_ipw(EstimatorId::NRCATE));
    CHECK(is_oracle(EstimatorId::ORCATE));
    CHECK(is_oracle(EstimatorId::OCATE));
    CHECK_FALSE(is_oracle(EstimatorId::PCATE));
    CHECK_THROWS_AS(parse_estimator("XX"), std::invalid_argument);
  }

  TEST_CASE("regression residuals")
  {
    const SampleSet s = toy();
    Eigen::VectorXd m1 = Eigen::VectorXd::Constant(6, 1.0);
    Eigen::VectorXd m0 = Eigen::VectorXd::Constant(6, 0.5);
    const auto ps = PseudoOutcome::regression(m1, m0);
    const auto r1 = ps.residuals(s, 1);
    CHECK(r1(0) == doctest::Approx(-0.1));
    CHECK(std::isnan(r1(2)));
    const auto r0 = ps.residuals(s, 0);
    CHECK(r0(5) == doctest::Approx(-0.5));
    CHECK_THROWS(PseudoOutcome::inverse_weighted(m1).residuals(s, 1));
  }
}
