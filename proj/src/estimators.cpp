#include "cate/estimators.hpp"

#include "cate/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cate {

std::string
name(EstimatorId id)
{
  switch (id) {
    case EstimatorId::ORCATE:
      return "ORCATE";
    case EstimatorId::PRCATE:
      return "PRCATE";
    case EstimatorId::SRCATE:
      return "SRCATE";
    case EstimatorId::NRCATE:
      return "NRCATE";
    case EstimatorId::NCATE:
      return "NCATE";
    case EstimatorId::SCATE:
      return "SCATE";
    case EstimatorId::PCATE:
      return "PCATE";
    case EstimatorId::OCATE:
      return "OCATE";
  }
  return "?";
}

std::string
tag(EstimatorId id)
{
  switch (id) {
    case EstimatorId::ORCATE:
      return "OR";
    case EstimatorId::PRCATE:
      return "PR";
    case EstimatorId::SRCATE:
      return "SR";
    case EstimatorId::NRCATE:
      return "NR";
    case EstimatorId::NCATE:
      return "N";
    case EstimatorId::SCATE:
      return "S";
    case EstimatorId::PCATE:
      return "P";
    case EstimatorId::OCATE:
      return "O";
  }
  return "?";
}

EstimatorId
parse_estimator(std::string_view text)
{
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) {
    return static_cast<char>(std::toupper(c));
  });
  for (auto id : kAllEstimators)
    if (upper == name(id) || upper == tag(id))
      return id;
  throw std::invalid_argument("unknown estimator '" + std::string(text) + "'");
}

bool
is_ipw(EstimatorId id)
{
  switch (id) {
    case EstimatorId::NCATE:
    case EstimatorId::SCATE:
    case EstimatorId::PCATE:
    case EstimatorId::OCATE:
      return true;
    default:
      return false;
  }
}

bool
is_oracle(EstimatorId id)
{
  return id == EstimatorId::ORCATE || id == EstimatorId::OCATE;
}

// ---------------------------------------------------------------------------

PseudoOutcome
PseudoOutcome::regression(Eigen::VectorXd m1_hat, Eigen::VectorXd m0_hat)
{
  if (m1_hat.size() != m0_hat.size())
    throw std::invalid_argument("arm fits have different lengths");
  PseudoOutcome p;
  p.kind = Kind::regression;
  p.m1 = std::move(m1_hat);
  p.m0 = std::move(m0_hat);
  return p;
}

PseudoOutcome
PseudoOutcome::inverse_weighted(Eigen::VectorXd transform)
{
  PseudoOutcome p;
  p.kind = Kind::ipw;
  p.ipw = std::move(transform);
  return p;
}

PseudoOutcome
PseudoOutcome::constant(Index n, double value)
{
  return regression(Eigen::VectorXd::Constant(n, value), Eigen::VectorXd::Zero(n));
}

Index
PseudoOutcome::size() const
{
  return kind == Kind::regression ? m1.size() : ipw.size();
}

Eigen::VectorXd
PseudoOutcome::values() const
{
  return kind == Kind::regression ? Eigen::VectorXd(m1 - m0) : ipw;
}

Eigen::VectorXd
PseudoOutcome::residuals(const SampleSet& data, int arm) const
{
  if (kind != Kind::regression)
    throw std::logic_error("residuals are defined for regression pseudo-outcomes only");
  const auto& fit = arm == 1 ? m1 : m0;
  Eigen::VectorXd out = Eigen::VectorXd::Constant(data.n(), std::numeric_limits<double>::quiet_NaN());
  for (Index i = 0; i < data.n(); ++i)
    if (data.D[static_cast<std::size_t>(i)] == arm)
      out(i) = data.Y(i) - fit(i);
  return out;
}

bool
CateCurve::complete() const
{
  return std::none_of(missing.begin(), missing.end(), [](bool b) { return b; });
}

// ---------------------------------------------------------------------------

CateCurve
second_step_smooth(const Eigen::VectorXd& pseudo,
                   const SampleSet& data,
                   const RowMatrix& grid,
                   double h1,
                   const KernelSpec& kernel,
                   MassPolicy policy)
{
  if (pseudo.size() != data.n())
    throw std::invalid_argument("pseudo-outcome length differs from n");
  if (!pseudo.allFinite())
    throw std::invalid_argument("pseudo-outcome has non-finite entries");
  if (grid.cols() != data.k())
    throw std::invalid_argument("grid has " + std::to_string(grid.cols()) + " columns, k = " +
                                std::to_string(data.k()));
  if (kernel.dim() != data.k())
    throw std::invalid_argument("K1 dimension must equal k");

  const RowMatrix x1 = data.x1();
  CateCurve curve;
  curve.grid = grid;
  curve.n = data.n();
  curve.k = data.k();
  curve.estimates.resize(grid.rows());
  curve.missing.assign(static_cast<std::size_t>(grid.rows()), false);
  for (Index g = 0; g < grid.rows(); ++g) {
    std::span<const double> q(grid.data() + g * grid.cols(), static_cast<std::size_t>(grid.cols()));
    try {
      curve.estimates(g) = nw_regress(x1, pseudo, q, h1, kernel);
    } catch (const DegenerateMass& e) {
      if (policy == MassPolicy::throw_error)
        throw DegenerateMass(std::string(e.what()) + " at grid point " + std::to_string(g),
                             static_cast<std::size_t>(g));
      curve.estimates(g) = std::numeric_limits<double>::quiet_NaN();
      curve.missing[static_cast<std::size_t>(g)] = true;
    }
  }
  return curve;
}

CateCurve
second_step_smooth(EstimatorId id,
                   const PseudoOutcome& pseudo,
                   const SampleSet& data,
                   const RowMatrix& grid,
                   const BandwidthPlan& plan,
                   MassPolicy policy)
{
  CateCurve c = second_step_smooth(pseudo.values(), data, grid, plan.h1, plan.k1(data.k()), policy);
  c.id = id;
  c.plan = plan;
  return c;
}

CateCurve
orcate(const SampleSet& data,
       const EffectFunction& true_effect,
       const RowMatrix& grid,
       const BandwidthPlan& plan,
       MassPolicy policy)
{
  Eigen::VectorXd effect(data.n());
  for (Index i = 0; i < data.n(); ++i)
    effect(i) = true_effect(data.row(i));
  return second_step_smooth(EstimatorId::ORCATE, PseudoOutcome::regression(effect, Eigen::VectorXd::Zero(data.n())),
                            data, grid, plan, policy);
}

PseudoOutcome
pr_pseudo(const SampleSet& data,
          const BasisSpec& basis1,
          const BasisSpec& basis0,
          const std::optional<Eigen::VectorXd>& weights)
{
  const OutcomeFit f1 = fit_outcome_ls(data, 1, basis1, weights);
  const OutcomeFit f0 = fit_outcome_ls(data, 0, basis0, weights);
  Eigen::VectorXd m1(data.n());
  Eigen::VectorXd m0(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    m1(i) = f1(data.row(i));
    m0(i) = f0(data.row(i));
  }
  return PseudoOutcome::regression(std::move(m1), std::move(m0));
}

CateCurve
prcate(const SampleSet& data,
       const BasisSpec& basis1,
       const BasisSpec& basis0,
       const RowMatrix& grid,
       const BandwidthPlan& plan,
       MassPolicy policy,
       const std::optional<Eigen::VectorXd>& weights)
{
  return second_step_smooth(EstimatorId::PRCATE, pr_pseudo(data, basis1, basis0, weights), data, grid,
                            plan, policy);
}

namespace {

Eigen::VectorXd
evaluate_at_samples(const MeanFunction& fn, const SampleSet& data)
{
  Eigen::VectorXd out(data.n());
  for (Index i = 0; i < data.n(); ++i)
    out(i) = fn.at_sample(data, i);
  return out;
}

} // namespace

PseudoOutcome
nr_pseudo(const SampleSet& data, const BandwidthPlan& plan, bool leave_one_out)
{
  const KernelSpec k2 = plan.k2(data.p());
  const auto fn1 = subsample_mean_fn(data, 1, Projection::full(), plan.h2, k2, leave_one_out);
  const auto fn0 = subsample_mean_fn(data, 0, Projection::full(), plan.h2, k2, leave_one_out);
  return PseudoOutcome::regression(evaluate_at_samples(fn1, data), evaluate_at_samples(fn0, data));
}

CateCurve
nrcate(const SampleSet& data, const RowMatrix& grid, const BandwidthPlan& plan, MassPolicy policy, bool leave_one_out)
{
  return second_step_smooth(EstimatorId::NRCATE, nr_pseudo(data, plan, leave_one_out), data, grid,
                            plan, policy);
}

PseudoOutcome
sr_pseudo(const SampleSet& data, const DirectionSet& directions, const BandwidthPlan& plan, bool leave_one_out)
{
  Eigen::VectorXd fitted[2];
  for (int arm : { 0, 1 }) {
    const Eigen::MatrixXd& beta = directions.beta(arm);
    if (beta.cols() > 0 && beta.rows() != data.p())
      throw std::invalid_argument("direction matrix for arm " + std::to_string(arm) + " has " +
                                  std::to_string(beta.rows()) + " rows, p = " + std::to_string(data.p()));
    const Projection proj = Projection::index(beta);
    const Index r = beta.cols();
    // The kernel is unused for the zero-dimensional projection.
    const KernelSpec k4 = plan.k4(std::max<Index>(r, 1));
    const auto fn = subsample_mean_fn(data, arm, proj, plan.h4, k4, leave_one_out);
    fitted[arm] = evaluate_at_samples(fn, data);
  }
  return PseudoOutcome::regression(std::move(fitted[1]), std::move(fitted[0]));
}

CateCurve
srcate(const SampleSet& data,
       const DirectionSet& directions,
       const RowMatrix& grid,
       const BandwidthPlan& plan,
       MassPolicy policy,
       bool leave_one_out)
{
  return second_step_smooth(EstimatorId::SRCATE, sr_pseudo(data, directions, plan, leave_one_out), data,
                            grid, plan, policy);
}

PseudoOutcome
ipw_pseudo(const SampleSet& data, const PropensityModel& propensity)
{
  Eigen::VectorXd out(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    double p = 0.0;
    try {
      p = propensity(data.row(i));
    } catch (const DegenerateMass& e) {
      throw DegenerateMass(std::string(e.what()) + " (propensity at observation " + std::to_string(i) + ")",
                           static_cast<std::size_t>(i));
    }
    const double y = data.Y(i);
    out(i) = data.D[static_cast<std::size_t>(i)] == 1 ? y / p : -y / (1.0 - p);
  }
  return PseudoOutcome::inverse_weighted(std::move(out));
}

EstimatorId
ipw_estimator_for(PropensityModel::Kind kind)
{
  switch (kind) {
    case PropensityModel::Kind::true_function:
      return EstimatorId::OCATE;
    case PropensityModel::Kind::parametric_logistic:
      return EstimatorId::PCATE;
    case PropensityModel::Kind::single_index:
      return EstimatorId::SCATE;
    case PropensityModel::Kind::nonparametric:
      return EstimatorId::NCATE;
  }
  return EstimatorId::OCATE;
}

CateCurve
ipw_cate(const SampleSet& data,
         const PropensityModel& propensity,
         const RowMatrix& grid,
         const BandwidthPlan& plan,
         MassPolicy policy)
{
  return second_step_smooth(ipw_estimator_for(propensity.kind()), ipw_pseudo(data, propensity), data,
                            grid, plan, policy);
}

} // namespace cate
