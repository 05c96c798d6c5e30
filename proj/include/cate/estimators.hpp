#pragma once

#include "cate/bandwidth.hpp"
#include "cate/firststage.hpp"
#include "cate/smoothing.hpp"

#include <array>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace cate {

enum class EstimatorId
{
  ORCATE,
  PRCATE,
  SRCATE,
  NRCATE,
  NCATE,
  SCATE,
  PCATE,
  OCATE
};

//! Table column order: OR PR SR NR N S P O.
inline constexpr std::array<EstimatorId, 8> kAllEstimators{
  EstimatorId::ORCATE, EstimatorId::PRCATE, EstimatorId::SRCATE, EstimatorId::NRCATE,
  EstimatorId::NCATE,  EstimatorId::SCATE,  EstimatorId::PCATE,  EstimatorId::OCATE
};

std::string name(EstimatorId id); //!< "ORCATE"
std::string tag(EstimatorId id);  //!< "OR"
//! Accepts either form, case-insensitive.
EstimatorId parse_estimator(std::string_view text);
bool is_ipw(EstimatorId id);
//! Needs the true regression or propensity function.
bool is_oracle(EstimatorId id);

//! Per-observation first-stage output feeding the second-step smoother.
struct PseudoOutcome
{
  enum class Kind
  {
    regression, //!< m1_hat(X_i) - m0_hat(X_i)
    ipw         //!< D Y / p_hat - (1 - D) Y / (1 - p_hat)
  };

  Kind kind{ Kind::regression };
  Eigen::VectorXd m1; //!< regression only
  Eigen::VectorXd m0; //!< regression only
  Eigen::VectorXd ipw;

  static PseudoOutcome regression(Eigen::VectorXd m1_hat, Eigen::VectorXd m0_hat);
  static PseudoOutcome inverse_weighted(Eigen::VectorXd transform);
  static PseudoOutcome constant(Index n, double value);

  Index size() const;
  Eigen::VectorXd values() const;
  //! Y_i - m_t_hat(X_i) on arm t, NaN off the arm (regression only).
  Eigen::VectorXd residuals(const SampleSet& data, int arm) const;
};

//! What to do when the second-step kernel mass at a grid point is degenerate.
enum class MassPolicy
{
  throw_error,
  mark_missing
};

struct CateCurve
{
  EstimatorId id{ EstimatorId::ORCATE };
  RowMatrix grid;                 //!< m x k
  Eigen::VectorXd estimates;      //!< NaN where missing
  std::vector<bool> missing;
  BandwidthPlan plan;
  Index n{ 0 };
  Index k{ 0 };

  Index size() const { return grid.rows(); }
  bool complete() const;
};

//! tau_hat(x1) = sum_i K1((X1_i - x1)/h1) pseudo_i / sum_i K1((X1_i - x1)/h1)
//! at every grid row. `kernel.dim()` must equal k.
CateCurve second_step_smooth(const Eigen::VectorXd& pseudo,
                             const SampleSet& data,
                             const RowMatrix& grid,
                             double h1,
                             const KernelSpec& kernel,
                             MassPolicy policy = MassPolicy::throw_error);

//! Same, with h1 and K1 (order s1, dim k) taken from the plan and the result
//! stamped with `id` and the plan.
CateCurve second_step_smooth(EstimatorId id,
                             const PseudoOutcome& pseudo,
                             const SampleSet& data,
                             const RowMatrix& grid,
                             const BandwidthPlan& plan,
                             MassPolicy policy = MassPolicy::throw_error);

using EffectFunction = std::function<double(std::span<const double>)>;

//! Smooths the known effect m1(X_i) - m0(X_i).
CateCurve orcate(const SampleSet& data,
                 const EffectFunction& true_effect,
                 const RowMatrix& grid,
                 const BandwidthPlan& plan,
                 MassPolicy policy = MassPolicy::throw_error);

PseudoOutcome pr_pseudo(const SampleSet& data,
                        const BasisSpec& basis1,
                        const BasisSpec& basis0,
                        const std::optional<Eigen::VectorXd>& weights = std::nullopt);

//! Least-squares fits on each arm, evaluated at every X_i.
CateCurve prcate(const SampleSet& data,
                 const BasisSpec& basis1,
                 const BasisSpec& basis0,
                 const RowMatrix& grid,
                 const BandwidthPlan& plan,
                 MassPolicy policy = MassPolicy::throw_error,
                 const std::optional<Eigen::VectorXd>& weights = std::nullopt);

//! Full-covariate Nadaraya-Watson fits (h2, K2 of order s2 on R^p) per arm,
//! evaluated at every X_i. The self term is kept unless `leave_one_out`.
PseudoOutcome nr_pseudo(const SampleSet& data, const BandwidthPlan& plan, bool leave_one_out = false);

CateCurve nrcate(const SampleSet& data,
                 const RowMatrix& grid,
                 const BandwidthPlan& plan,
                 MassPolicy policy = MassPolicy::throw_error,
                 bool leave_one_out = false);

//! Index fits m_t(beta_t^T X) with (h4, K4 of order s4 on R^r(t)); an arm
//! with r(t) = 0 contributes its sample mean.
PseudoOutcome sr_pseudo(const SampleSet& data,
                        const DirectionSet& directions,
                        const BandwidthPlan& plan,
                        bool leave_one_out = false);

CateCurve srcate(const SampleSet& data,
                 const DirectionSet& directions,
                 const RowMatrix& grid,
                 const BandwidthPlan& plan,
                 MassPolicy policy = MassPolicy::throw_error,
                 bool leave_one_out = false);

PseudoOutcome ipw_pseudo(const SampleSet& data, const PropensityModel& propensity);

//! Estimator id follows the propensity kind: true function -> OCATE,
//! logistic -> PCATE, single index -> SCATE, nonparametric -> NCATE.
EstimatorId ipw_estimator_for(PropensityModel::Kind kind);

CateCurve ipw_cate(const SampleSet& data,
                   const PropensityModel& propensity,
                   const RowMatrix& grid,
                   const BandwidthPlan& plan,
                   MassPolicy policy = MassPolicy::throw_error);

} // namespace cate
