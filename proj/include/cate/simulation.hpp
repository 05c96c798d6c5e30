#pragma once

#include "cate/asymptotics.hpp"
#include "cate/bandwidth.hpp"
#include "cate/estimators.hpp"
#include "cate/firststage.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cate {

//! A sample from one of the built-in models together with its population law.
struct ModelDraw
{
  SampleSet data;
  OracleModel oracle;
};

//! Population law of built-in model 1, 2 or 3. Throws std::invalid_argument
//! for any other id.
OracleModel oracle_model(int model);

//! n rows from the model. Each row consumes a fixed number of variates in a
//! fixed order, so a given rng state always yields the same sample.
ModelDraw generate_model(int model, long n, Rng& rng);

//! E[Y(1) - Y(0) | X1 = x1] in closed form.
double true_tau(int model, double x1);

//! Correctly specified first-stage inputs for a built-in model.
struct ModelWiring
{
  long p{ 0 };
  long r1{ 0 };
  long r0{ 0 };
  BasisSpec basis1;
  BasisSpec basis0;
  DirectionSet known_directions;
  std::vector<Index> logistic_features;

  long r_max() const { return std::max(r1, r0); }
};

ModelWiring model_wiring(int model);

enum class DirectionPolicy
{
  known,
  index_ls
};

std::string to_string(DirectionPolicy policy);
DirectionPolicy parse_direction_policy(std::string_view text);

//! Counter-based stream seed for replication `index`.
std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t index);

struct SimConfig
{
  int model{ 1 };
  long n{ 200 };
  long replications{ 500 };
  std::vector<double> grid{ -0.4, -0.2, 0.0, 0.2, 0.4 };
  BandwidthSpec h1;
  BandwidthSpec h2;
  BandwidthSpec h4;
  std::optional<KernelOrders> orders; //!< defaults from p and r_max
  KernelFamily family{ KernelFamily::gaussian };
  std::vector<EstimatorId> estimators{ kAllEstimators.begin(), kAllEstimators.end() };
  DirectionPolicy directions{ DirectionPolicy::known };
  double clip{ kDefaultClip };
  std::uint64_t seed{ 20240601 };
  unsigned threads{ 1 };

  //! Throws ConfigError on n < 20, R < 1, a grid point outside (-0.5, 0.5),
  //! an unknown model, an empty estimator list, or index-ls directions for a
  //! model whose treated arm has r > 1.
  void validate() const;

  KernelOrders resolved_orders() const;
  BandwidthPlan plan() const;
};

//! Default bandwidth rules (first configuration) for a built-in model, with n, R and seed left
//! at their defaults.
SimConfig panel1_config(int model);

//! Metrics of T = sqrt(n h1^k)(tau_hat - tau) at one grid point.
struct SimCell
{
  int model{ 1 };
  EstimatorId estimator{ EstimatorId::ORCATE };
  double x1{ 0.0 };
  double sd{ 0.0 };   //!< R - 1 denominator; 0 when R = 1
  double bias{ 0.0 }; //!< mean T
  double mse{ 0.0 };  //!< mean T^2
  long replications{ 0 }; //!< replications used
  long dropped{ 0 };
};

struct SimReport
{
  int model{ 1 };
  long n{ 0 };
  long requested{ 0 };
  long dropped{ 0 };
  BandwidthPlan plan;
  std::vector<double> grid;
  std::vector<EstimatorId> estimators;
  std::vector<SimCell> cells; //!< estimator-major, grid-minor
  std::vector<std::string> drop_reasons; //!< one line per dropped replication
  std::vector<ConditionWarning> warnings;

  const SimCell& cell(EstimatorId id, double x1) const;
  long used() const { return requested - dropped; }
};

//! Replications in independent streams; a replication that raises
//! DegenerateMass in any estimator is dropped for all estimators and counted.
SimReport run_replications(const SimConfig& config);

//! Long format: model,estimator,x1,SD,BIAS,MSE,R,dropped at 9 significant
//! digits.
void write_report_csv(const SimReport& report, std::ostream& out);
std::vector<SimCell> read_report_csv(std::istream& in);

//! SD / BIAS / MSE blocks with one column per estimator.
std::string format_report_table(const SimReport& report);

//! SD of each estimator divided by the SD of `baseline` at every grid point.
struct EfficiencyPoint
{
  EstimatorId estimator;
  double x1;
  double ratio;
};
std::vector<EfficiencyPoint> relative_efficiency(const SimReport& report,
                                                 EstimatorId baseline = EstimatorId::NRCATE);

//! Format with 9 significant digits.
std::string format_g9(double v);

} // namespace cate
