#pragma once

#include "cate/estimators.hpp"
#include "cate/simulation.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cate::cli {

//! Process exit codes.
enum ExitCode : int
{
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4
};

//! Simulation job read from the `[simulate]` table of a config file.
struct SimulateJob
{
  SimConfig config;
  std::filesystem::path output_dir{ "." };
  bool override_orders{ false };
  //! Exit 4 when dropped / requested exceeds this.
  double max_dropped_fraction{ 0.0 };
  //! Monte Carlo draws per grid point for variance.csv; 0 skips the file.
  int variance_draws{ 0 };
};

//! How the grid of evaluation points is chosen for `estimate`.
struct GridSpec
{
  std::vector<std::vector<double>> points; //!< explicit rows of length k
  int count{ 40 };
  double lower_quantile{ 0.025 };
  double upper_quantile{ 0.975 };
};

//! Which CSV column plays which part.
struct ColumnRoles
{
  std::string y;
  std::string d;
  std::vector<std::string> x;
  std::vector<std::string> x1; //!< subset of x
};

struct DirectionChoice
{
  DirectionMethod arm1{ DirectionMethod::index_ls(1) };
  DirectionMethod arm0{ DirectionMethod::index_ls(1) };

  long r_max() const;
};

//! Estimation on a user CSV, read from the `[estimate]` table.
struct EstimateJob
{
  std::filesystem::path data;
  std::filesystem::path output_dir{ "." };
  ColumnRoles roles;
  std::vector<EstimatorId> estimators;
  GridSpec grid;
  BandwidthSpec h1;
  BandwidthSpec h2;
  BandwidthSpec h4;
  std::optional<KernelOrders> orders;
  KernelFamily family{ KernelFamily::gaussian };
  bool override_orders{ false };
  double clip{ kDefaultClip };
  bool leave_one_out{ false };
  //! Basis terms in column names; empty means [1, every x column].
  std::vector<std::string> basis1;
  std::vector<std::string> basis0;
  DirectionChoice directions;
  //! Logistic features by column name; empty means every x column.
  std::vector<std::string> propensity_features;
  //! Exit 4 when any curve misses more than this fraction of its grid.
  double max_missing_fraction{ 0.25 };
};

struct KernelCheckJob
{
  int order{ 2 };
  KernelFamily family{ KernelFamily::gaussian };
  int dim{ 1 };
};

//! Parse a config document. Throws ConfigError with the offending key.
SimulateJob parse_simulate_config(std::string_view toml_text, const std::filesystem::path& base_dir = ".");
EstimateJob parse_estimate_config(std::string_view toml_text, const std::filesystem::path& base_dir = ".");
SimulateJob load_simulate_config(const std::filesystem::path& file);
EstimateJob load_estimate_config(const std::filesystem::path& file);

//! Numeric table with a header row.
struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  Index column(std::string_view name) const; //!< -1 when absent
};

//! Comma-delimited, header required, every field numeric. Errors name the
//! 1-based line.
CsvTable read_numeric_csv(std::istream& in);

//! Assemble a sample from a table; X holds the `x` columns in the given
//! order and x1_idx points into them. Throws DataError naming the line of a
//! D value outside {0, 1}, ConfigError for unknown columns.
SampleSet sample_from_table(const CsvTable& table, const ColumnRoles& roles);

//! `count` quantile levels evenly spaced over [lower, upper] of the single
//! conditioning covariate (type-7 interpolation).
RowMatrix quantile_grid(const SampleSet& data, const GridSpec& spec);

struct EstimateResult
{
  SampleSet data;
  BandwidthPlan plan;
  DirectionSet directions;
  std::vector<CateCurve> curves;
  std::vector<ConditionWarning> warnings;
  //! One entry per missing grid point, e.g. "NR point 3: ...".
  std::vector<std::string> missing_notes;
};

//! Run the job in process; no files are written.
EstimateResult run_estimate(const EstimateJob& job, const SampleSet& data);

//! Command-line values that take precedence over the config file.
struct Overrides
{
  std::optional<std::filesystem::path> output_dir;
  std::optional<unsigned> threads;
};

//! Subcommands. Each returns the exit code, writes its files, prints
//! progress to `out` and a single error line to `err` on failure.
int cmd_simulate(const std::filesystem::path& config_file,
                 std::ostream& out,
                 std::ostream& err,
                 const Overrides& overrides = {});
int cmd_estimate(const std::filesystem::path& config_file,
                 std::ostream& out,
                 std::ostream& err,
                 const Overrides& overrides = {});
int cmd_kernel_check(const KernelCheckJob& job, std::ostream& out, std::ostream& err);

//! One draw of a built-in model as CSV: y, d, x1..xp. Feeds `estimate`.
struct SampleJob
{
  int model{ 1 };
  long n{ 500 };
  std::uint64_t seed{ 1 };
  std::filesystem::path output;
};
int cmd_sample(const SampleJob& job, std::ostream& out, std::ostream& err);
void write_sample_csv(const SampleSet& data, std::ostream& out);

//! `error kind=<kind> exit=<code> message="<escaped>"` on one line.
std::string error_line(std::string_view kind, int code, std::string_view message);

//! Variance profile rows for a simulate run: x1, kind, sigma2, se, asy_sd.
void write_variance_csv(const std::vector<VarianceProfile>& profiles, std::ostream& out);

//! Long curve file: estimator, grid coordinates, tau_hat, missing flag.
//! `coordinate_names` labels the grid columns (default x1, or x1_1.. for k > 1).
void write_curves_csv(const std::vector<CateCurve>& curves,
                      std::ostream& out,
                      const std::vector<std::string>& coordinate_names = {});

//! Map the in-flight exception to an exit code and print its error line.
int report_exception(std::ostream& err);

} // namespace cate::cli
