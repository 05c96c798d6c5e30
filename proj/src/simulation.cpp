#include "cate/simulation.hpp"

#include "cate/errors.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace cate {

namespace {

constexpr double kNoiseSd = 0.25;

double
logistic(double t)
{
  return 1.0 / (1.0 + std::exp(-t));
}

double
uniform_centered(Rng& rng)
{
  return std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
}

void
require_model(int model)
{
  if (model < 1 || model > 3)
    throw std::invalid_argument("unknown model id " + std::to_string(model) + " (expected 1, 2 or 3)");
}

long
model_p(int model)
{
  return model == 1 ? 2 : model == 2 ? 4 : 3;
}

// Covariates given X1 = x1 and the auxiliary uniforms u[0..p-2].
void
fill_covariates(int model, double x1, const double* u, double* x)
{
  x[0] = x1;
  switch (model) {
    case 1:
      x[1] = (1.0 + 2.0 * x1) * (1.0 + 2.0 * x1) + u[0];
      break;
    case 2:
      x[1] = 1.0 + x1 * x1 + u[0];
      x[2] = (1.0 + x1) * (1.0 + x1) + u[1];
      x[3] = (-1.0 + x1) * (-1.0 + x1) + u[2];
      break;
    case 3:
      x[1] = 1.0 + x1 * x1 + u[0];
      x[2] = (1.0 + x1) * (-1.0 + x1) + u[1];
      break;
  }
}

double
model_m1(int model, std::span<const double> x)
{
  switch (model) {
    case 1:
      return x[0] * x[0] + x[1];
    case 2:
      return x[0] + x[1] + x[2] + x[3];
    default:
      return x[1] + x[2];
  }
}

double
model_propensity(int model, std::span<const double> x)
{
  switch (model) {
    case 1:
      return logistic(x[0] + x[1]);
    case 2:
      return logistic(0.5 * (x[0] + x[1] + x[2] + x[3]));
    default:
      return logistic(x[1] + x[2]);
  }
}

// P(D = 1), the propensity given a zero-dimensional index.
double
marginal_treatment_rate(int model)
{
  static std::once_flag flags[3];
  static double values[3];
  const auto slot = static_cast<std::size_t>(model - 1);
  std::call_once(flags[slot], [&] {
    Rng rng(0x5EEDULL + static_cast<std::uint64_t>(model));
    const long p = model_p(model);
    std::array<double, 4> u{};
    std::array<double, 4> x{};
    constexpr int kDraws = 1000000;
    double sum = 0.0;
    for (int b = 0; b < kDraws; ++b) {
      const double x1 = uniform_centered(rng);
      for (long j = 0; j + 1 < p; ++j)
        u[static_cast<std::size_t>(j)] = uniform_centered(rng);
      fill_covariates(model, x1, u.data(), x.data());
      sum += model_propensity(model, { x.data(), static_cast<std::size_t>(p) });
    }
    values[slot] = sum / kDraws;
  });
  return values[slot];
}

} // namespace

double
true_tau(int model, double x1)
{
  require_model(model);
  switch (model) {
    case 1:
      return x1 * x1 + (1.0 + 2.0 * x1) * (1.0 + 2.0 * x1);
    case 2:
      return 3.0 * x1 * x1 + x1 + 3.0;
    default:
      return 2.0 * x1 * x1;
  }
}

ModelWiring
model_wiring(int model)
{
  require_model(model);
  ModelWiring w;
  w.p = model_p(model);
  w.r0 = 0;
  switch (model) {
    case 1:
      w.r1 = 2;
      w.basis1 = BasisSpec::parse({ "1", "x1^2", "x2" });
      w.known_directions.beta1 = Eigen::MatrixXd::Identity(2, 2);
      break;
    case 2:
      w.r1 = 1;
      w.basis1 = BasisSpec::parse({ "1", "x1", "x2", "x3", "x4" });
      w.known_directions.beta1 = Eigen::MatrixXd::Constant(4, 1, 0.5);
      break;
    case 3:
      w.r1 = 1;
      w.basis1 = BasisSpec::parse({ "1", "x2", "x3" });
      w.known_directions.beta1 = Eigen::MatrixXd(3, 1);
      w.known_directions.beta1 << 0.0, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
      break;
  }
  w.basis0 = BasisSpec::parse({ "1" });
  w.known_directions.beta0 = Eigen::MatrixXd(w.p, 0);
  w.known_directions.source = DirectionSet::Source::known;
  for (long j = 0; j < w.p; ++j)
    w.logistic_features.push_back(j);
  return w;
}

OracleModel
oracle_model(int model)
{
  require_model(model);
  const ModelWiring wiring = model_wiring(model);
  OracleModel o;
  o.p = wiring.p;
  o.x1_idx = { 0 };
  o.m1 = [model](std::span<const double> x) { return model_m1(model, x); };
  o.m0 = [](std::span<const double>) { return 0.0; };
  o.propensity = [model](std::span<const double> x) { return model_propensity(model, x); };
  o.var1 = [](std::span<const double>) { return kNoiseSd * kNoiseSd; };
  o.var0 = [](std::span<const double>) { return 0.0; };
  // In all three models the propensity depends on X only through the treated
  // arm's index, so p(beta1^T X) = p(X).
  o.p_index1 = o.propensity;
  o.p_index0 = [model](std::span<const double>) { return marginal_treatment_rate(model); };
  o.beta1 = wiring.known_directions.beta1;
  o.beta0 = wiring.known_directions.beta0;
  o.sample_given_x1 = [model, p = wiring.p](std::span<const double> x1, Rng& rng) {
    std::array<double, 4> u{};
    for (long j = 0; j + 1 < p; ++j)
      u[static_cast<std::size_t>(j)] = uniform_centered(rng);
    Eigen::VectorXd x(p);
    fill_covariates(model, x1[0], u.data(), x.data());
    return x;
  };
  o.tau = [model](std::span<const double> x1) { return true_tau(model, x1[0]); };
  o.f_x1 = [](std::span<const double> x1) { return std::abs(x1[0]) < 0.5 ? 1.0 : 0.0; };
  return o;
}

ModelDraw
generate_model(int model, long n, Rng& rng)
{
  require_model(model);
  if (n < 1)
    throw std::invalid_argument("sample size must be positive");
  const long p = model_p(model);
  ModelDraw out{ SampleSet{}, oracle_model(model) };
  SampleSet& s = out.data;
  s.X.resize(n, p);
  s.Y.resize(n);
  s.D.resize(static_cast<std::size_t>(n));
  s.x1_idx = { 0 };
  std::normal_distribution<double> noise(0.0, kNoiseSd);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<double, 4> u{};
  for (long i = 0; i < n; ++i) {
    const double x1 = uniform_centered(rng);
    for (long j = 0; j + 1 < p; ++j)
      u[static_cast<std::size_t>(j)] = uniform_centered(rng);
    double* x = s.X.data() + i * p;
    fill_covariates(model, x1, u.data(), x);
    std::span<const double> row(x, static_cast<std::size_t>(p));
    const double y1 = model_m1(model, row) + noise(rng);
    const int d = unit(rng) < model_propensity(model, row) ? 1 : 0;
    s.D[static_cast<std::size_t>(i)] = d;
    s.Y(i) = d == 1 ? y1 : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string
to_string(DirectionPolicy policy)
{
  return policy == DirectionPolicy::known ? "known" : "index-ls";
}

DirectionPolicy
parse_direction_policy(std::string_view text)
{
  if (text == "known")
    return DirectionPolicy::known;
  if (text == "index-ls" || text == "index_ls")
    return DirectionPolicy::index_ls;
  throw std::invalid_argument("unknown direction policy '" + std::string(text) + "'");
}

std::uint64_t
replication_seed(std::uint64_t seed, std::uint64_t index)
{
  // SplitMix64 finaliser over (seed, index).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void
SimConfig::validate() const
{
  if (model < 1 || model > 3)
    throw ConfigError("model must be 1, 2 or 3");
  if (n < 20)
    throw ConfigError("n must be at least 20");
  if (replications < 1)
    throw ConfigError("replications must be at least 1");
  if (grid.empty())
    throw ConfigError("grid is empty");
  for (double g : grid)
    if (!(g > -0.5 && g < 0.5))
      throw ConfigError("grid point " + format_g9(g) + " lies outside (-0.5, 0.5)");
  if (estimators.empty())
    throw ConfigError("no estimators selected");
  if (!(clip > 0.0 && clip < 0.5))
    throw ConfigError("clip must lie in (0, 0.5)");
  const auto wiring = model_wiring(model);
  const bool wants_sr =
    std::find(estimators.begin(), estimators.end(), EstimatorId::SRCATE) != estimators.end();
  if (wants_sr && directions == DirectionPolicy::index_ls && wiring.r1 > 1)
    throw ConfigError("model " + std::to_string(model) + " has r(1) = " + std::to_string(wiring.r1) +
                      "; SRCATE needs directions = \"known\"");
  try {
    plan();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

KernelOrders
SimConfig::resolved_orders() const
{
  const auto w = model_wiring(model);
  return orders ? *orders : default_orders(w.p, w.r_max());
}

BandwidthPlan
SimConfig::plan() const
{
  const auto w = model_wiring(model);
  return resolve_plan(h1, h2, h4, resolved_orders(), family, n, 1, w.p, w.r_max());
}

SimConfig
panel1_config(int model)
{
  require_model(model);
  SimConfig c;
  c.model = model;
  auto rule = [](double a, double e) {
    BandwidthSpec s;
    s.a = a;
    s.exponent = e;
    return s;
  };
  switch (model) {
    case 1:
      c.h1 = rule(0.05, 1.0 / 9.0);
      c.h2 = rule(0.5, 0.25);
      c.h4 = rule(0.6, 0.25);
      break;
    case 2:
      c.h1 = rule(0.02, 1.0 / 9.0);
      c.h2 = rule(0.15, 0.25);
      c.h4 = rule(0.15, 0.25);
      break;
    case 3:
      c.h1 = rule(0.02, 1.0 / 9.0);
      c.h2 = rule(0.16, 0.25);
      c.h4 = rule(0.2, 0.25);
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------

const SimCell&
SimReport::cell(EstimatorId id, double x1) const
{
  for (const auto& c : cells)
    if (c.estimator == id && std::abs(c.x1 - x1) < 1e-12)
      return c;
  throw std::out_of_range("no report cell for " + tag(id) + " at x1 = " + format_g9(x1));
}

namespace {

struct ReplicationResult
{
  bool ok{ false };
  std::string reason;
  std::vector<double> t; //!< estimator-major, grid-minor
};

ReplicationResult
run_one(const SimConfig& config,
        const BandwidthPlan& plan,
        const ModelWiring& wiring,
        const RowMatrix& grid,
        std::uint64_t index)
{
  Rng rng(replication_seed(config.seed, index));
  ModelDraw draw = generate_model(config.model, config.n, rng);
  const SampleSet& data = draw.data;
  const OracleModel& oracle = draw.oracle;
  const double scale = std::sqrt(static_cast<double>(config.n) * plan.h1);

  ReplicationResult res;
  res.t.reserve(config.estimators.size() * config.grid.size());
  try {
    for (EstimatorId id : config.estimators) {
      CateCurve curve;
      switch (id) {
        case EstimatorId::ORCATE:
          curve = orcate(
            data, [&](std::span<const double> x) { return oracle.m1(x) - oracle.m0(x); }, grid, plan);
          break;
        case EstimatorId::PRCATE:
          curve = prcate(data, wiring.basis1, wiring.basis0, grid, plan);
          break;
        case EstimatorId::NRCATE:
          curve = nrcate(data, grid, plan);
          break;
        case EstimatorId::SRCATE: {
          DirectionSet dirs = wiring.known_directions;
          if (config.directions == DirectionPolicy::index_ls) {
            dirs.beta1 = estimate_directions(data, 1, DirectionMethod::index_ls(wiring.r1));
            dirs.beta0 = estimate_directions(data, 0, DirectionMethod::index_ls(wiring.r0));
            dirs.source = DirectionSet::Source::estimated;
          }
          curve = srcate(data, dirs, grid, plan);
          break;
        }
        case EstimatorId::OCATE:
          curve = ipw_cate(data, PropensityModel::from_function(oracle.propensity, config.clip), grid, plan);
          break;
        case EstimatorId::PCATE:
          curve = ipw_cate(data, fit_propensity_logistic(data, wiring.logistic_features, config.clip), grid, plan);
          break;
        case EstimatorId::SCATE:
          curve = ipw_cate(
            data, fit_propensity_single_index(data, plan.h4, plan.k4(1), wiring.logistic_features, config.clip),
            grid, plan);
          break;
        case EstimatorId::NCATE:
          curve = ipw_cate(data, fit_propensity_nonparametric(data, plan.h2, plan.k2(data.p()), config.clip), grid,
                           plan);
          break;
      }
      for (std::size_t g = 0; g < config.grid.size(); ++g)
        res.t.push_back(scale * (curve.estimates(static_cast<Index>(g)) - true_tau(config.model, config.grid[g])));
    }
    res.ok = true;
  } catch (const DegenerateMass& e) {
    res.reason = "replication " + std::to_string(index) + ": " + e.what();
    res.t.clear();
  } catch (const Separation& e) {
    res.reason = "replication " + std::to_string(index) + ": " + e.what();
    res.t.clear();
  }
  return res;
}

} // namespace

SimReport
run_replications(const SimConfig& config)
{
  config.validate();
  const BandwidthPlan plan = config.plan();
  const ModelWiring wiring = model_wiring(config.model);

  RowMatrix grid(static_cast<Index>(config.grid.size()), 1);
  for (std::size_t g = 0; g < config.grid.size(); ++g)
    grid(static_cast<Index>(g), 0) = config.grid[g];

  // Build every kernel the run needs before spawning workers.
  (void)plan.k1(1);
  (void)plan.k2(wiring.p);
  (void)plan.k4(1);
  (void)plan.k4(std::max<long>(wiring.r1, 1));

  const auto R = static_cast<std::size_t>(config.replications);
  std::vector<ReplicationResult> results(R);
  std::vector<std::exception_ptr> errors(R);
  const unsigned threads =
    std::max(1u, config.threads == 0 ? std::thread::hardware_concurrency() : config.threads);
  if (threads == 1) {
    for (std::size_t r = 0; r < R; ++r)
      results[r] = run_one(config, plan, wiring, grid, r);
  } else {
    std::atomic<std::size_t> next{ 0 };
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < std::min<std::size_t>(threads, R); ++t) {
      pool.emplace_back([&] {
        for (std::size_t r; (r = next.fetch_add(1)) < R;) {
          try {
            results[r] = run_one(config, plan, wiring, grid, r);
          } catch (...) {
            errors[r] = std::current_exception();
          }
        }
      });
    }
    pool.clear();
    for (auto& e : errors)
      if (e)
        std::rethrow_exception(e);
  }

  SimReport report;
  report.model = config.model;
  report.n = config.n;
  report.requested = config.replications;
  report.plan = plan;
  report.grid = config.grid;
  report.estimators = config.estimators;
  report.warnings = check_conditions(plan, 1, wiring.p, wiring.r_max());

  const std::size_t m = config.grid.size();
  const std::size_t cells = config.estimators.size() * m;
  std::vector<double> sum(cells, 0.0);
  std::vector<double> sum_sq(cells, 0.0);
  long used = 0;
  for (const auto& res : results) {
    if (!res.ok) {
      ++report.dropped;
      report.drop_reasons.push_back(res.reason);
      continue;
    }
    ++used;
    for (std::size_t c = 0; c < cells; ++c) {
      sum[c] += res.t[c];
      sum_sq[c] += res.t[c] * res.t[c];
    }
  }
  // Second pass for the SD so it does not suffer from cancellation.
  std::vector<double> centered(cells, 0.0);
  for (const auto& res : results) {
    if (!res.ok)
      continue;
    for (std::size_t c = 0; c < cells; ++c) {
      const double d = res.t[c] - sum[c] / static_cast<double>(used);
      centered[c] += d * d;
    }
  }

  for (std::size_t e = 0; e < config.estimators.size(); ++e) {
    for (std::size_t g = 0; g < m; ++g) {
      const std::size_t c = e * m + g;
      SimCell cell;
      cell.model = config.model;
      cell.estimator = config.estimators[e];
      cell.x1 = config.grid[g];
      cell.replications = used;
      cell.dropped = report.dropped;
      if (used > 0) {
        const double R_used = static_cast<double>(used);
        cell.bias = sum[c] / R_used;
        cell.mse = sum_sq[c] / R_used;
        cell.sd = used > 1 ? std::sqrt(centered[c] / (R_used - 1.0)) : 0.0;
      } else {
        cell.bias = cell.mse = cell.sd = std::numeric_limits<double>::quiet_NaN();
      }
      report.cells.push_back(cell);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

std::string
format_g9(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void
write_report_csv(const SimReport& report, std::ostream& out)
{
  out << "model,estimator,x1,SD,BIAS,MSE,R,dropped\n";
  for (const auto& c : report.cells) {
    out << c.model << ',' << tag(c.estimator) << ',' << format_g9(c.x1) << ',' << format_g9(c.sd) << ','
        << format_g9(c.bias) << ',' << format_g9(c.mse) << ',' << c.replications << ',' << c.dropped << '\n';
  }
}

std::vector<SimCell>
read_report_csv(std::istream& in)
{
  std::string line;
  if (!std::getline(in, line))
    throw DataError("report CSV is empty");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (line != "model,estimator,x1,SD,BIAS,MSE,R,dropped")
    throw DataError("unexpected report CSV header '" + line + "'");
  std::vector<SimCell> cells;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');)
      f.push_back(tok);
    if (f.size() != 8)
      throw DataError("report CSV row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                      " fields, expected 8");
    try {
      SimCell c;
      c.model = std::stoi(f[0]);
      c.estimator = parse_estimator(f[1]);
      c.x1 = std::stod(f[2]);
      c.sd = std::stod(f[3]);
      c.bias = std::stod(f[4]);
      c.mse = std::stod(f[5]);
      c.replications = std::stol(f[6]);
      c.dropped = std::stol(f[7]);
      cells.push_back(c);
    } catch (const std::exception& e) {
      throw DataError("report CSV row " + std::to_string(row) + ": " + e.what());
    }
  }
  return cells;
}

std::string
format_report_table(const SimReport& report)
{
  std::ostringstream os;
  os << "Model " << report.model << ", n = " << report.n << ", replications used " << report.used() << " of "
     << report.requested << " (dropped " << report.dropped << ")\n";
  os << report.plan.describe() << "\n\n";
  const char* metrics[] = { "SD", "BIAS", "MSE" };
  os << std::left << std::setw(6) << "" << std::setw(8) << "x1";
  for (auto id : report.estimators)
    os << std::right << std::setw(9) << tag(id);
  os << '\n';
  for (int m = 0; m < 3; ++m) {
    for (std::size_t g = 0; g < report.grid.size(); ++g) {
      os << std::left << std::setw(6) << (g == 0 ? metrics[m] : "");
      std::ostringstream x;
      x << std::fixed << std::setprecision(1) << report.grid[g];
      os << std::setw(8) << x.str();
      for (auto id : report.estimators) {
        const auto& c = report.cell(id, report.grid[g]);
        const double v = m == 0 ? c.sd : m == 1 ? c.bias : c.mse;
        os << std::right << std::setw(9) << std::fixed << std::setprecision(3) << v;
      }
      os << '\n';
    }
    os << '\n';
  }
  if (!report.warnings.empty()) {
    os << "Condition warnings:\n";
    for (const auto& w : report.warnings)
      os << "  " << w.condition << ": " << w.message << '\n';
  }
  return os.str();
}

std::vector<EfficiencyPoint>
relative_efficiency(const SimReport& report, EstimatorId baseline)
{
  std::vector<EfficiencyPoint> out;
  for (double x : report.grid) {
    const double base = report.cell(baseline, x).sd;
    for (auto id : report.estimators)
      out.push_back({ id, x, report.cell(id, x).sd / base });
  }
  return out;
}

} // namespace cate
