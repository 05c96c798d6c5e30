#include "cate/cli.hpp"

#include "cate/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace cate::cli {

std::string
error_line(std::string_view kind, int code, std::string_view message)
{
  std::string esc;
  for (char c : message) {
    if (c == '\n')
      esc += "\\n";
    else if (c == '\r')
      esc += "\\r";
    else {
      if (c == '"' || c == '\\')
        esc += '\\';
      esc += c;
    }
  }
  return "error kind=" + std::string(kind) + " exit=" + std::to_string(code) + " message=\"" + esc + "\"";
}

int
report_exception(std::ostream& err)
{
  auto emit = [&](const char* kind, int code, const char* what) {
    err << error_line(kind, code, what) << '\n';
    return code;
  };
  try {
    throw;
  } catch (const ConfigError& e) {
    return emit("config", kConfigError, e.what());
  } catch (const UnsupportedRank& e) {
    return emit("config", kConfigError, e.what());
  } catch (const DataError& e) {
    return emit("data", kDataError, e.what());
  } catch (const DegenerateMass& e) {
    return emit("numeric", kNumericError, e.what());
  } catch (const Error& e) {
    // Separation, rank deficiency, non-convergence, quadrature failures.
    return emit("numeric", kNumericError, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return emit("io", kConfigError, e.what());
  } catch (const std::invalid_argument& e) {
    return emit("config", kConfigError, e.what());
  } catch (const std::exception& e) {
    return emit("internal", 1, e.what());
  }
}

namespace {

std::ofstream
open_output(const std::filesystem::path& file)
{
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw std::filesystem::filesystem_error("cannot write output file",
                                            file,
                                            std::make_error_code(std::errc::io_error));
  return out;
}

void
finish_output(std::ofstream& out, const std::filesystem::path& file)
{
  out.close();
  if (!out)
    throw std::filesystem::filesystem_error("failed while writing", file, std::make_error_code(std::errc::io_error));
}

template<typename Fn>
void
write_file(const std::filesystem::path& file, Fn&& fn)
{
  auto out = open_output(file);
  fn(out);
  finish_output(out, file);
}

void
print_warnings(const std::vector<ConditionWarning>& warnings, std::ostream& err)
{
  for (const auto& w : warnings)
    err << "warning condition=" << w.condition << " " << w.message << '\n';
}

std::vector<Index>
columns_to_indices(const std::vector<std::string>& names, const std::vector<std::string>& x, const char* key)
{
  std::vector<Index> out;
  for (const auto& name : names) {
    const auto it = std::find(x.begin(), x.end(), name);
    if (it == x.end())
      throw ConfigError(std::string(key) + ": column '" + name + "' is not listed in x");
    out.push_back(static_cast<Index>(it - x.begin()));
  }
  return out;
}

} // namespace

void
write_variance_csv(const std::vector<VarianceProfile>& profiles, std::ostream& out)
{
  out << "x1,kind,sigma2,se,asy_sd\n";
  for (const auto& prof : profiles) {
    for (auto kind : kAllVarianceKinds) {
      const auto& est = prof[kind];
      out << format_g9(prof.x1(0)) << ',' << to_string(kind) << ',' << format_g9(est.value) << ','
          << format_g9(est.se) << ',' << format_g9(asy_sd(std::max(est.value, 0.0), prof.f_x1, prof.k1_norm_sq))
          << '\n';
    }
  }
}

void
write_curves_csv(const std::vector<CateCurve>& curves,
                 std::ostream& out,
                 const std::vector<std::string>& coordinate_names)
{
  const Index k = curves.empty() ? 1 : curves.front().grid.cols();
  std::vector<std::string> names = coordinate_names;
  if (static_cast<Index>(names.size()) != k) {
    names.clear();
    for (Index j = 0; j < k; ++j)
      names.push_back(k == 1 ? "x1" : "x1_" + std::to_string(j + 1));
  }
  out << "estimator";
  for (const auto& n : names)
    out << ',' << n;
  out << ",tau_hat,missing\n";
  for (const auto& c : curves) {
    for (Index g = 0; g < c.size(); ++g) {
      out << tag(c.id);
      for (Index j = 0; j < k; ++j)
        out << ',' << format_g9(c.grid(g, j));
      const bool miss = c.missing[static_cast<std::size_t>(g)];
      out << ',' << (miss ? std::string("nan") : format_g9(c.estimates(g))) << ',' << (miss ? 1 : 0) << '\n';
    }
  }
}

EstimateResult
run_estimate(const EstimateJob& job, const SampleSet& data)
{
  EstimateResult res;
  res.data = data;
  const long n = static_cast<long>(data.n());
  const long k = static_cast<long>(data.k());
  const long p = static_cast<long>(data.p());
  auto uses = [&](EstimatorId id) {
    return std::find(job.estimators.begin(), job.estimators.end(), id) != job.estimators.end();
  };

  long r_max = job.directions.r_max();
  if (uses(EstimatorId::SRCATE)) {
    res.directions.beta1 = estimate_directions(data, 1, job.directions.arm1);
    res.directions.beta0 = estimate_directions(data, 0, job.directions.arm0);
    res.directions.source = (job.directions.arm1.kind == DirectionMethod::Kind::known &&
                             job.directions.arm0.kind == DirectionMethod::Kind::known)
                              ? DirectionSet::Source::known
                              : DirectionSet::Source::estimated;
    r_max = std::max<long>(res.directions.r1(), res.directions.r0());
  }
  const KernelOrders orders = job.orders ? *job.orders : default_orders(p, r_max);
  try {
    res.plan = resolve_plan(job.h1, job.h2, job.h4, orders, job.family, n, k, p, r_max);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bandwidth: ") + e.what());
  }
  res.warnings = check_conditions(res.plan,
                                  k,
                                  p,
                                  r_max,
                                  uses(EstimatorId::NRCATE) || uses(EstimatorId::NCATE),
                                  uses(EstimatorId::SRCATE) || uses(EstimatorId::SCATE));

  const RowMatrix grid = quantile_grid(data, job.grid);
  const auto policy = MassPolicy::mark_missing;
  std::vector<Index> features = columns_to_indices(job.propensity_features, job.roles.x, "propensity.features");
  if (features.empty())
    for (Index j = 0; j < data.p(); ++j)
      features.push_back(j);

  auto basis = [&](const std::vector<std::string>& terms) {
    std::vector<std::string> t = terms;
    if (t.empty()) {
      t.push_back("1");
      for (const auto& c : job.roles.x)
        t.push_back(c);
    }
    try {
      return BasisSpec::parse(t, job.roles.x);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("basis: ") + e.what());
    }
  };

  for (EstimatorId id : job.estimators) {
    CateCurve curve;
    switch (id) {
      case EstimatorId::PRCATE:
        curve = prcate(data, basis(job.basis1), basis(job.basis0), grid, res.plan, policy);
        break;
      case EstimatorId::NRCATE:
        curve = nrcate(data, grid, res.plan, policy, job.leave_one_out);
        break;
      case EstimatorId::SRCATE:
        curve = srcate(data, res.directions, grid, res.plan, policy, job.leave_one_out);
        break;
      case EstimatorId::PCATE:
        curve = ipw_cate(data, fit_propensity_logistic(data, features, job.clip), grid, res.plan, policy);
        break;
      case EstimatorId::SCATE:
        curve = ipw_cate(data,
                         fit_propensity_single_index(data, res.plan.h4, res.plan.k4(1), features, job.clip),
                         grid,
                         res.plan,
                         policy);
        break;
      case EstimatorId::NCATE:
        curve = ipw_cate(
          data, fit_propensity_nonparametric(data, res.plan.h2, res.plan.k2(p), job.clip), grid, res.plan, policy);
        break;
      case EstimatorId::ORCATE:
      case EstimatorId::OCATE:
        throw ConfigError(tag(id) + " needs the true regression or propensity function and is simulation-only");
    }
    for (Index g = 0; g < curve.size(); ++g)
      if (curve.missing[static_cast<std::size_t>(g)])
        res.missing_notes.push_back(tag(id) + " point " + std::to_string(g + 1) +
                                    ": second-step kernel mass degenerate, value left missing");
    res.curves.push_back(std::move(curve));
  }
  return res;
}

int
cmd_estimate(const std::filesystem::path& config_file, std::ostream& out, std::ostream& err, const Overrides& overrides)
{
  try {
    EstimateJob job = load_estimate_config(config_file);
    if (overrides.output_dir)
      job.output_dir = *overrides.output_dir;

    std::ifstream in(job.data, std::ios::binary);
    if (!in)
      throw DataError("cannot open data file " + job.data.string());
    const CsvTable table = read_numeric_csv(in);
    const SampleSet data = sample_from_table(table, job.roles);

    const EstimateResult res = run_estimate(job, data);
    print_warnings(res.warnings, err);

    std::filesystem::create_directories(job.output_dir);
    write_file(job.output_dir / "curves.csv", [&](std::ostream& o) { write_curves_csv(res.curves, o, job.roles.x1); });
    for (const auto& c : res.curves) {
      write_file(job.output_dir / ("plot_" + tag(c.id) + ".csv"), [&](std::ostream& o) {
        for (const auto& name : job.roles.x1)
          o << name << ',';
        o << "tau_hat\n";
        for (Index g = 0; g < c.size(); ++g) {
          if (c.missing[static_cast<std::size_t>(g)])
            continue;
          for (Index j = 0; j < c.grid.cols(); ++j)
            o << format_g9(c.grid(g, j)) << ',';
          o << format_g9(c.estimates(g)) << '\n';
        }
      });
    }

    out << "n=" << data.n() << " p=" << data.p() << " k=" << data.k() << '\n';
    out << res.plan.describe() << '\n';
    for (const auto& note : res.missing_notes)
      err << "missing " << note << '\n';
    bool too_many = false;
    for (const auto& c : res.curves) {
      const auto miss = std::count(c.missing.begin(), c.missing.end(), true);
      out << tag(c.id) << ": " << c.size() - miss << " of " << c.size() << " grid points estimated\n";
      if (static_cast<double>(miss) > job.max_missing_fraction * static_cast<double>(c.size()))
        too_many = true;
    }
    out << "wrote " << (job.output_dir / "curves.csv").string() << '\n';
    if (too_many) {
      err << error_line("numeric",
                        kNumericError,
                        "missing grid points exceed max_missing_fraction = " + format_g9(job.max_missing_fraction))
          << '\n';
      return kNumericError;
    }
    return kOk;
  } catch (...) {
    return report_exception(err);
  }
}

int
cmd_simulate(const std::filesystem::path& config_file, std::ostream& out, std::ostream& err, const Overrides& overrides)
{
  try {
    SimulateJob job = load_simulate_config(config_file);
    if (overrides.output_dir)
      job.output_dir = *overrides.output_dir;
    if (overrides.threads)
      job.config.threads = *overrides.threads;

    const SimReport report = run_replications(job.config);
    print_warnings(report.warnings, err);

    std::filesystem::create_directories(job.output_dir);
    write_file(job.output_dir / "report.csv", [&](std::ostream& o) { write_report_csv(report, o); });
    write_file(job.output_dir / "report.txt", [&](std::ostream& o) { o << format_report_table(report); });
    const bool has_nr = std::find(report.estimators.begin(), report.estimators.end(), EstimatorId::NRCATE) !=
                        report.estimators.end();
    if (has_nr) {
      write_file(job.output_dir / "efficiency.csv", [&](std::ostream& o) {
        o << "estimator,x1,sd_ratio_to_NR\n";
        for (const auto& e : relative_efficiency(report))
          o << tag(e.estimator) << ',' << format_g9(e.x1) << ',' << format_g9(e.ratio) << '\n';
      });
    }
    if (job.variance_draws > 0) {
      RowMatrix grid(static_cast<Index>(report.grid.size()), 1);
      for (std::size_t g = 0; g < report.grid.size(); ++g)
        grid(static_cast<Index>(g), 0) = report.grid[g];
      const auto profiles = variance_profiles(oracle_model(report.model),
                                              grid,
                                              kernel_l2_norm_sq(report.plan.k1(1)),
                                              job.variance_draws,
                                              job.config.seed,
                                              job.config.threads);
      write_file(job.output_dir / "variance.csv", [&](std::ostream& o) { write_variance_csv(profiles, o); });
    }

    out << format_report_table(report);
    out << "dropped " << report.dropped << " of " << report.requested << " replications\n";
    for (const auto& reason : report.drop_reasons)
      err << "dropped " << reason << '\n';
    out << "wrote " << (job.output_dir / "report.csv").string() << '\n';
    if (static_cast<double>(report.dropped) > job.max_dropped_fraction * static_cast<double>(report.requested)) {
      err << error_line("numeric",
                        kNumericError,
                        std::to_string(report.dropped) + " dropped replications exceed max_dropped_fraction = " +
                          format_g9(job.max_dropped_fraction))
          << '\n';
      return kNumericError;
    }
    return kOk;
  } catch (...) {
    return report_exception(err);
  }
}

int
cmd_kernel_check(const KernelCheckJob& job, std::ostream& out, std::ostream& err)
{
  try {
    if (job.order < 2 || job.order % 2 != 0)
      throw ConfigError("kernel order must be a positive even integer, got " + std::to_string(job.order));
    if (job.dim < 1)
      throw ConfigError("kernel dimension must be positive");
    const KernelSpec kernel = make_kernel(job.family, job.order, job.dim);
    out << kernel.describe() << '\n';
    out << "power,moment,tolerance,expect,result\n";
    bool all = true;
    for (const auto& m : check_moments(kernel)) {
      const char* expect = m.power == 0 ? "one" : m.expect_zero ? "zero" : "nonzero";
      out << m.power << ',' << std::setprecision(9) << std::scientific << m.value << ',' << std::setprecision(1)
          << m.tolerance << std::defaultfloat << ',' << expect << ',' << (m.pass ? "pass" : "FAIL") << '\n';
      all = all && m.pass;
    }
    out << "L2 norm squared: " << std::setprecision(12) << kernel_l2_norm_sq(kernel) << '\n';
    return all ? kOk : kNumericError;
  } catch (...) {
    return report_exception(err);
  }
}

void
write_sample_csv(const SampleSet& data, std::ostream& out)
{
  out << "y,d";
  for (Index j = 0; j < data.p(); ++j)
    out << ",x" << j + 1;
  out << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    out << format_g9(data.Y(i)) << ',' << data.D[static_cast<std::size_t>(i)];
    for (Index j = 0; j < data.p(); ++j)
      out << ',' << format_g9(data.X(i, j));
    out << '\n';
  }
}

int
cmd_sample(const SampleJob& job, std::ostream& out, std::ostream& err)
{
  try {
    if (job.model < 1 || job.model > 3)
      throw ConfigError("model: must be 1, 2 or 3");
    if (job.n < 2)
      throw ConfigError("n: must be at least 2");
    Rng rng(job.seed);
    const auto draw = generate_model(job.model, job.n, rng);
    if (job.output.has_parent_path())
      std::filesystem::create_directories(job.output.parent_path());
    write_file(job.output, [&](std::ostream& o) { write_sample_csv(draw.data, o); });
    out << "wrote " << job.output.string() << " (model " << job.model << ", n = " << job.n << ")\n";
    return kOk;
  } catch (...) {
    return report_exception(err);
  }
}

} // namespace cate::cli
