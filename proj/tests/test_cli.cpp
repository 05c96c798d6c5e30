#include "cate/cli.hpp"
#include "cate/errors.hpp"
#include "cate/simulation.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cate;
using namespace cate::cli;
namespace fs = std::filesystem;

namespace {

//! Fresh scratch directory below the system temp dir.
fs::path
scratch(const std::string& name)
{
  static std::atomic<int> counter{ 0 };
  const fs::path dir = fs::temp_directory_path() / ("cate_cli_" + name + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string
slurp(const fs::path& f)
{
  std::ifstream in(f, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void
spit(const fs::path& f, const std::string& text)
{
  std::ofstream out(f, std::ios::binary);
  out << text;
}

//! Model 1 sample as a CSV with columns y, d, x1, x2.
std::string
model1_csv(long n, std::uint64_t seed)
{
  Rng rng(seed);
  const auto draw = generate_model(1, n, rng);
  std::ostringstream os;
  os << "y,d,x1,x2\n";
  for (Index i = 0; i < draw.data.n(); ++i)
    os << format_g9(draw.data.Y(i)) << ',' << draw.data.D[static_cast<std::size_t>(i)] << ','
       << format_g9(draw.data.X(i, 0)) << ',' << format_g9(draw.data.X(i, 1)) << '\n';
  return os.str();
}

const char* kEstimateToml = R"(
[estimate]
data = "sample.csv"
output_dir = "out"
y = "y"
d = "d"
x = ["x1", "x2"]
x1 = ["x1"]
estimators = ["PR", "SR", "NR", "N", "S", "P"]

[estimate.directions.arm1]
method = "known"
beta = [[1.0, 0.0], [0.0, 1.0]]

[estimate.directions.arm0]
method = "known"
beta = []

[estimate.bandwidth.h1]
a = 0.05
exponent = "1/9"

[estimate.bandwidth.h2]
a = 0.5
exponent = "1/4"

[estimate.bandwidth.h4]
a = 0.6
exponent = "1/4"
)";

int
line_count(const std::string& s)
{
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

} // namespace

TEST_SUITE("cli")
{
  TEST_CASE("bundled simulation configs parse")
  {
    const fs::path dir = fs::path(CATE_SOURCE_DIR) / "configs";
    for (int m : { 1, 2, 3 }) {
      CAPTURE(m);
      const auto job = load_simulate_config(dir / ("model" + std::to_string(m) + "_panel1.toml"));
      CHECK(job.config.model == m);
      CHECK(job.config.replications == 500);
      CHECK(job.config.grid.size() == 5);
      CHECK(job.variance_draws == 100000);
      // "1/9" is read as a fraction.
      CHECK(job.config.h1.exponent == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
      CHECK(job.output_dir.is_absolute() == dir.is_absolute());
    }
    CHECK(load_simulate_config(dir / "model3_panel1.toml").config.n == 500);
    CHECK(load_simulate_config(dir / "model1_panel1.toml").config.h2.a == 0.5);
  }

  TEST_CASE("bundled estimate config parses")
  {
    const auto job = load_estimate_config(fs::path(CATE_SOURCE_DIR) / "configs" / "estimate_example.toml");
    CHECK(job.roles.x.size() == 2);
    CHECK(job.grid.count == 40);
    CHECK(job.directions.arm1.kind == DirectionMethod::Kind::known);
    CHECK(job.directions.r_max() == 2);
    CHECK(job.clip == 0.01);
  }

  TEST_CASE("simulate config errors name the key")
  {
    auto message = [](const std::string& toml) -> std::string {
      try {
        parse_simulate_config(toml);
      } catch (const ConfigError& e) {
        return e.what();
      }
      return "";
    };
    CHECK(message("[simulate]\nmodel = 1\nspeed = 3\n").find("simulate.speed") != std::string::npos);
    CHECK(message("[simulate]\nn = 200\n").find("simulate.model") != std::string::npos);
    CHECK(message("[simulate]\nmodel = 7\n").find("simulate.model") != std::string::npos);
    CHECK(message("[simulate]\nmodel = 1\n[simulate.bandwidth.h1]\na = 0.1\nexponent = \"1/x\"\n")
            .find("simulate.bandwidth.h1.exponent") != std::string::npos);
    CHECK(message("[simulate]\nmodel = 1\n[simulate.bandwidth.h1]\na = 0.1\nvalue = 0.2\n")
            .find("simulate.bandwidth.h1") != std::string::npos);
    CHECK(message("[simulate]\nmodel = 1\nvariance_draws = 500\n").find("variance_draws") != std::string::npos);
    CHECK(message("[simulate\nmodel = 1\n").find("line 1") != std::string::npos);
    CHECK(message("[other]\nmodel = 1\n").find("[simulate]") != std::string::npos);
    CHECK(message("[simulate]\nmodel = 1\nestimators = [\"XX\"]\n") != "");
  }

  TEST_CASE("kernel order parity is enforced unless overridden")
  {
    const std::string bad = "[simulate]\nmodel = 2\n[simulate.orders]\ns1 = 4\ns2 = 2\ns4 = 2\n";
    CHECK_THROWS_WITH_AS(parse_simulate_config(bad), doctest::Contains("simulate.orders"), ConfigError);
  }

  TEST_CASE("parity override")
  {
    const std::string bad = "[simulate]\nmodel = 2\noverride = true\n[simulate.orders]\ns1 = 4\ns2 = 2\ns4 = 2\n";
    const auto job = parse_simulate_config(bad);
    CHECK(job.override_orders);
    CHECK(job.config.orders == KernelOrders{ 4, 2, 2 });
  }

  TEST_CASE("estimate config validation")
  {
    CHECK_NOTHROW(parse_estimate_config(kEstimateToml));
    std::string toml = kEstimateToml;
    CHECK_THROWS_AS(parse_estimate_config(toml + "colour = 1\n"), ConfigError);

    std::string oracle = toml;
    oracle.replace(oracle.find("[\"PR\""), 1, "[\"OR\", ");
    CHECK_THROWS_AS(parse_estimate_config(oracle), ConfigError);

    std::string no_h2 = toml;
    no_h2.erase(no_h2.find("[estimate.bandwidth.h2]"));
    no_h2 += "[estimate.bandwidth.h4]\na = 0.6\nexponent = \"1/4\"\n";
    CHECK_THROWS_WITH_AS(parse_estimate_config(no_h2), doctest::Contains("estimate.bandwidth.h2"), ConfigError);

    std::string x1_outside = toml;
    x1_outside.replace(x1_outside.find("x1 = [\"x1\"]"), 11, "x1 = [\"x9\"]");
    CHECK_THROWS_AS(parse_estimate_config(x1_outside), ConfigError);
  }

  TEST_CASE("CSV reader reports the failing line")
  {
    std::istringstream ok("\xEF\xBB\xBF\"y\", d ,x1\n1.5,1,0.2\n 2 ,0,-0.1\n");
    const auto t = read_numeric_csv(ok);
    CHECK(t.header == std::vector<std::string>{ "y", "d", "x1" });
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][0] == 2.0);
    CHECK(t.column("x1") == 2);
    CHECK(t.column("zz") == -1);

    std::istringstream bad("y,d,x1\n1,1,0.2\n1,0,abc\n");
    CHECK_THROWS_WITH_AS(read_numeric_csv(bad), doctest::Contains("line 3"), DataError);
    std::istringstream short_row("y,d,x1\n1,1\n");
    CHECK_THROWS_WITH_AS(read_numeric_csv(short_row), doctest::Contains("line 2"), DataError);
    std::istringstream dup("y,y\n1,2\n");
    CHECK_THROWS_AS(read_numeric_csv(dup), DataError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_numeric_csv(empty), DataError);
  }

  TEST_CASE("treatment column must be binary")
  {
    std::istringstream in("y,d,x1,x2\n1,1,0.1,1\n0,0,0.2,1\n3,2,0.3,1\n");
    const auto t = read_numeric_csv(in);
    ColumnRoles roles{ "y", "d", { "x1", "x2" }, { "x1" } };
    CHECK_THROWS_WITH_AS(sample_from_table(t, roles), doctest::Contains("row 3"), DataError);
    roles.y = "outcome";
    CHECK_THROWS_AS(sample_from_table(t, roles), ConfigError);
  }

  TEST_CASE("default quantile grid")
  {
    Rng rng(8);
    const auto draw = generate_model(1, 500, rng);
    const RowMatrix g = quantile_grid(draw.data, GridSpec{});
    REQUIRE(g.rows() == 40);
    CHECK(g.cols() == 1);
    for (Index i = 1; i < g.rows(); ++i)
      CHECK(g(i, 0) > g(i - 1, 0));
    // Type-7 quantile at 0.025 from a sorted copy.
    std::vector<double> x;
    for (Index i = 0; i < draw.data.n(); ++i)
      x.push_back(draw.data.X(i, 0));
    std::sort(x.begin(), x.end());
    const double h = 0.025 * 499.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    CHECK(g(0, 0) == doctest::Approx(x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo])).epsilon(1e-14));
  }

  TEST_CASE("estimate on a model 1 fixture gives finite curves")
  {
    const fs::path dir = scratch("fixture");
    spit(dir / "sample.csv", model1_csv(500, 77));
    spit(dir / "job.toml", kEstimateToml);
    std::ostringstream out;
    std::ostringstream err;
    REQUIRE(cmd_estimate(dir / "job.toml", out, err) == kOk);
    const std::string curves = slurp(dir / "out" / "curves.csv");
    CHECK(curves.rfind("estimator,x1,tau_hat,missing\n", 0) == 0);
    CHECK(line_count(curves) == 1 + 6 * 40);
    CHECK(curves.find("nan") == std::string::npos);
    CHECK(fs::exists(dir / "out" / "plot_NR.csv"));
    CHECK(line_count(slurp(dir / "out" / "plot_PR.csv")) == 41);

    const auto job = load_estimate_config(dir / "job.toml");
    std::ifstream in(job.data);
    const auto data = sample_from_table(read_numeric_csv(in), job.roles);
    const auto res = run_estimate(job, data);
    for (const auto& c : res.curves) {
      CAPTURE(tag(c.id));
      for (Index g = 0; g < c.size(); ++g)
        CHECK(std::isfinite(c.estimates(g)));
    }
  }

  TEST_CASE("known-direction SR matches a direct call")
  {
    Rng rng(31);
    const auto draw = generate_model(1, 400, rng);
    auto job = parse_estimate_config(kEstimateToml);
    job.estimators = { EstimatorId::SRCATE };
    const auto res = run_estimate(job, draw.data);

    DirectionSet ds;
    ds.beta1 = Eigen::MatrixXd::Identity(2, 2);
    ds.beta0 = Eigen::MatrixXd(2, 0);
    ds.source = DirectionSet::Source::known;
    const RowMatrix grid = quantile_grid(draw.data, job.grid);
    const auto direct = srcate(draw.data, ds, grid, res.plan, MassPolicy::mark_missing);
    REQUIRE(res.curves.size() == 1);
    for (Index g = 0; g < grid.rows(); ++g)
      CHECK(std::abs(res.curves[0].estimates(g) - direct.estimates(g)) <= 1e-12);
  }

  TEST_CASE("estimate exit codes")
  {
    const fs::path dir = scratch("codes");
    spit(dir / "sample.csv", "y,d,x1,x2\n1,1,0.1,1\n0,0,0.2,1\n3,2,0.3,1\n");
    spit(dir / "job.toml", kEstimateToml);
    std::ostringstream out;
    std::ostringstream err;
    CHECK(cmd_estimate(dir / "job.toml", out, err) == kDataError);
    CHECK(err.str().find("error kind=data exit=3") != std::string::npos);

    std::string oracle = kEstimateToml;
    oracle.replace(oracle.find("[\"PR\""), 1, "[\"OR\", ");
    spit(dir / "oracle.toml", oracle);
    std::ostringstream err2;
    CHECK(cmd_estimate(dir / "oracle.toml", out, err2) == kConfigError);
    CHECK(err2.str().find("exit=2") != std::string::npos);

    std::ostringstream err3;
    CHECK(cmd_estimate(dir / "missing.toml", out, err3) == kConfigError);
  }

  TEST_CASE("simulate writes identical files for equal seeds")
  {
    const std::string toml = "[simulate]\nmodel = 1\nreplications = 6\nseed = 11\noutput_dir = \"run\"\n";
    const fs::path a = scratch("sim_a");
    const fs::path b = scratch("sim_b");
    spit(a / "c.toml", toml);
    spit(b / "c.toml", toml);
    std::ostringstream out;
    std::ostringstream err;
    REQUIRE(cmd_simulate(a / "c.toml", out, err, Overrides{ {}, 1u }) == kOk);
    REQUIRE(cmd_simulate(b / "c.toml", out, err, Overrides{ {}, 3u }) == kOk);
    const std::string ra = slurp(a / "run" / "report.csv");
    CHECK(line_count(ra) == 41);
    CHECK(ra == slurp(b / "run" / "report.csv"));
    CHECK(slurp(a / "run" / "efficiency.csv") == slurp(b / "run" / "efficiency.csv"));
    CHECK(fs::exists(a / "run" / "report.txt"));
    CHECK_FALSE(fs::exists(a / "run" / "variance.csv"));

    const fs::path c = scratch("sim_c");
    REQUIRE(cmd_simulate(a / "c.toml", out, err, Overrides{ c / "elsewhere", {} }) == kOk);
    CHECK(slurp(c / "elsewhere" / "report.csv") == ra);
  }

  TEST_CASE("kernel-check exit codes")
  {
    std::ostringstream out;
    std::ostringstream err;
    CHECK(cmd_kernel_check(KernelCheckJob{ 4, KernelFamily::gaussian, 1 }, out, err) == kOk);
    CHECK(out.str().find("power,moment,tolerance,expect,result") != std::string::npos);
    CHECK(cmd_kernel_check(KernelCheckJob{ 2, KernelFamily::compact, 1 }, out, err) == kOk);
    CHECK(cmd_kernel_check(KernelCheckJob{ 3, KernelFamily::gaussian, 1 }, out, err) == kConfigError);
    CHECK(err.str().find("exit=2") != std::string::npos);
  }

  TEST_CASE("sample command writes a readable model draw")
  {
    const fs::path dir = scratch("sample");
    std::ostringstream out;
    std::ostringstream err;
    REQUIRE(cmd_sample(SampleJob{ 2, 120, 9, dir / "s.csv" }, out, err) == kOk);
    std::ifstream in(dir / "s.csv");
    const auto table = read_numeric_csv(in);
    CHECK(table.header == std::vector<std::string>{ "y", "d", "x1", "x2", "x3", "x4" });
    const auto data = sample_from_table(table, ColumnRoles{ "y", "d", { "x1", "x2", "x3", "x4" }, { "x1" } });
    Rng rng(9);
    const auto draw = generate_model(2, 120, rng);
    REQUIRE(data.n() == 120);
    for (Index i = 0; i < 120; ++i) {
      CHECK(data.D[static_cast<std::size_t>(i)] == draw.data.D[static_cast<std::size_t>(i)]);
      CHECK(data.X(i, 3) == doctest::Approx(draw.data.X(i, 3)).epsilon(1e-8));
    }
    CHECK(cmd_sample(SampleJob{ 4, 120, 9, dir / "t.csv" }, out, err) == kConfigError);
  }

  TEST_CASE("error lines escape quotes and newlines")
  {
    CHECK(error_line("config", 2, "bad \"x\"\nnext") == R"(error kind=config exit=2 message="bad \"x\"\nnext")");
    CHECK(error_line("data", 3, "a\\b") == R"(error kind=data exit=3 message="a\\b")");
  }

  TEST_CASE("curve CSV layout")
  {
    CateCurve c;
    c.id = EstimatorId::NRCATE;
    c.grid = RowMatrix(2, 1);
    c.grid << 0.1, 0.2;
    c.estimates = Eigen::VectorXd(2);
    c.estimates << 1.0 / 3.0, std::nan("");
    c.missing = { false, true };
    std::ostringstream os;
    write_curves_csv({ c }, os);
    CHECK(os.str() == "estimator,x1,tau_hat,missing\nNR,0.1,0.333333333,0\nNR,0.2,nan,1\n");
  }
}
