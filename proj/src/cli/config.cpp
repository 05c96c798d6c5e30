#include "cate/cli.hpp"

#include "cate/errors.hpp"

#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cate::cli {

namespace {

[[noreturn]] void
fail(const std::string& key, const std::string& what)
{
  throw ConfigError(key + ": " + what);
}

//! Rejects keys outside `allowed`, which catches misspelt options early.
void
check_keys(const toml::table& t, const std::string& where, std::initializer_list<std::string_view> allowed)
{
  const std::set<std::string_view> ok(allowed);
  for (const auto& [k, v] : t) {
    (void)v;
    if (!ok.count(k.str()))
      fail(where.empty() ? std::string(k.str()) : where + "." + std::string(k.str()), "unknown key");
  }
}

const toml::table*
sub_table(const toml::table& t, std::string_view key, const std::string& where)
{
  const toml::node* n = t.get(key);
  if (!n)
    return nullptr;
  if (!n->is_table())
    fail(where + "." + std::string(key), "expected a table");
  return n->as_table();
}

double
as_number(const toml::node& n, const std::string& key)
{
  if (auto v = n.value<double>())
    return *v;
  fail(key, "expected a number");
}

//! A number or a fraction string such as "1/9".
double
as_rate(const toml::node& n, const std::string& key)
{
  if (n.is_number())
    return as_number(n, key);
  if (auto s = n.value<std::string>()) {
    const auto slash = s->find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        const double v = std::stod(*s, &used);
        if (used == s->size())
          return v;
      } else {
        const std::string num = s->substr(0, slash);
        const std::string den = s->substr(slash + 1);
        std::size_t u1 = 0;
        std::size_t u2 = 0;
        const double a = std::stod(num, &u1);
        const double b = std::stod(den, &u2);
        if (u1 == num.size() && u2 == den.size() && b != 0.0)
          return a / b;
      }
    } catch (const std::exception&) {
    }
    fail(key, "cannot read '" + *s + "' as a number or fraction");
  }
  fail(key, "expected a number or a fraction string");
}

long
as_integer(const toml::node& n, const std::string& key)
{
  if (auto v = n.value_exact<int64_t>())
    return static_cast<long>(*v);
  fail(key, "expected an integer");
}

bool
as_bool(const toml::node& n, const std::string& key)
{
  if (auto v = n.value_exact<bool>())
    return *v;
  fail(key, "expected true or false");
}

std::string
as_string(const toml::node& n, const std::string& key)
{
  if (auto v = n.value_exact<std::string>())
    return *v;
  fail(key, "expected a string");
}

const toml::array&
as_array(const toml::node& n, const std::string& key)
{
  if (!n.is_array())
    fail(key, "expected an array");
  return *n.as_array();
}

std::vector<double>
number_list(const toml::node& n, const std::string& key)
{
  std::vector<double> out;
  const auto& arr = as_array(n, key);
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(as_number(arr[i], key + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::string>
string_list(const toml::node& n, const std::string& key)
{
  std::vector<std::string> out;
  const auto& arr = as_array(n, key);
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(as_string(arr[i], key + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<EstimatorId>
estimator_list(const toml::node& n, const std::string& key)
{
  std::vector<EstimatorId> out;
  for (const auto& s : string_list(n, key)) {
    try {
      out.push_back(parse_estimator(s));
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  }
  if (out.empty())
    fail(key, "no estimators listed");
  return out;
}

BandwidthSpec
bandwidth_spec(const toml::table& t, const std::string& where)
{
  check_keys(t, where, { "value", "a", "exponent", "delta" });
  BandwidthSpec s;
  if (auto* n = t.get("value"))
    s.value = as_number(*n, where + ".value");
  if (auto* n = t.get("a"))
    s.a = as_number(*n, where + ".a");
  if (auto* n = t.get("exponent"))
    s.exponent = as_rate(*n, where + ".exponent");
  if (auto* n = t.get("delta"))
    s.delta = as_rate(*n, where + ".delta");
  if (s.value && (s.a || s.exponent))
    fail(where, "give either value or a rule (a, exponent), not both");
  if (!s.value && !s.a)
    fail(where, "needs value or a");
  return s;
}

//! Fills any bandwidth present in `[<where>.bandwidth]`.
void
read_bandwidths(const toml::table& t, const std::string& where, BandwidthSpec& h1, BandwidthSpec& h2, BandwidthSpec& h4)
{
  const toml::table* bw = sub_table(t, "bandwidth", where);
  if (!bw)
    return;
  const std::string base = where + ".bandwidth";
  check_keys(*bw, base, { "h1", "h2", "h4" });
  if (auto* b = sub_table(*bw, "h1", base))
    h1 = bandwidth_spec(*b, base + ".h1");
  if (auto* b = sub_table(*bw, "h2", base))
    h2 = bandwidth_spec(*b, base + ".h2");
  if (auto* b = sub_table(*bw, "h4", base))
    h4 = bandwidth_spec(*b, base + ".h4");
}

std::optional<KernelOrders>
read_orders(const toml::table& t, const std::string& where, const KernelOrders& defaults)
{
  const toml::table* o = sub_table(t, "orders", where);
  if (!o)
    return std::nullopt;
  const std::string base = where + ".orders";
  check_keys(*o, base, { "s1", "s2", "s4" });
  KernelOrders out = defaults;
  if (auto* n = o->get("s1"))
    out.s1 = static_cast<int>(as_integer(*n, base + ".s1"));
  if (auto* n = o->get("s2"))
    out.s2 = static_cast<int>(as_integer(*n, base + ".s2"));
  if (auto* n = o->get("s4"))
    out.s4 = static_cast<int>(as_integer(*n, base + ".s4"));
  return out;
}

KernelFamily
read_family(const toml::node& n, const std::string& key)
{
  try {
    return parse_kernel_family(as_string(n, key));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    fail(key, e.what());
  }
}

//! Parity problems become a ConfigError unless overridden.
void
enforce_parity(const KernelOrders& orders, long p, long r_max, bool override_orders, const std::string& where)
{
  const auto problems = check_order_parity(orders, p, r_max);
  if (problems.empty() || override_orders)
    return;
  std::string msg;
  for (const auto& s : problems)
    msg += (msg.empty() ? "" : "; ") + s;
  fail(where + ".orders", msg + " (set override = true to accept)");
}

toml::table
parse_document(std::string_view text)
{
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "line " << e.source().begin.line << ", column " << e.source().begin.column << ": "
       << e.description();
    throw ConfigError(os.str());
  }
}

const toml::table&
section(const toml::table& doc, std::string_view name)
{
  const toml::node* n = doc.get(name);
  if (!n || !n->is_table())
    throw ConfigError("missing [" + std::string(name) + "] section");
  return *n->as_table();
}

std::filesystem::path
resolve_path(const std::filesystem::path& base_dir, const std::string& p)
{
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base_dir / path).lexically_normal();
}

std::string
read_file(const std::filesystem::path& file)
{
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw ConfigError("cannot open config file " + file.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

DirectionMethod
direction_method(const toml::table& t, const std::string& where)
{
  check_keys(t, where, { "method", "rank", "beta" });
  std::string method = "index-ls";
  if (auto* n = t.get("method"))
    method = as_string(*n, where + ".method");
  if (method == "index-ls" || method == "index_ls") {
    long r = 1;
    if (auto* n = t.get("rank"))
      r = as_integer(*n, where + ".rank");
    if (t.get("beta"))
      fail(where + ".beta", "only used with method = \"known\"");
    return DirectionMethod::index_ls(r);
  }
  if (method != "known")
    fail(where + ".method", "expected \"known\" or \"index-ls\", got \"" + method + "\"");
  const toml::node* b = t.get("beta");
  if (!b)
    fail(where + ".beta", "required with method = \"known\" (p rows of r numbers; [] for r = 0)");
  const auto& rows = as_array(*b, where + ".beta");
  if (rows.empty())
    return DirectionMethod::known(Eigen::MatrixXd(0, 0));
  std::vector<std::vector<double>> m;
  for (std::size_t i = 0; i < rows.size(); ++i)
    m.push_back(number_list(rows[i], where + ".beta[" + std::to_string(i) + "]"));
  const auto r = m.front().size();
  Eigen::MatrixXd beta(static_cast<Index>(m.size()), static_cast<Index>(r));
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != r)
      fail(where + ".beta", "rows have different lengths");
    for (std::size_t j = 0; j < r; ++j)
      beta(static_cast<Index>(i), static_cast<Index>(j)) = m[i][j];
  }
  return DirectionMethod::known(std::move(beta));
}

} // namespace

long
DirectionChoice::r_max() const
{
  auto r = [](const DirectionMethod& m) { return m.kind == DirectionMethod::Kind::known ? m.matrix.cols() : m.rank; };
  return std::max<long>(r(arm1), r(arm0));
}

SimulateJob
parse_simulate_config(std::string_view toml_text, const std::filesystem::path& base_dir)
{
  const toml::table doc = parse_document(toml_text);
  const toml::table& t = section(doc, "simulate");
  const std::string w = "simulate";
  check_keys(t,
             w,
             { "model", "n", "replications", "grid", "seed", "threads", "estimators", "directions", "clip",
               "kernel", "output_dir", "override", "max_dropped_fraction", "variance_draws", "bandwidth",
               "orders" });

  SimulateJob job;
  const toml::node* model = t.get("model");
  if (!model)
    fail(w + ".model", "required");
  const long m = as_integer(*model, w + ".model");
  if (m < 1 || m > 3)
    fail(w + ".model", "must be 1, 2 or 3");
  job.config = panel1_config(static_cast<int>(m));
  SimConfig& c = job.config;

  if (auto* n = t.get("n"))
    c.n = as_integer(*n, w + ".n");
  if (auto* n = t.get("replications"))
    c.replications = as_integer(*n, w + ".replications");
  if (auto* n = t.get("grid"))
    c.grid = number_list(*n, w + ".grid");
  if (auto* n = t.get("seed")) {
    const long s = as_integer(*n, w + ".seed");
    if (s < 0)
      fail(w + ".seed", "must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (auto* n = t.get("threads")) {
    const long th = as_integer(*n, w + ".threads");
    if (th < 0)
      fail(w + ".threads", "must be nonnegative (0 = all cores)");
    c.threads = static_cast<unsigned>(th);
  }
  if (auto* n = t.get("estimators"))
    c.estimators = estimator_list(*n, w + ".estimators");
  if (auto* n = t.get("directions")) {
    try {
      c.directions = parse_direction_policy(as_string(*n, w + ".directions"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(w + ".directions", e.what());
    }
  }
  if (auto* n = t.get("clip"))
    c.clip = as_number(*n, w + ".clip");
  if (auto* n = t.get("kernel"))
    c.family = read_family(*n, w + ".kernel");
  if (auto* n = t.get("output_dir"))
    job.output_dir = resolve_path(base_dir, as_string(*n, w + ".output_dir"));
  if (auto* n = t.get("override"))
    job.override_orders = as_bool(*n, w + ".override");
  if (auto* n = t.get("max_dropped_fraction")) {
    job.max_dropped_fraction = as_number(*n, w + ".max_dropped_fraction");
    if (job.max_dropped_fraction < 0.0 || job.max_dropped_fraction > 1.0)
      fail(w + ".max_dropped_fraction", "must lie in [0, 1]");
  }
  if (auto* n = t.get("variance_draws")) {
    job.variance_draws = static_cast<int>(as_integer(*n, w + ".variance_draws"));
    if (job.variance_draws != 0 && job.variance_draws < 10000)
      fail(w + ".variance_draws", "use 0 or at least 10000");
  }
  read_bandwidths(t, w, c.h1, c.h2, c.h4);

  const auto wiring = model_wiring(c.model);
  c.orders = read_orders(t, w, default_orders(wiring.p, wiring.r_max()));
  enforce_parity(c.resolved_orders(), wiring.p, wiring.r_max(), job.override_orders, w);
  c.validate();
  return job;
}

EstimateJob
parse_estimate_config(std::string_view toml_text, const std::filesystem::path& base_dir)
{
  const toml::table doc = parse_document(toml_text);
  const toml::table& t = section(doc, "estimate");
  const std::string w = "estimate";
  check_keys(t,
             w,
             { "data", "output_dir", "y", "d", "x", "x1", "estimators", "kernel", "override", "clip",
               "leave_one_out", "max_missing_fraction", "grid", "bandwidth", "orders", "basis", "directions",
               "propensity" });

  EstimateJob job;
  auto required = [&](std::string_view key) -> const toml::node& {
    const toml::node* n = t.get(key);
    if (!n)
      fail(w + "." + std::string(key), "required");
    return *n;
  };
  job.data = resolve_path(base_dir, as_string(required("data"), w + ".data"));
  job.roles.y = as_string(required("y"), w + ".y");
  job.roles.d = as_string(required("d"), w + ".d");
  job.roles.x = string_list(required("x"), w + ".x");
  job.roles.x1 = string_list(required("x1"), w + ".x1");
  if (job.roles.x.empty())
    fail(w + ".x", "needs at least one column");
  if (job.roles.x1.empty())
    fail(w + ".x1", "needs at least one column");
  for (const auto& c : job.roles.x1)
    if (std::find(job.roles.x.begin(), job.roles.x.end(), c) == job.roles.x.end())
      fail(w + ".x1", "column '" + c + "' is not listed in x");

  job.estimators = estimator_list(required("estimators"), w + ".estimators");
  for (auto id : job.estimators)
    if (is_oracle(id))
      fail(w + ".estimators", tag(id) + " needs the true regression or propensity function and is simulation-only");

  if (auto* n = t.get("output_dir"))
    job.output_dir = resolve_path(base_dir, as_string(*n, w + ".output_dir"));
  if (auto* n = t.get("kernel"))
    job.family = read_family(*n, w + ".kernel");
  if (auto* n = t.get("override"))
    job.override_orders = as_bool(*n, w + ".override");
  if (auto* n = t.get("clip")) {
    job.clip = as_number(*n, w + ".clip");
    if (!(job.clip > 0.0 && job.clip < 0.5))
      fail(w + ".clip", "must lie in (0, 0.5)");
  }
  if (auto* n = t.get("leave_one_out"))
    job.leave_one_out = as_bool(*n, w + ".leave_one_out");
  if (auto* n = t.get("max_missing_fraction")) {
    job.max_missing_fraction = as_number(*n, w + ".max_missing_fraction");
    if (job.max_missing_fraction < 0.0 || job.max_missing_fraction > 1.0)
      fail(w + ".max_missing_fraction", "must lie in [0, 1]");
  }

  if (auto* g = sub_table(t, "grid", w)) {
    const std::string base = w + ".grid";
    check_keys(*g, base, { "points", "count", "lower_quantile", "upper_quantile" });
    if (auto* n = g->get("points")) {
      const auto& arr = as_array(*n, base + ".points");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string key = base + ".points[" + std::to_string(i) + "]";
        if (arr[i].is_array())
          job.grid.points.push_back(number_list(arr[i], key));
        else
          job.grid.points.push_back({ as_number(arr[i], key) });
        if (job.grid.points.back().size() != job.roles.x1.size())
          fail(key, "has " + std::to_string(job.grid.points.back().size()) + " coordinates, x1 has " +
                      std::to_string(job.roles.x1.size()));
      }
      if (job.grid.points.empty())
        fail(base + ".points", "grid is empty");
    }
    if (auto* n = g->get("count"))
      job.grid.count = static_cast<int>(as_integer(*n, base + ".count"));
    if (auto* n = g->get("lower_quantile"))
      job.grid.lower_quantile = as_number(*n, base + ".lower_quantile");
    if (auto* n = g->get("upper_quantile"))
      job.grid.upper_quantile = as_number(*n, base + ".upper_quantile");
  }
  if (job.grid.points.empty()) {
    if (job.grid.count < 1)
      fail(w + ".grid.count", "must be positive");
    if (!(0.0 <= job.grid.lower_quantile && job.grid.lower_quantile <= job.grid.upper_quantile &&
          job.grid.upper_quantile <= 1.0))
      fail(w + ".grid", "need 0 <= lower_quantile <= upper_quantile <= 1");
    if (job.roles.x1.size() != 1)
      fail(w + ".grid.points", "required when x1 has more than one column");
  }

  if (auto* b = sub_table(t, "basis", w)) {
    check_keys(*b, w + ".basis", { "arm1", "arm0" });
    if (auto* n = b->get("arm1"))
      job.basis1 = string_list(*n, w + ".basis.arm1");
    if (auto* n = b->get("arm0"))
      job.basis0 = string_list(*n, w + ".basis.arm0");
  }
  if (auto* d = sub_table(t, "directions", w)) {
    check_keys(*d, w + ".directions", { "arm1", "arm0" });
    if (auto* a = sub_table(*d, "arm1", w + ".directions"))
      job.directions.arm1 = direction_method(*a, w + ".directions.arm1");
    if (auto* a = sub_table(*d, "arm0", w + ".directions"))
      job.directions.arm0 = direction_method(*a, w + ".directions.arm0");
  }
  if (auto* pr = sub_table(t, "propensity", w)) {
    check_keys(*pr, w + ".propensity", { "features" });
    if (auto* n = pr->get("features"))
      job.propensity_features = string_list(*n, w + ".propensity.features");
  }

  const toml::table* bw = sub_table(t, "bandwidth", w);
  if (!bw)
    fail(w + ".bandwidth", "required ([estimate.bandwidth.h1] and friends)");
  read_bandwidths(t, w, job.h1, job.h2, job.h4);
  if (!job.h1.value && !job.h1.a)
    fail(w + ".bandwidth.h1", "required");
  auto uses = [&](std::initializer_list<EstimatorId> ids) {
    for (auto id : ids)
      if (std::find(job.estimators.begin(), job.estimators.end(), id) != job.estimators.end())
        return true;
    return false;
  };
  if (uses({ EstimatorId::NRCATE, EstimatorId::NCATE }) && !job.h2.value && !job.h2.a)
    fail(w + ".bandwidth.h2", "required by NR and N");
  if (uses({ EstimatorId::SRCATE, EstimatorId::SCATE }) && !job.h4.value && !job.h4.a)
    fail(w + ".bandwidth.h4", "required by SR and S");
  // Unused roles still resolve to something positive so the plan validates.
  for (BandwidthSpec* s : { &job.h2, &job.h4 })
    if (!s->value && !s->a)
      s->value = 1.0;

  const long p = static_cast<long>(job.roles.x.size());
  job.orders = read_orders(t, w, default_orders(p, job.directions.r_max()));
  enforce_parity(job.orders ? *job.orders : default_orders(p, job.directions.r_max()),
                 p,
                 job.directions.r_max(),
                 job.override_orders,
                 w);
  return job;
}

SimulateJob
load_simulate_config(const std::filesystem::path& file)
{
  return parse_simulate_config(read_file(file), file.parent_path());
}

EstimateJob
load_estimate_config(const std::filesystem::path& file)
{
  return parse_estimate_config(read_file(file), file.parent_path());
}

} // namespace cate::cli
