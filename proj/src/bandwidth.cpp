#include "cate/bandwidth.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace cate {

std::string
to_string(BandwidthRole role)
{
  switch (role) {
    case BandwidthRole::h1:
      return "h1";
    case BandwidthRole::h2:
      return "h2";
    case BandwidthRole::h4:
      return "h4";
  }
  return "?";
}

int
even_order_at_least(long dim)
{
  if (dim <= 2)
    return 2;
  return static_cast<int>(dim % 2 == 0 ? dim : dim + 1);
}

KernelOrders
default_orders(long p, long r_max)
{
  KernelOrders o;
  o.s2 = even_order_at_least(p);
  o.s1 = o.s2 + 2;
  o.s4 = even_order_at_least(r_max);
  return o;
}

std::string
BandwidthSource::describe() const
{
  if (kind == Kind::explicit_value)
    return "explicit";
  std::ostringstream os;
  os.precision(9);
  os << "rule(a=" << a << ", exponent=" << exponent << ")";
  return os.str();
}

RuleValue
bandwidth_rule(BandwidthRole role,
               double a,
               long n,
               long k,
               long p,
               long r_max,
               const KernelOrders& orders,
               double delta)
{
  if (!(a > 0.0) || !std::isfinite(a))
    throw std::invalid_argument("bandwidth constant a must be positive");
  if (n < 1)
    throw std::invalid_argument("sample size must be positive");
  double denom = 0.0;
  switch (role) {
    case BandwidthRole::h1:
      denom = static_cast<double>(k + 2L * orders.s1) - delta;
      break;
    case BandwidthRole::h2:
      denom = static_cast<double>(p + orders.s2) + delta;
      break;
    case BandwidthRole::h4:
      denom = static_cast<double>(r_max + orders.s4) + delta;
      break;
    default:
      throw std::invalid_argument("invalid bandwidth role");
  }
  if (!(denom > 0.0))
    throw std::invalid_argument("bandwidth rule exponent denominator must be positive");
  const double exponent = 1.0 / denom;
  return { a * std::pow(static_cast<double>(n), -exponent), exponent };
}

double
BandwidthPlan::h(BandwidthRole role) const
{
  switch (role) {
    case BandwidthRole::h1:
      return h1;
    case BandwidthRole::h2:
      return h2;
    case BandwidthRole::h4:
      return h4;
  }
  return 0.0;
}

const BandwidthSource&
BandwidthPlan::source(BandwidthRole role) const
{
  switch (role) {
    case BandwidthRole::h1:
      return src1;
    case BandwidthRole::h2:
      return src2;
    case BandwidthRole::h4:
      return src4;
  }
  return src1;
}

void
BandwidthPlan::validate() const
{
  for (auto role : { BandwidthRole::h1, BandwidthRole::h2, BandwidthRole::h4 }) {
    const double v = h(role);
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(to_string(role) + " must be positive and finite");
  }
  for (int s : { orders.s1, orders.s2, orders.s4 })
    if (s < 2 || s % 2 != 0)
      throw std::invalid_argument("kernel orders must be positive even integers");
}

std::string
BandwidthPlan::describe() const
{
  std::ostringstream os;
  os.precision(9);
  os << "h1=" << h1 << " [" << src1.describe() << "], h2=" << h2 << " [" << src2.describe()
     << "], h4=" << h4 << " [" << src4.describe() << "], s1=" << orders.s1 << ", s2=" << orders.s2
     << ", s4=" << orders.s4 << ", kernel=" << to_string(family);
  return os.str();
}

namespace {

std::pair<double, BandwidthSource>
resolve_one(const BandwidthSpec& spec,
            BandwidthRole role,
            const KernelOrders& orders,
            long n,
            long k,
            long p,
            long r_max)
{
  if (spec.value) {
    if (spec.a || spec.exponent)
      throw std::invalid_argument(to_string(role) + ": give either an explicit value or a rule, not both");
    return { *spec.value, BandwidthSource::fixed() };
  }
  if (!spec.a)
    throw std::invalid_argument(to_string(role) + ": missing bandwidth value or rule constant a");
  if (spec.exponent) {
    if (!(*spec.exponent > 0.0))
      throw std::invalid_argument(to_string(role) + ": exponent must be positive");
    const double h = *spec.a * std::pow(static_cast<double>(n), -*spec.exponent);
    return { h, BandwidthSource::rule(*spec.a, *spec.exponent) };
  }
  const auto rv = bandwidth_rule(role, *spec.a, n, k, p, r_max, orders, spec.delta);
  return { rv.h, BandwidthSource::rule(*spec.a, rv.exponent) };
}

} // namespace

BandwidthPlan
resolve_plan(const BandwidthSpec& h1,
             const BandwidthSpec& h2,
             const BandwidthSpec& h4,
             const KernelOrders& orders,
             KernelFamily family,
             long n,
             long k,
             long p,
             long r_max)
{
  BandwidthPlan plan;
  plan.orders = orders;
  plan.family = family;
  std::tie(plan.h1, plan.src1) = resolve_one(h1, BandwidthRole::h1, orders, n, k, p, r_max);
  std::tie(plan.h2, plan.src2) = resolve_one(h2, BandwidthRole::h2, orders, n, k, p, r_max);
  std::tie(plan.h4, plan.src4) = resolve_one(h4, BandwidthRole::h4, orders, n, k, p, r_max);
  plan.validate();
  return plan;
}

namespace {

// Strict inequalities on rate exponents; a value within this of zero counts
// as the boundary case and fails.
constexpr double kRateSlack = 1e-12;

bool
positive(double v)
{
  return v > kRateSlack;
}

bool
negative(double v)
{
  return v < -kRateSlack;
}

std::string
fmt(double v)
{
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

} // namespace

std::vector<ConditionWarning>
check_conditions(const BandwidthPlan& plan, long k, long p, long r_max, bool uses_h2, bool uses_h4)
{
  std::vector<ConditionWarning> out;
  const bool r1 = plan.src1.kind == BandwidthSource::Kind::rule;
  const bool r2 = plan.src2.kind == BandwidthSource::Kind::rule;
  const bool r4 = plan.src4.kind == BandwidthSource::Kind::rule;
  const double e1 = plan.src1.exponent;
  const double e2 = plan.src2.exponent;
  const double e4 = plan.src4.exponent;
  const double kk = static_cast<double>(k);
  const auto& o = plan.orders;
  auto warn = [&](const char* c, std::string m) { out.push_back({ c, std::move(m) }); };

  if (!r1) {
    warn("A1", "h1 is explicit; rate condition not checkable");
  } else {
    if (!positive(e1))
      warn("A1", "h1 does not shrink (exponent " + fmt(e1) + ")");
    if (!positive(1.0 - kk * e1))
      warn("A1", "n h1^k does not diverge (1 - k*e1 = " + fmt(1.0 - kk * e1) + ")");
    if (!negative(1.0 - (2.0 * o.s1 + kk) * e1))
      warn("A1", "n h1^(2 s1 + k) does not vanish (1 - (2 s1 + k) e1 = " +
                   fmt(1.0 - (2.0 * o.s1 + kk) * e1) + ")");
  }

  if (uses_h2) {
    if (o.s2 < p)
      warn("A2", "s2 = " + std::to_string(o.s2) + " is below p = " + std::to_string(p));
    if (plan.family != KernelFamily::compact)
      warn("A2", "K2 is not compactly supported");
    if (!r2) {
      warn("A3", "h2 is explicit; rate condition not checkable");
    } else {
      if (!positive(e2))
        warn("A3", "h2 does not shrink (exponent " + fmt(e2) + ")");
      const double a3 = 1.0 - static_cast<double>(p + o.s2) * e2;
      if (!positive(a3))
        warn("A3", "log n / (n h2^(p + s2)) does not vanish (1 - (p + s2) e2 = " + fmt(a3) + ")");
    }
    if (r1 && r2) {
      const double first = (2.0 * o.s2 + kk) * e1 - 2.0 * o.s2 * e2;
      const double second = 1.0 - kk * e1 - 2.0 * o.s2 * e2;
      if (!negative(first))
        warn("A4", "h2^(2 s2) h1^(-2 s2 - k) does not vanish (rate " + fmt(first) + ")");
      if (!negative(second))
        warn("A4", "n h1^k h2^(2 s2) does not vanish (rate " + fmt(second) + ")");
    } else {
      warn("A4", "h1 or h2 is explicit; rate condition not checkable");
    }
  }

  if (uses_h4) {
    if (o.s4 < r_max)
      warn("A5", "s4 = " + std::to_string(o.s4) + " is below max r = " + std::to_string(r_max));
    if (plan.family != KernelFamily::compact)
      warn("A5", "K4 is not compactly supported");
    if (!r4) {
      warn("A6", "h4 is explicit; rate condition not checkable");
    } else {
      if (!positive(e4))
        warn("A6", "h4 does not shrink (exponent " + fmt(e4) + ")");
      const double a6 = 1.0 - static_cast<double>(r_max + o.s4) * e4;
      if (!positive(a6))
        warn("A6", "log n / (n h4^(r + s4)) does not vanish (1 - (r + s4) e4 = " + fmt(a6) + ")");
    }
    if (r1 && r4) {
      const double first = (2.0 * o.s4 + kk) * e1 - 2.0 * o.s4 * e4;
      const double second = 1.0 - kk * e1 - 2.0 * o.s4 * e4;
      if (!negative(first))
        warn("A7", "h4^(2 s4) h1^(-2 s4 - k) does not vanish (rate " + fmt(first) + ")");
      if (!negative(second))
        warn("A7", "n h1^k h4^(2 s4) does not vanish (rate " + fmt(second) + ")");
    } else {
      warn("A7", "h1 or h4 is explicit; rate condition not checkable");
    }
  }
  return out;
}

std::vector<std::string>
check_order_parity(const KernelOrders& orders, long p, long r_max)
{
  std::vector<std::string> out;
  for (auto [name, s] : { std::pair{ "s1", orders.s1 }, { "s2", orders.s2 }, { "s4", orders.s4 } })
    if (s < 2 || s % 2 != 0)
      out.push_back(std::string(name) + " = " + std::to_string(s) + " is not a positive even order");
  const auto expected = default_orders(p, r_max);
  if (orders.s2 != expected.s2)
    out.push_back("s2 = " + std::to_string(orders.s2) + " but p = " + std::to_string(p) +
                  " calls for s2 = " + std::to_string(expected.s2));
  if (orders.s1 != orders.s2 + 2)
    out.push_back("s1 = " + std::to_string(orders.s1) + " but s2 + 2 = " +
                  std::to_string(orders.s2 + 2));
  if (orders.s4 != expected.s4)
    out.push_back("s4 = " + std::to_string(orders.s4) + " but max r = " + std::to_string(r_max) +
                  " calls for s4 = " + std::to_string(expected.s4));
  return out;
}

} // namespace cate
