#pragma once

#include "cate/kernels.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cate {

enum class BandwidthRole
{
  h1, //!< second-step smoother over X1
  h2, //!< full-covariate first stage
  h4  //!< index first stage
};

std::string to_string(BandwidthRole role);

//! Kernel orders (s1, s2, s4) for the three smoothers.
struct KernelOrders
{
  int s1{ 4 };
  int s2{ 2 };
  int s4{ 2 };

  bool operator==(const KernelOrders&) const = default;
};

//! Smallest even order not below `dim`.
int even_order_at_least(long dim);

//! s2 = p rounded up to even, s1 = s2 + 2, s4 = r_max rounded up to even
//! (at least 2).
KernelOrders default_orders(long p, long r_max);

//! How one bandwidth was obtained.
struct BandwidthSource
{
  enum class Kind
  {
    rule,    //!< h = a * n^(-exponent)
    explicit_value
  };

  Kind kind{ Kind::explicit_value };
  double a{ 0.0 };
  double exponent{ 0.0 };

  static BandwidthSource rule(double a, double exponent) { return { Kind::rule, a, exponent }; }
  static BandwidthSource fixed() { return { Kind::explicit_value, 0.0, 0.0 }; }
  std::string describe() const;
};

struct RuleValue
{
  double h;
  double exponent;
};

//! Rate-rule bandwidth a * n^(-exponent) with
//!   h1: exponent = 1 / (k + 2 s1 - delta)
//!   h2: exponent = 1 / (p + s2 + delta)
//!   h4: exponent = 1 / (r_max + s4 + delta)
RuleValue bandwidth_rule(BandwidthRole role,
                         double a,
                         long n,
                         long k,
                         long p,
                         long r_max,
                         const KernelOrders& orders,
                         double delta = 0.0);

//! Bandwidths, kernel orders and kernel family for one estimation run.
struct BandwidthPlan
{
  double h1{ 0.0 };
  double h2{ 0.0 };
  double h4{ 0.0 };
  KernelOrders orders;
  KernelFamily family{ KernelFamily::gaussian };
  BandwidthSource src1;
  BandwidthSource src2;
  BandwidthSource src4;

  double h(BandwidthRole role) const;
  const BandwidthSource& source(BandwidthRole role) const;

  //! K1 on R^k, K2 on R^p, K4 on R^r.
  KernelSpec k1(long k) const { return cached_kernel(family, orders.s1, static_cast<int>(k)); }
  KernelSpec k2(long p) const { return cached_kernel(family, orders.s2, static_cast<int>(p)); }
  KernelSpec k4(long r) const { return cached_kernel(family, orders.s4, static_cast<int>(r)); }

  //! Throws std::invalid_argument on a nonpositive or non-finite bandwidth
  //! or an odd or nonpositive order.
  void validate() const;

  std::string describe() const;
};

//! Per-role specification that resolves to a bandwidth once n is known.
struct BandwidthSpec
{
  std::optional<double> value;    //!< explicit bandwidth
  std::optional<double> a;        //!< rule constant
  std::optional<double> exponent; //!< explicit exponent; derived from the rule when absent
  double delta{ 0.0 };
};

//! Resolve the three specs into a plan for a sample of size n.
BandwidthPlan resolve_plan(const BandwidthSpec& h1,
                           const BandwidthSpec& h2,
                           const BandwidthSpec& h4,
                           const KernelOrders& orders,
                           KernelFamily family,
                           long n,
                           long k,
                           long p,
                           long r_max);

//! A condition that the plan's rates do not satisfy.
struct ConditionWarning
{
  std::string condition; //!< "A1" .. "A7"
  std::string message;
};

//! Rate conditions (A1)-(A7) evaluated on the bandwidth exponents. Conditions
//! that involve an explicit (non-rule) bandwidth are reported as uncheckable.
//! `uses_first_stage_*` drop the checks for smoothers not in use.
std::vector<ConditionWarning> check_conditions(const BandwidthPlan& plan,
                                               long k,
                                               long p,
                                               long r_max,
                                               bool uses_h2 = true,
                                               bool uses_h4 = true);

//! Order-parity rules: even orders, s2 = default for p, s1 = s2 + 2, s4 =
//! default for r_max. Returns one message per violated rule.
std::vector<std::string> check_order_parity(const KernelOrders& orders, long p, long r_max);

} // namespace cate
