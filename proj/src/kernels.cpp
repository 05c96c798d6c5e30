#include "cate/kernels.hpp"

#include "cate/errors.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cate {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kGaussianHalfWidth = 12.0;
constexpr int kMaxOrder = 20;
constexpr int kMaxStackDim = 16;

void
require_even_order(int order)
{
  if (order < 2 || order % 2 != 0)
    throw std::invalid_argument("kernel order must be a positive even integer, got " +
                                std::to_string(order));
  if (order > kMaxOrder)
    throw std::invalid_argument("kernel order above " + std::to_string(kMaxOrder) +
                                " is not supported");
}

// Probabilists' Hermite polynomial He_n as coefficients of u^j.
std::vector<double>
hermite(int n)
{
  std::vector<double> prev{ 1.0 };
  if (n == 0)
    return prev;
  std::vector<double> cur{ 0.0, 1.0 };
  for (int k = 1; k < n; ++k) {
    std::vector<double> next(static_cast<std::size_t>(k) + 2, 0.0);
    for (std::size_t j = 0; j < cur.size(); ++j)
      next[j + 1] += cur[j];
    for (std::size_t j = 0; j < prev.size(); ++j)
      next[j] -= k * prev[j];
    prev = std::move(cur);
    cur = std::move(next);
  }
  return cur;
}

template<class F>
double
integrate_univariate(KernelFamily family, F&& f)
{
  if (family == KernelFamily::compact) {
    // Exact for polynomial integrands up to degree 59.
    return boost::math::quadrature::gauss<double, 30>::integrate(f, -1.0, 1.0);
  }
  double error = 0.0;
  double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
    f, -kGaussianHalfWidth, kGaussianHalfWidth, 15, 1e-14, &error);
  if (!std::isfinite(value) || error > 1e-9)
    throw QuadratureError("kernel quadrature did not converge (error estimate " +
                          std::to_string(error) + ")");
  return value;
}

double
vanishing_tolerance(KernelFamily family)
{
  return family == KernelFamily::gaussian ? 1e-8 : 1e-6;
}

} // namespace

std::string
to_string(KernelFamily family)
{
  return family == KernelFamily::gaussian ? "gaussian" : "compact";
}

KernelFamily
parse_kernel_family(std::string_view name)
{
  if (name == "gaussian")
    return KernelFamily::gaussian;
  if (name == "compact" || name == "compact-polynomial")
    return KernelFamily::compact;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

double
KernelSpec::profile_at(double u2) const
{
  double acc = 0.0;
  for (auto it = profile_.rbegin(); it != profile_.rend(); ++it)
    acc = acc * u2 + *it;
  return acc;
}

double
KernelSpec::univariate(double u) const
{
  const double u2 = u * u;
  if (family_ == KernelFamily::compact)
    return u2 > 1.0 ? 0.0 : profile_at(u2);
  return profile_at(u2) * kInvSqrt2Pi * std::exp(-0.5 * u2);
}

// Squares are sorted first so the result does not depend on coordinate order.
double
KernelSpec::combine(double* squares, int n, double offset) const
{
  if (n > 1)
    std::sort(squares, squares + n);
  if (family_ == KernelFamily::compact) {
    if (squares[n - 1] > 1.0)
      return 0.0;
    double value = 1.0;
    for (int j = 0; j < n; ++j)
      value *= profile_at(squares[j]);
    return value;
  }
  double sum = 0.0;
  double poly = 1.0;
  for (int j = 0; j < n; ++j) {
    sum += squares[j];
    if (profile_.size() > 1)
      poly *= profile_at(squares[j]);
  }
  return poly * std::pow(kInvSqrt2Pi, n) * std::exp(-0.5 * (sum - offset));
}

double
KernelSpec::operator()(std::span<const double> u) const
{
  if (static_cast<int>(u.size()) != dim_)
    throw std::invalid_argument("kernel argument has dimension " + std::to_string(u.size()) +
                                ", kernel has " + std::to_string(dim_));
  if (dim_ == 1)
    return univariate(u[0]);
  std::array<double, kMaxStackDim> stack{};
  std::vector<double> heap;
  double* squares = stack.data();
  if (dim_ > kMaxStackDim) {
    heap.resize(static_cast<std::size_t>(dim_));
    squares = heap.data();
  }
  for (int j = 0; j < dim_; ++j)
    squares[j] = u[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)];
  return combine(squares, dim_);
}

double
KernelSpec::scaled(const double* a, const double* b, double inv_h) const
{
  if (dim_ == 1)
    return univariate((a[0] - b[0]) * inv_h);
  std::array<double, kMaxStackDim> stack{};
  std::vector<double> heap;
  double* squares = stack.data();
  if (dim_ > kMaxStackDim) {
    heap.resize(static_cast<std::size_t>(dim_));
    squares = heap.data();
  }
  for (int j = 0; j < dim_; ++j) {
    const double u = (a[j] - b[j]) * inv_h;
    squares[j] = u * u;
  }
  return combine(squares, dim_);
}

double
KernelSpec::scaled_sq_distance(const double* a, const double* b, double inv_h) const
{
  double sum = 0.0;
  for (int j = 0; j < dim_; ++j) {
    const double u = (a[j] - b[j]) * inv_h;
    sum += u * u;
  }
  return sum;
}

double
KernelSpec::scaled_shifted(const double* a, const double* b, double inv_h, double offset) const
{
  if (family_ == KernelFamily::compact)
    return scaled(a, b, inv_h);
  std::array<double, kMaxStackDim> stack{};
  std::vector<double> heap;
  double* squares = stack.data();
  if (dim_ > kMaxStackDim) {
    heap.resize(static_cast<std::size_t>(dim_));
    squares = heap.data();
  }
  for (int j = 0; j < dim_; ++j) {
    const double u = (a[j] - b[j]) * inv_h;
    squares[j] = u * u;
  }
  return combine(squares, dim_, offset);
}

KernelSpec
KernelSpec::with_smoothness(int s_star) const
{
  if (s_star < 0)
    throw std::invalid_argument("smoothness order must be nonnegative");
  KernelSpec copy = *this;
  copy.smoothness_ = s_star;
  return copy;
}

std::string
KernelSpec::describe() const
{
  std::ostringstream os;
  os << to_string(family_) << "(order=" << order_ << ", dim=" << dim_ << ")";
  return os.str();
}

namespace {

void
verify_or_throw(const KernelSpec& kernel)
{
  for (const auto& check : check_moments(kernel)) {
    if (!check.pass) {
      std::ostringstream os;
      os << kernel.describe() << " failed moment check for power " << check.power
         << ": value " << check.value;
      throw Error(os.str());
    }
  }
}

std::vector<double>
measure_moments(KernelFamily family, int order, const KernelSpec& kernel)
{
  std::vector<double> moments;
  for (int j = 0; j <= order; ++j) {
    moments.push_back(integrate_univariate(
      family, [&](double u) { return std::pow(u, j) * kernel.univariate(u); }));
  }
  return moments;
}

} // namespace

KernelSpec
make_gaussian_kernel(int order)
{
  require_even_order(order);
  const int r = order / 2;
  std::vector<double> profile(static_cast<std::size_t>(r), 0.0);
  double scale = 1.0; // 2^j j!
  for (int j = 0; j < r; ++j) {
    if (j > 0)
      scale *= 2.0 * j;
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    const auto he = hermite(2 * j);
    for (std::size_t m = 0; m < he.size(); m += 2)
      profile[m / 2] += sign * he[m] / scale;
  }

  KernelSpec k;
  k.family_ = KernelFamily::gaussian;
  k.order_ = order;
  k.dim_ = 1;
  k.smoothness_ = order;
  k.boundary_continuity_ = -1;
  k.profile_ = std::move(profile);
  k.moments_ = measure_moments(k.family_, order, k);
  verify_or_throw(k);
  return k;
}

KernelSpec
make_compact_kernel(int order)
{
  require_even_order(order);
  const int r = order / 2;
  // Unknown coefficients q_j of Q(u^2) = sum_j q_j u^(2j); constraint i is
  // int u^(2i) (1 - u^2) Q(u^2) du = [i == 0].
  Eigen::MatrixXd a(r, r);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(r);
  rhs(0) = 1.0;
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      const double e = 2.0 * (i + j);
      a(i, j) = 2.0 / (e + 1.0) - 2.0 / (e + 3.0);
    }
  }
  const Eigen::VectorXd q = a.fullPivLu().solve(rhs);

  std::vector<double> profile(static_cast<std::size_t>(r) + 1, 0.0);
  for (int j = 0; j < r; ++j) {
    profile[static_cast<std::size_t>(j)] += q(j);
    profile[static_cast<std::size_t>(j) + 1] -= q(j);
  }

  KernelSpec k;
  k.family_ = KernelFamily::compact;
  k.order_ = order;
  k.dim_ = 1;
  // (1 - u^2) vanishes at the boundary but its first derivative does not.
  k.boundary_continuity_ = 0;
  k.smoothness_ = 0;
  k.profile_ = std::move(profile);
  k.moments_ = measure_moments(k.family_, order, k);
  verify_or_throw(k);
  return k;
}

KernelSpec
product_kernel(const KernelSpec& base, int dim)
{
  if (base.dim() != 1)
    throw std::invalid_argument("product_kernel requires a univariate base kernel");
  if (dim < 1)
    throw std::invalid_argument("product kernel dimension must be positive");
  KernelSpec k = base;
  k.dim_ = dim;
  return k;
}

KernelSpec
make_kernel(KernelFamily family, int order, int dim)
{
  KernelSpec base =
    family == KernelFamily::gaussian ? make_gaussian_kernel(order) : make_compact_kernel(order);
  return dim == 1 ? base : product_kernel(base, dim);
}

KernelSpec
cached_kernel(KernelFamily family, int order, int dim)
{
  static std::mutex mutex;
  static std::map<std::pair<KernelFamily, int>, KernelSpec> cache;
  std::unique_lock lock(mutex);
  auto it = cache.find({ family, order });
  if (it == cache.end()) {
    lock.unlock();
    KernelSpec base = make_kernel(family, order, 1);
    lock.lock();
    it = cache.emplace(std::make_pair(family, order), std::move(base)).first;
  }
  const KernelSpec base = it->second;
  lock.unlock();
  return dim == 1 ? base : product_kernel(base, dim);
}

double
kernel_l2_norm_sq(const KernelSpec& kernel)
{
  const double base = integrate_univariate(kernel.family(), [&](double u) {
    const double v = kernel.univariate(u);
    return v * v;
  });
  return std::pow(base, kernel.dim());
}

double
kernel_moment(const KernelSpec& kernel, int power)
{
  if (power < 0)
    throw std::invalid_argument("moment power must be nonnegative");
  return integrate_univariate(kernel.family(),
                              [&](double u) { return std::pow(u, power) * kernel.univariate(u); });
}

std::vector<MomentCheck>
check_moments(const KernelSpec& kernel)
{
  std::vector<MomentCheck> out;
  const auto& moments = kernel.moments();
  for (int j = 0; j <= kernel.order(); ++j) {
    const double value = moments[static_cast<std::size_t>(j)];
    MomentCheck c{ j, value, 0.0, true, false };
    if (j == 0) {
      c.expect_zero = false;
      c.tolerance = 1e-8;
      c.pass = std::abs(value - 1.0) <= c.tolerance;
    } else if (j == kernel.order()) {
      c.expect_zero = false;
      c.tolerance = 1e-3;
      c.pass = std::abs(value) >= c.tolerance;
    } else {
      c.tolerance = vanishing_tolerance(kernel.family());
      c.pass = std::abs(value) <= c.tolerance;
    }
    out.push_back(c);
  }
  return out;
}

} // namespace cate
