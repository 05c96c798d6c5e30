#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cate {

enum class KernelFamily
{
  gaussian, //!< polynomial times standard normal density, infinite support
  compact   //!< polynomial supported on [-1, 1]
};

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

//! A symmetric kernel of even order, univariate or a product of identical
//! univariate factors.
//!
//! The univariate factor is `P(u^2) * w(u)` where `P` is a polynomial held in
//! `profile()` (coefficient `i` multiplies `u^(2i)`) and `w` is the standard
//! normal density (gaussian family) or the indicator of [-1, 1] (compact
//! family). Moments are verified by quadrature at construction; a kernel that
//! fails verification is never handed out.
//!
//! Instances are immutable and safe to share between threads.
class KernelSpec
{
public:
  KernelFamily family() const { return family_; }
  int order() const { return order_; }
  int dim() const { return dim_; }
  bool compact_support() const { return family_ == KernelFamily::compact; }

  //! Declared differentiability order s* of the kernel (metadata only).
  int smoothness() const { return smoothness_; }
  KernelSpec with_smoothness(int s_star) const;

  //! Highest derivative order that is continuous at the support boundary.
  //! -1 for infinite support. Recorded, not enforced.
  int boundary_continuity() const { return boundary_continuity_; }

  const std::vector<double>& profile() const { return profile_; }

  //! Univariate raw moments `int u^j K(u) du`, j = 0..order, as measured
  //! at construction.
  const std::vector<double>& moments() const { return moments_; }

  //! Univariate factor evaluated at `u`.
  double univariate(double u) const;

  //! Product kernel value; `u.size()` must equal `dim()`.
  double operator()(std::span<const double> u) const;
  double operator()(double u) const { return (*this)(std::span<const double>(&u, 1)); }

  //! K((a - b) * inv_h) for two points of length dim(). Hot path for the
  //! smoothers; no allocation.
  double scaled(const double* a, const double* b, double inv_h) const;

  //! Squared scaled distance sum_j ((a_j - b_j) * inv_h)^2.
  double scaled_sq_distance(const double* a, const double* b, double inv_h) const;

  //! For the gaussian family, K((a - b) * inv_h) * exp(offset / 2), computed
  //! without forming either factor, so weights far in the tail do not
  //! underflow when `offset` is the smallest squared distance of a batch.
  //! Compact kernels ignore `offset`.
  double scaled_shifted(const double* a, const double* b, double inv_h, double offset) const;

  std::string describe() const;

private:
  friend KernelSpec make_gaussian_kernel(int order);
  friend KernelSpec make_compact_kernel(int order);
  friend KernelSpec product_kernel(const KernelSpec& base, int dim);

  KernelSpec() = default;
  double profile_at(double u2) const;
  double combine(double* squares, int n, double offset = 0.0) const;

  KernelFamily family_{ KernelFamily::gaussian };
  int order_{ 2 };
  int dim_{ 1 };
  int smoothness_{ 0 };
  int boundary_continuity_{ -1 };
  std::vector<double> profile_;
  std::vector<double> moments_;
};

//! Gaussian density (order 2) or its Hermite-polynomial higher-order
//! extension: the order-2r kernel is sum_{j<r} (-1)^j He_{2j}(u) phi(u) / (2^j j!).
KernelSpec make_gaussian_kernel(int order);

//! Polynomial kernel `(1 - u^2) Q(u^2)` on [-1, 1]; order 2 is Epanechnikov.
KernelSpec make_compact_kernel(int order);

//! Product of `dim` copies of a univariate kernel.
KernelSpec product_kernel(const KernelSpec& base, int dim);

KernelSpec make_kernel(KernelFamily family, int order, int dim = 1);

//! Same result as make_kernel, but the univariate base is built once per
//! (family, order) for the life of the process. Thread-safe.
KernelSpec cached_kernel(KernelFamily family, int order, int dim = 1);

//! Integral of K^2. For a product kernel this is the base value raised to
//! `dim()`.
double kernel_l2_norm_sq(const KernelSpec& kernel);

//! Univariate moment `int u^power K(u) du` by quadrature.
double kernel_moment(const KernelSpec& kernel, int power);

struct MomentCheck
{
  int power;
  double value;
  double tolerance;
  bool expect_zero; //!< false for power 0 (expect one) and power == order
  bool pass;
};

//! Moments 0..order with pass/fail. Tolerances: 1e-8 for the normalisation,
//! 1e-8 (gaussian) / 1e-6 (compact) for vanishing moments; the order moment
//! must have magnitude at least 1e-3.
std::vector<MomentCheck> check_moments(const KernelSpec& kernel);

} // namespace cate
