#pragma once

#include "cate/smoothing.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cate {

using Rng = std::mt19937_64;
using CovariateFunction = std::function<double(std::span<const double>)>;

//! Population description of a data-generating process, used to evaluate
//! influence functions and asymptotic variances by conditional Monte Carlo.
struct OracleModel
{
  Index p{ 0 };
  std::vector<Index> x1_idx;

  CovariateFunction m1;
  CovariateFunction m0;
  CovariateFunction propensity; //!< p(x)
  CovariateFunction var1;       //!< Var(Y(1) | X = x)
  CovariateFunction var0;       //!< Var(Y(0) | X = x)
  CovariateFunction p_index1;   //!< p(beta1^T x) = P(D = 1 | beta1^T X)
  CovariateFunction p_index0;   //!< p(beta0^T x) = P(D = 1 | beta0^T X)

  Eigen::MatrixXd beta1; //!< p x r(1)
  Eigen::MatrixXd beta0; //!< p x r(0)

  //! Draw one covariate row given X1 = x1.
  std::function<Eigen::VectorXd(std::span<const double> x1, Rng& rng)> sample_given_x1;
  //! tau(x1); when empty, sigma_sq uses the Monte Carlo mean of m1 - m0.
  std::function<double(std::span<const double> x1)> tau;
  //! Density of X1.
  std::function<double(std::span<const double> x1)> f_x1;
};

//! Influence-function variants. 1 uses p(x) in both arms; 2 keeps only the
//! treated residual with p(beta1^T x); 3 keeps only the control residual with
//! 1 - p(beta0^T x); 4 keeps both residuals with the index propensities.
double psi(int variant, const OracleModel& model, std::span<const double> x, double y, int d);

enum class VarianceKind
{
  O,
  P,
  N,
  S1,
  S2,
  S3,
  S4
};

inline constexpr std::array<VarianceKind, 7> kAllVarianceKinds{
  VarianceKind::O, VarianceKind::P, VarianceKind::N, VarianceKind::S1,
  VarianceKind::S2, VarianceKind::S3, VarianceKind::S4
};

std::string to_string(VarianceKind kind);

struct McEstimate
{
  double value{ 0.0 };
  double se{ 0.0 };
};

inline constexpr int kDefaultDraws = 100000;

//! Conditional Monte Carlo estimate of an asymptotic variance at x1:
//!   O = P = S1: E[(m1 - m0 - tau)^2 | x1]
//!   N:  O + E[var1 / p + var0 / (1 - p) | x1]
//!   S2: O + E[var1 / p(beta1^T X) | x1]
//!   S3: O + E[var0 / (1 - p(beta0^T X)) | x1]
//!   S4: O + both index terms.
//! Throws SamplerMismatch when a drawn row disagrees with x1 and
//! std::invalid_argument when draws < 10^4.
McEstimate sigma_sq(VarianceKind kind,
                    const OracleModel& model,
                    std::span<const double> x1,
                    int draws = kDefaultDraws,
                    std::uint64_t seed = 1);

struct VarianceProfile
{
  Eigen::VectorXd x1;
  std::array<McEstimate, 7> sigma; //!< indexed like kAllVarianceKinds
  double f_x1{ 1.0 };
  double k1_norm_sq{ 0.0 };

  const McEstimate& operator[](VarianceKind kind) const { return sigma[static_cast<std::size_t>(kind)]; }
  McEstimate& operator[](VarianceKind kind) { return sigma[static_cast<std::size_t>(kind)]; }
};

//! All seven variances at x1 from one shared set of draws.
VarianceProfile variance_profile(const OracleModel& model,
                                 std::span<const double> x1,
                                 double k1_norm_sq,
                                 int draws = kDefaultDraws,
                                 std::uint64_t seed = 1);

//! Profiles at every grid row; each row uses its own seeded stream.
std::vector<VarianceProfile> variance_profiles(const OracleModel& model,
                                               const RowMatrix& grid,
                                               double k1_norm_sq,
                                               int draws = kDefaultDraws,
                                               std::uint64_t seed = 1,
                                               unsigned threads = 1);

//! sqrt(||K1||^2 sigma^2 / f(x1)), the limiting SD of sqrt(n h1^k)(tau_hat - tau).
double asy_sd(double sigma_sq, double f_x1, double k1_norm_sq);

//! SD of tau_hat itself: asy_sd / sqrt(n h1^k).
double asy_sd_unscaled(double sigma_sq, double f_x1, double k1_norm_sq, long n, double h1, long k);

struct RankingEntry
{
  std::size_t point{ 0 };
  VarianceKind lhs{};
  VarianceKind rhs{};
  bool equality{ false }; //!< lhs = rhs, otherwise lhs <= rhs
  double lhs_value{ 0.0 };
  double rhs_value{ 0.0 };
  double tolerance{ 0.0 }; //!< 3 combined standard errors
  double margin{ 0.0 };    //!< rhs - lhs (or -|rhs - lhs| for equalities); >= -tolerance passes
  bool pass{ false };
};

struct RankingReport
{
  std::vector<RankingEntry> entries;

  bool all_pass() const;
  std::vector<RankingEntry> violations() const;
};

//! Checks O = P, P <= S2 <= S4 <= N and O <= S3 <= S4 at every profile, each
//! up to 3 combined Monte Carlo standard errors.
RankingReport ranking_check(const std::vector<VarianceProfile>& profiles);

} // namespace cate
