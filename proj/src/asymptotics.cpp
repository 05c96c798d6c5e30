#include "cate/asymptotics.hpp"

#include "cate/errors.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cate {

double
psi(int variant, const OracleModel& model, std::span<const double> x, double y, int d)
{
  const double m1 = model.m1(x);
  const double m0 = model.m0(x);
  const double effect = m1 - m0;
  switch (variant) {
    case 1: {
      const double p = model.propensity(x);
      return d * (y - m1) / p - (1 - d) * (y - m0) / (1.0 - p) + effect;
    }
    case 2:
      return d * (y - m1) / model.p_index1(x) + effect;
    case 3:
      return -(1 - d) * (y - m0) / (1.0 - model.p_index0(x)) + effect;
    case 4:
      return d * (y - m1) / model.p_index1(x) - (1 - d) * (y - m0) / (1.0 - model.p_index0(x)) + effect;
    default:
      throw std::invalid_argument("psi variant must be 1, 2, 3 or 4");
  }
}

std::string
to_string(VarianceKind kind)
{
  switch (kind) {
    case VarianceKind::O:
      return "O";
    case VarianceKind::P:
      return "P";
    case VarianceKind::N:
      return "N";
    case VarianceKind::S1:
      return "S1";
    case VarianceKind::S2:
      return "S2";
    case VarianceKind::S3:
      return "S3";
    case VarianceKind::S4:
      return "S4";
  }
  return "?";
}

namespace {

constexpr double kSamplerTolerance = 1e-12;

struct Accumulator
{
  double sum{ 0.0 };
  double sum_sq{ 0.0 };

  void add(double v)
  {
    sum += v;
    sum_sq += v * v;
  }

  McEstimate finish(int n) const
  {
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1));
    return { mean, std::sqrt(var / n) };
  }
};

std::vector<Eigen::VectorXd>
draw_rows(const OracleModel& model, std::span<const double> x1, int draws, std::uint64_t seed)
{
  if (draws < 10000)
    throw std::invalid_argument("sigma_sq needs at least 10^4 Monte Carlo draws");
  if (static_cast<Index>(x1.size()) != static_cast<Index>(model.x1_idx.size()))
    throw std::invalid_argument("x1 has the wrong dimension for this model");
  Rng rng(seed);
  std::vector<Eigen::VectorXd> rows;
  rows.reserve(static_cast<std::size_t>(draws));
  for (int b = 0; b < draws; ++b) {
    Eigen::VectorXd x = model.sample_given_x1(x1, rng);
    if (x.size() != model.p)
      throw SamplerMismatch("conditional sampler returned a row of length " + std::to_string(x.size()));
    for (std::size_t j = 0; j < x1.size(); ++j) {
      if (std::abs(x(model.x1_idx[j]) - x1[j]) > kSamplerTolerance) {
        std::ostringstream os;
        os << "conditional sampler drew X1 = " << x(model.x1_idx[j]) << " for x1 = " << x1[j];
        throw SamplerMismatch(os.str());
      }
    }
    rows.push_back(std::move(x));
  }
  return rows;
}

double
resolve_tau(const OracleModel& model, std::span<const double> x1, const std::vector<Eigen::VectorXd>& rows)
{
  if (model.tau)
    return model.tau(x1);
  double sum = 0.0;
  for (const auto& x : rows) {
    std::span<const double> s(x.data(), static_cast<std::size_t>(x.size()));
    sum += model.m1(s) - model.m0(s);
  }
  return sum / static_cast<double>(rows.size());
}

} // namespace

VarianceProfile
variance_profile(const OracleModel& model, std::span<const double> x1, double k1_norm_sq, int draws, std::uint64_t seed)
{
  const auto rows = draw_rows(model, x1, draws, seed);
  const double tau = resolve_tau(model, x1, rows);
  std::array<Accumulator, 7> acc{};
  for (const auto& x : rows) {
    std::span<const double> s(x.data(), static_cast<std::size_t>(x.size()));
    const double dev = model.m1(s) - model.m0(s) - tau;
    const double base = dev * dev;
    const double v1 = model.var1(s);
    const double v0 = model.var0(s);
    const double p = model.propensity(s);
    // The index propensities are only needed when the matching variance is
    // nonzero; skipping them keeps zero-variance arms free of evaluation cost.
    const double t1 = v1 != 0.0 ? v1 / model.p_index1(s) : 0.0;
    const double t0 = v0 != 0.0 ? v0 / (1.0 - model.p_index0(s)) : 0.0;
    const double full = v1 / p + v0 / (1.0 - p);
    acc[static_cast<std::size_t>(VarianceKind::O)].add(base);
    acc[static_cast<std::size_t>(VarianceKind::P)].add(base);
    acc[static_cast<std::size_t>(VarianceKind::S1)].add(base);
    acc[static_cast<std::size_t>(VarianceKind::N)].add(base + full);
    acc[static_cast<std::size_t>(VarianceKind::S2)].add(base + t1);
    acc[static_cast<std::size_t>(VarianceKind::S3)].add(base + t0);
    acc[static_cast<std::size_t>(VarianceKind::S4)].add(base + t1 + t0);
  }
  VarianceProfile prof;
  prof.x1 = Eigen::Map<const Eigen::VectorXd>(x1.data(), static_cast<Index>(x1.size()));
  for (std::size_t j = 0; j < acc.size(); ++j)
    prof.sigma[j] = acc[j].finish(draws);
  prof.f_x1 = model.f_x1 ? model.f_x1(x1) : 1.0;
  prof.k1_norm_sq = k1_norm_sq;
  return prof;
}

McEstimate
sigma_sq(VarianceKind kind, const OracleModel& model, std::span<const double> x1, int draws, std::uint64_t seed)
{
  return variance_profile(model, x1, 0.0, draws, seed)[kind];
}

std::vector<VarianceProfile>
variance_profiles(const OracleModel& model,
                  const RowMatrix& grid,
                  double k1_norm_sq,
                  int draws,
                  std::uint64_t seed,
                  unsigned threads)
{
  const auto m = static_cast<std::size_t>(grid.rows());
  std::vector<VarianceProfile> out(m);
  auto work = [&](std::size_t g) {
    std::span<const double> x1(grid.data() + static_cast<Index>(g) * grid.cols(),
                               static_cast<std::size_t>(grid.cols()));
    out[g] = variance_profile(model, x1, k1_norm_sq, draws, seed + 0x9E3779B97F4A7C15ULL * (g + 1));
  };
  if (threads <= 1 || m <= 1) {
    for (std::size_t g = 0; g < m; ++g)
      work(g);
    return out;
  }
  std::vector<std::exception_ptr> errors(m);
  {
    std::vector<std::jthread> pool;
    std::atomic<std::size_t> next{ 0 };
    for (unsigned t = 0; t < std::min<std::size_t>(threads, m); ++t) {
      pool.emplace_back([&] {
        for (std::size_t g; (g = next.fetch_add(1)) < m;) {
          try {
            work(g);
          } catch (...) {
            errors[g] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
  return out;
}

double
asy_sd(double sigma_sq, double f_x1, double k1_norm_sq)
{
  if (!(f_x1 > 0.0))
    throw std::invalid_argument("density f(x1) must be positive");
  if (sigma_sq < 0.0 || k1_norm_sq < 0.0)
    throw std::invalid_argument("variance and kernel norm must be nonnegative");
  return std::sqrt(k1_norm_sq * sigma_sq / f_x1);
}

double
asy_sd_unscaled(double sigma_sq, double f_x1, double k1_norm_sq, long n, double h1, long k)
{
  if (n < 1 || !(h1 > 0.0))
    throw std::invalid_argument("n and h1 must be positive");
  return asy_sd(sigma_sq, f_x1, k1_norm_sq) /
         std::sqrt(static_cast<double>(n) * std::pow(h1, static_cast<double>(k)));
}

bool
RankingReport::all_pass() const
{
  for (const auto& e : entries)
    if (!e.pass)
      return false;
  return true;
}

std::vector<RankingEntry>
RankingReport::violations() const
{
  std::vector<RankingEntry> out;
  for (const auto& e : entries)
    if (!e.pass)
      out.push_back(e);
  return out;
}

RankingReport
ranking_check(const std::vector<VarianceProfile>& profiles)
{
  struct Link
  {
    VarianceKind lhs;
    VarianceKind rhs;
    bool equality;
  };
  static constexpr std::array<Link, 6> chain{ {
    { VarianceKind::O, VarianceKind::P, true },
    { VarianceKind::P, VarianceKind::S2, false },
    { VarianceKind::S2, VarianceKind::S4, false },
    { VarianceKind::S4, VarianceKind::N, false },
    { VarianceKind::O, VarianceKind::S3, false },
    { VarianceKind::S3, VarianceKind::S4, false },
  } };
  RankingReport report;
  for (std::size_t g = 0; g < profiles.size(); ++g) {
    for (const auto& link : chain) {
      const auto& a = profiles[g][link.lhs];
      const auto& b = profiles[g][link.rhs];
      RankingEntry e;
      e.point = g;
      e.lhs = link.lhs;
      e.rhs = link.rhs;
      e.equality = link.equality;
      e.lhs_value = a.value;
      e.rhs_value = b.value;
      e.tolerance = 3.0 * std::sqrt(a.se * a.se + b.se * b.se);
      e.margin = link.equality ? -std::abs(b.value - a.value) : b.value - a.value;
      e.pass = e.margin >= -e.tolerance;
      report.entries.push_back(e);
    }
  }
  return report;
}

} // namespace cate
