#include "oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace oracle {

namespace {
constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
}

double
gaussian(int order, double u)
{
  const double phi = kInvSqrt2Pi * std::exp(-0.5 * u * u);
  const double u2 = u * u;
  switch (order) {
    case 2:
      return phi;
    case 4:
      return 0.5 * (3.0 - u2) * phi;
    case 6:
      return (15.0 - 10.0 * u2 + u2 * u2) / 8.0 * phi;
    default:
      throw std::invalid_argument("oracle gaussian kernel: order 2, 4 or 6");
  }
}

double
compact(int order, double u)
{
  if (std::abs(u) > 1.0)
    return 0.0;
  const double u2 = u * u;
  switch (order) {
    case 2:
      return 0.75 * (1.0 - u2);
    case 4:
      return 15.0 / 32.0 * (3.0 - 10.0 * u2 + 7.0 * u2 * u2);
    default:
      throw std::invalid_argument("oracle compact kernel: order 2 or 4");
  }
}

Univariate
gaussian_of(int order)
{
  return [order](double u) { return gaussian(order, u); };
}

Univariate
compact_of(int order)
{
  return [order](double u) { return compact(order, u); };
}

double
simpson(const Univariate& f, double a, double b, int panels)
{
  if (panels < 2 || panels % 2 != 0)
    throw std::invalid_argument("simpson: panels must be even");
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i)
    s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

double
product(const Univariate& k, const std::vector<double>& a, const std::vector<double>& b, double h)
{
  double w = 1.0;
  for (std::size_t j = 0; j < a.size(); ++j)
    w *= k((a[j] - b[j]) / h);
  return w;
}

double
nw(const Rows& x,
   const std::vector<double>& y,
   const std::vector<double>& q,
   double h,
   const Univariate& k,
   const std::vector<int>& use)
{
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!use.empty() && !use[j])
      continue;
    const double w = product(k, x[j], q, h);
    num += w * y[j];
    den += w;
  }
  return num / den;
}

double
second_step(const Rows& x,
            const std::vector<int>& x1_cols,
            const std::vector<double>& pseudo,
            const std::vector<double>& q,
            double h1,
            const Univariate& k1)
{
  Rows x1;
  for (const auto& row : x) {
    std::vector<double> r;
    for (int c : x1_cols)
      r.push_back(row[static_cast<std::size_t>(c)]);
    x1.push_back(r);
  }
  return nw(x1, pseudo, q, h1, k1);
}

std::vector<double>
nr_pseudo(const Rows& x, const std::vector<double>& y, const std::vector<int>& d, double h2, const Univariate& k2)
{
  std::vector<int> treated(d.begin(), d.end());
  std::vector<int> control;
  for (int v : d)
    control.push_back(1 - v);
  std::vector<double> out;
  for (const auto& xi : x)
    out.push_back(nw(x, y, xi, h2, k2, treated) - nw(x, y, xi, h2, k2, control));
  return out;
}

std::vector<double>
ipw_pseudo(const std::vector<double>& y, const std::vector<int>& d, const std::vector<double>& p)
{
  std::vector<double> out;
  for (std::size_t i = 0; i < y.size(); ++i)
    out.push_back(d[i] * y[i] / p[i] - (1 - d[i]) * y[i] / (1.0 - p[i]));
  return out;
}

} // namespace oracle
