#include "cate/smoothing.hpp"

#include "cate/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cate {

RowMatrix
SampleSet::x1() const
{
  RowMatrix out(n(), k());
  for (Index j = 0; j < k(); ++j)
    out.col(j) = X.col(x1_idx[static_cast<std::size_t>(j)]);
  return out;
}

std::vector<Index>
SampleSet::arm_indices(int arm) const
{
  std::vector<Index> out;
  for (Index i = 0; i < n(); ++i)
    if (D[static_cast<std::size_t>(i)] == arm)
      out.push_back(i);
  return out;
}

void
SampleSet::validate() const
{
  if (n() == 0)
    throw DataError("sample is empty");
  if (Y.size() != n() || static_cast<Index>(D.size()) != n())
    throw DataError("X, Y and D have inconsistent lengths");
  for (Index i = 0; i < n(); ++i) {
    for (Index j = 0; j < p(); ++j)
      if (!std::isfinite(X(i, j)))
        throw DataError("non-finite covariate at row " + std::to_string(i) + ", column " +
                        std::to_string(j));
    if (!std::isfinite(Y(i)))
      throw DataError("non-finite outcome at row " + std::to_string(i));
    const int d = D[static_cast<std::size_t>(i)];
    if (d != 0 && d != 1)
      throw DataError("treatment indicator at row " + std::to_string(i) + " is not 0 or 1");
  }
  Index treated = 0;
  for (int d : D)
    treated += d;
  if (treated == 0 || treated == n())
    throw DataError("both treatment arms must be nonempty");
  if (x1_idx.empty() || k() >= p())
    throw DataError("conditioning subvector must have 1 <= k < p columns");
  std::set<Index> seen;
  for (Index j : x1_idx) {
    if (j < 0 || j >= p())
      throw DataError("conditioning index " + std::to_string(j) + " out of range");
    if (!seen.insert(j).second)
      throw DataError("conditioning index " + std::to_string(j) + " repeated");
  }
}

namespace {

void
check_smoother_args(const RowMatrix& points, std::size_t query_dim, double h, const KernelSpec& kernel)
{
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("bandwidth must be positive and finite");
  if (points.rows() < 1)
    throw std::invalid_argument("smoother needs at least one point");
  if (kernel.dim() != points.cols() || query_dim != static_cast<std::size_t>(points.cols()))
    throw std::invalid_argument("kernel, points and query dimensions disagree");
}

} // namespace

double
nw_regress(const RowMatrix& points,
           const Eigen::VectorXd& responses,
           std::span<const double> query,
           double h,
           const KernelSpec& kernel,
           std::optional<Index> exclude)
{
  check_smoother_args(points, query.size(), h, kernel);
  if (responses.size() != points.rows())
    throw std::invalid_argument("responses and points have different lengths");
  const double inv_h = 1.0 / h;
  const Index d = points.cols();
  double offset = 0.0;
  if (kernel.family() == KernelFamily::gaussian) {
    offset = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < points.rows(); ++j)
      if (!(exclude && *exclude == j))
        offset = std::min(offset, kernel.scaled_sq_distance(points.data() + j * d, query.data(), inv_h));
    if (!std::isfinite(offset))
      offset = 0.0;
  }
  double num = 0.0;
  double den = 0.0;
  double abs_sum = 0.0;
  for (Index j = 0; j < points.rows(); ++j) {
    if (exclude && *exclude == j)
      continue;
    const double w = kernel.scaled_shifted(points.data() + j * d, query.data(), inv_h, offset);
    num += w * responses(j);
    den += w;
    abs_sum += std::abs(w);
  }
  if (!(abs_sum > 0.0) || !(std::abs(den) >= kMassFloor * abs_sum)) {
    std::ostringstream os;
    os << "kernel mass " << den << " (absolute mass " << abs_sum << ") below relative floor " << kMassFloor;
    throw DegenerateMass(os.str());
  }
  return num / den;
}

double
kde(const RowMatrix& points, std::span<const double> query, double h, const KernelSpec& kernel)
{
  check_smoother_args(points, query.size(), h, kernel);
  const double inv_h = 1.0 / h;
  const Index d = points.cols();
  double sum = 0.0;
  for (Index j = 0; j < points.rows(); ++j)
    sum += kernel.scaled(points.data() + j * d, query.data(), inv_h);
  return sum / (static_cast<double>(points.rows()) * std::pow(h, static_cast<double>(d)));
}

Projection
Projection::index(Eigen::MatrixXd beta)
{
  if (beta.cols() == 0)
    return zero();
  if (!beta.allFinite())
    throw std::invalid_argument("direction matrix has non-finite entries");
  return Projection(Kind::index, std::move(beta));
}

Index
Projection::output_dim(Index p) const
{
  switch (kind_) {
    case Kind::full:
      return p;
    case Kind::index:
      if (beta_.rows() != p)
        throw std::invalid_argument("direction matrix has " + std::to_string(beta_.rows()) +
                                    " rows but data has p = " + std::to_string(p));
      return beta_.cols();
    case Kind::zero:
      return 0;
  }
  return 0;
}

RowMatrix
Projection::apply(const RowMatrix& X) const
{
  switch (kind_) {
    case Kind::full:
      return X;
    case Kind::index:
      output_dim(X.cols());
      return X * beta_;
    case Kind::zero:
      return RowMatrix(X.rows(), 0);
  }
  return X;
}

void
Projection::apply_row(std::span<const double> x, double* out) const
{
  const Index p = static_cast<Index>(x.size());
  switch (kind_) {
    case Kind::full:
      for (Index j = 0; j < p; ++j)
        out[j] = x[static_cast<std::size_t>(j)];
      return;
    case Kind::index:
      for (Index c = 0; c < beta_.cols(); ++c) {
        double acc = 0.0;
        for (Index j = 0; j < p; ++j)
          acc += beta_(j, c) * x[static_cast<std::size_t>(j)];
        out[c] = acc;
      }
      return;
    case Kind::zero:
      return;
  }
}

double
MeanFunction::operator()(std::span<const double> x) const
{
  if (is_constant())
    return constant_;
  Eigen::VectorXd z(points_.cols());
  projection_.apply_row(x, z.data());
  return nw_regress(points_, responses_, { z.data(), static_cast<std::size_t>(z.size()) }, h_, kernel_);
}

double
MeanFunction::at_sample(const SampleSet& data, Index i) const
{
  if (is_constant())
    return constant_;
  Eigen::VectorXd z(points_.cols());
  projection_.apply_row(data.row(i), z.data());
  std::optional<Index> exclude;
  if (leave_one_out_ && i < static_cast<Index>(position_.size()) &&
      position_[static_cast<std::size_t>(i)] >= 0)
    exclude = position_[static_cast<std::size_t>(i)];
  try {
    return nw_regress(
      points_, responses_, { z.data(), static_cast<std::size_t>(z.size()) }, h_, kernel_, exclude);
  } catch (const DegenerateMass& e) {
    throw DegenerateMass(std::string(e.what()) + " at observation " + std::to_string(i), i);
  }
}

MeanFunction
subsample_mean_fn(const SampleSet& data,
                  int arm,
                  const Projection& projection,
                  double h,
                  const KernelSpec& kernel,
                  bool leave_one_out)
{
  if (arm != 0 && arm != 1)
    throw std::invalid_argument("arm must be 0 or 1");
  const auto rows = data.arm_indices(arm);
  if (rows.empty())
    throw DataError("treatment arm " + std::to_string(arm) + " is empty");

  MeanFunction fn(projection, kernel);
  fn.h_ = h;
  fn.leave_one_out_ = leave_one_out;
  fn.source_rows_ = rows;
  fn.responses_.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    fn.responses_(static_cast<Index>(r)) = data.Y(rows[r]);

  if (projection.kind() == Projection::Kind::zero) {
    fn.constant_ = fn.responses_.mean();
    return fn;
  }

  const Index q = projection.output_dim(data.p());
  if (kernel.dim() != q)
    throw std::invalid_argument("first-stage kernel has dimension " + std::to_string(kernel.dim()) +
                                ", projection has " + std::to_string(q));
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("bandwidth must be positive and finite");
  fn.points_.resize(static_cast<Index>(rows.size()), q);
  for (std::size_t r = 0; r < rows.size(); ++r)
    projection.apply_row(data.row(rows[r]), fn.points_.data() + static_cast<Index>(r) * q);
  fn.position_.assign(static_cast<std::size_t>(data.n()), -1);
  for (std::size_t r = 0; r < rows.size(); ++r)
    fn.position_[static_cast<std::size_t>(rows[r])] = static_cast<Index>(r);
  return fn;
}

} // namespace cate
