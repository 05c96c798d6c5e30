#pragma once

#include "cate/kernels.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace cate {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

//! Observational sample (X, Y, D) with the conditioning subvector X1 given
//! by column indices into X.
struct SampleSet
{
  RowMatrix X;
  Eigen::VectorXd Y;
  std::vector<int> D;
  std::vector<Index> x1_idx;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  Index k() const { return static_cast<Index>(x1_idx.size()); }

  std::span<const double> row(Index i) const
  {
    return { X.data() + i * X.cols(), static_cast<std::size_t>(X.cols()) };
  }

  //! n x k matrix of the conditioning covariates.
  RowMatrix x1() const;
  std::vector<Index> arm_indices(int arm) const;

  //! Throws DataError when an invariant is violated: non-finite X or Y,
  //! D outside {0,1}, an empty arm, bad x1 indices, or mismatched lengths.
  void validate() const;
};

//! Relative floor on the kernel mass: a Nadaraya-Watson ratio is reported as
//! DegenerateMass when |sum_j w_j| < kMassFloor * sum_j |w_j| or when every
//! weight is zero.
inline constexpr double kMassFloor = 1e-12;

//! Local-constant regression at `query`:
//! sum_j K((x_j - q)/h) y_j / sum_j K((x_j - q)/h).
//!
//! The query's own row is included when it coincides with a sample point
//! unless `exclude` names a row to leave out. Higher-order kernels can give
//! negative weights; the result is not clipped.
//!
//! Gaussian-family weights are evaluated relative to the nearest point
//! (a common factor that cancels in the ratio), so a query far from every
//! point still gets a finite answer instead of 0/0.
double nw_regress(const RowMatrix& points,
                  const Eigen::VectorXd& responses,
                  std::span<const double> query,
                  double h,
                  const KernelSpec& kernel,
                  std::optional<Index> exclude = std::nullopt);

//! Kernel density estimate (1 / (m h^d)) sum_j K((x_j - q)/h).
double kde(const RowMatrix& points, std::span<const double> query, double h, const KernelSpec& kernel);

//! Which covariates a first-stage smoother sees.
class Projection
{
public:
  enum class Kind
  {
    full,  //!< all of X
    index, //!< beta^T X for a p x r direction matrix
    zero   //!< no covariates; the fit is the arm mean
  };

  static Projection full() { return Projection(Kind::full, {}); }
  static Projection index(Eigen::MatrixXd beta);
  static Projection zero() { return Projection(Kind::zero, {}); }

  Kind kind() const { return kind_; }
  const Eigen::MatrixXd& beta() const { return beta_; }

  //! Dimension of the projected space given p input covariates.
  Index output_dim(Index p) const;
  RowMatrix apply(const RowMatrix& X) const;
  void apply_row(std::span<const double> x, double* out) const;

private:
  Projection(Kind kind, Eigen::MatrixXd beta)
    : kind_(kind)
    , beta_(std::move(beta))
  {}

  Kind kind_;
  Eigen::MatrixXd beta_;
};

//! Fitted conditional mean of Y on one treatment arm after projection.
//! Holds an immutable snapshot of its subsample.
class MeanFunction
{
public:
  //! Evaluate at a covariate row of length p.
  double operator()(std::span<const double> x) const;

  //! Evaluate at row `i` of the sample used to fit; honours leave-one-out.
  double at_sample(const SampleSet& data, Index i) const;

  bool is_constant() const { return projection_.kind() == Projection::Kind::zero; }
  Index size() const { return responses_.size(); }
  const Projection& projection() const { return projection_; }

private:
  friend MeanFunction subsample_mean_fn(const SampleSet&,
                                        int,
                                        const Projection&,
                                        double,
                                        const KernelSpec&,
                                        bool);

  MeanFunction(Projection projection, KernelSpec kernel)
    : projection_(std::move(projection))
    , kernel_(std::move(kernel))
  {}

  Projection projection_;
  KernelSpec kernel_;
  double h_{ 1.0 };
  bool leave_one_out_{ false };
  double constant_{ 0.0 };
  RowMatrix points_;
  Eigen::VectorXd responses_;
  std::vector<Index> source_rows_; //!< sample row of each stored point
  std::vector<Index> position_;    //!< sample row -> stored point, -1 if absent
};

//! Nadaraya-Watson fit of Y on the projected covariates over {i : D_i = arm}.
//! The zero-dimensional projection yields the arm's sample mean of Y.
MeanFunction subsample_mean_fn(const SampleSet& data,
                               int arm,
                               const Projection& projection,
                               double h,
                               const KernelSpec& kernel,
                               bool leave_one_out = false);

} // namespace cate
