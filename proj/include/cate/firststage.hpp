#pragma once

#include "cate/smoothing.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cate {

//! One feature-map term of a parametric outcome model.
struct BasisTerm
{
  enum class Kind
  {
    constant,
    coordinate, //!< x_i
    square,     //!< x_i^2
    product     //!< x_i * x_j
  };

  Kind kind{ Kind::constant };
  Index i{ 0 };
  Index j{ 0 };

  double operator()(std::span<const double> x) const;
  std::string name(const std::vector<std::string>& columns = {}) const;
};

//! Ordered list of feature-map terms; evaluates to a design row.
class BasisSpec
{
public:
  BasisSpec() = default;
  explicit BasisSpec(std::vector<BasisTerm> terms);

  //! Parse terms such as "1", "x2", "x1^2", "x1*x3" (1-based covariate
  //! positions) or, when `columns` is given, the same forms with column
  //! names ("age", "age^2", "age*wtkg").
  static BasisSpec parse(const std::vector<std::string>& terms,
                         const std::vector<std::string>& columns = {});

  const std::vector<BasisTerm>& terms() const { return terms_; }
  Index size() const { return static_cast<Index>(terms_.size()); }
  Eigen::RowVectorXd row(std::span<const double> x) const;
  Eigen::MatrixXd design(const RowMatrix& X, const std::vector<Index>& rows) const;

private:
  std::vector<BasisTerm> terms_;
};

//! Least-squares outcome fit m_t(x) = basis(x)^T alpha on one arm.
struct OutcomeFit
{
  BasisSpec basis;
  Eigen::VectorXd alpha;
  int arm{ 1 };

  double operator()(std::span<const double> x) const { return basis.row(x).dot(alpha); }
};

//! Ordinary (or, with `weights`, weighted) least squares of Y on the basis
//! over the arm subsample. `weights`, if given, has length n and is indexed
//! by sample row. Throws RankDeficient for a singular design.
OutcomeFit fit_outcome_ls(const SampleSet& data,
                          int arm,
                          const BasisSpec& basis,
                          const std::optional<Eigen::VectorXd>& weights = std::nullopt);

//! Maximum-likelihood logistic regression of D on [1, X_features].
struct LogisticFit
{
  std::vector<Index> features;  //!< columns of X used, in order
  Eigen::VectorXd coefficients; //!< intercept first
  int iterations{ 0 };

  double linear_predictor(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
};

struct LogisticOptions
{
  int max_iterations{ 100 };
  double gradient_tolerance{ 1e-8 };
};

//! Damped Newton with step halving. Throws Separation when the likelihood
//! has no finite maximiser and MaxIterations when the gradient tolerance is
//! not reached.
LogisticFit fit_logistic(const SampleSet& data,
                         const std::vector<Index>& features,
                         const LogisticOptions& options = {});

inline constexpr double kDefaultClip = 0.01;

//! Propensity score model with outputs clipped to [c, 1 - c].
class PropensityModel
{
public:
  enum class Kind
  {
    true_function,
    parametric_logistic,
    single_index,
    nonparametric
  };

  Kind kind() const { return kind_; }
  double clip() const { return clip_; }

  //! Clipped probability at a covariate row.
  double operator()(std::span<const double> x) const { return clamp(raw(x)); }

  //! Value before clipping.
  double raw(std::span<const double> x) const { return raw_(x); }

  //! Present for logistic and single-index models.
  const std::optional<LogisticFit>& logistic() const { return logistic_; }
  //! Unit index direction (single-index models only).
  const Eigen::VectorXd& direction() const { return direction_; }

  static PropensityModel from_function(std::function<double(std::span<const double>)> p,
                                       double clip = kDefaultClip);

private:
  friend PropensityModel fit_propensity_logistic(const SampleSet&,
                                                 const std::vector<Index>&,
                                                 double,
                                                 const LogisticOptions&);
  friend PropensityModel fit_propensity_nonparametric(const SampleSet&, double, const KernelSpec&, double);
  friend PropensityModel fit_propensity_single_index(const SampleSet&,
                                                     double,
                                                     const KernelSpec&,
                                                     const std::vector<Index>&,
                                                     double,
                                                     const LogisticOptions&);

  PropensityModel(Kind kind, double clip);
  double clamp(double p) const;

  Kind kind_;
  double clip_;
  std::function<double(std::span<const double>)> raw_;
  std::optional<LogisticFit> logistic_;
  Eigen::VectorXd direction_;
};

PropensityModel fit_propensity_logistic(const SampleSet& data,
                                        const std::vector<Index>& features,
                                        double clip = kDefaultClip,
                                        const LogisticOptions& options = {});

//! Nadaraya-Watson regression of D on the full covariate vector.
PropensityModel fit_propensity_nonparametric(const SampleSet& data,
                                             double h2,
                                             const KernelSpec& kernel,
                                             double clip = kDefaultClip);

//! Index direction from the normalised logistic slope, then Nadaraya-Watson
//! regression of D on the scalar index. `features` empty means all columns.
PropensityModel fit_propensity_single_index(const SampleSet& data,
                                            double h4,
                                            const KernelSpec& kernel,
                                            const std::vector<Index>& features = {},
                                            double clip = kDefaultClip,
                                            const LogisticOptions& options = {});

//! Central-mean-subspace bases for both arms.
struct DirectionSet
{
  enum class Source
  {
    known,
    estimated
  };

  Eigen::MatrixXd beta1; //!< p x r(1)
  Eigen::MatrixXd beta0; //!< p x r(0)
  Source source{ Source::known };

  Index r1() const { return beta1.cols(); }
  Index r0() const { return beta0.cols(); }
  const Eigen::MatrixXd& beta(int arm) const { return arm == 1 ? beta1 : beta0; }

  static DirectionSet identity(Index p);
};

//! How to obtain one arm's direction block.
struct DirectionMethod
{
  enum class Kind
  {
    known,
    index_ls
  };

  Kind kind{ Kind::known };
  Eigen::MatrixXd matrix; //!< p x r when kind == known (r may be 0)
  Index rank{ 1 };        //!< requested r for index_ls

  static DirectionMethod known(Eigen::MatrixXd m)
  {
    const Index r = m.cols();
    return { Kind::known, std::move(m), r };
  }
  static DirectionMethod index_ls(Index r = 1) { return { Kind::index_ls, {}, r }; }
};

//! Unit norm with the first entry above 1e-10 in magnitude positive.
Eigen::VectorXd normalize_direction(Eigen::VectorXd v);

//! p x r block for one arm. `known` is passed through after a rank check;
//! `index_ls` returns the normalised least-squares slope of Y on X within the
//! arm (r = 1 only; r = 0 gives an empty block).
Eigen::MatrixXd estimate_directions(const SampleSet& data, int arm, const DirectionMethod& method);

} // namespace cate
