#include "cate/firststage.hpp"

#include "cate/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace cate {

// ---------------------------------------------------------------------------
// basis

double
BasisTerm::operator()(std::span<const double> x) const
{
  switch (kind) {
    case Kind::constant:
      return 1.0;
    case Kind::coordinate:
      return x[static_cast<std::size_t>(i)];
    case Kind::square:
      return x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    case Kind::product:
      return x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
  }
  return 0.0;
}

std::string
BasisTerm::name(const std::vector<std::string>& columns) const
{
  auto col = [&](Index c) {
    if (c < static_cast<Index>(columns.size()))
      return columns[static_cast<std::size_t>(c)];
    return "x" + std::to_string(c + 1);
  };
  switch (kind) {
    case Kind::constant:
      return "1";
    case Kind::coordinate:
      return col(i);
    case Kind::square:
      return col(i) + "^2";
    case Kind::product:
      return col(i) + "*" + col(j);
  }
  return "?";
}

BasisSpec::BasisSpec(std::vector<BasisTerm> terms)
  : terms_(std::move(terms))
{
  if (terms_.empty())
    throw std::invalid_argument("basis needs at least one term");
}

namespace {

std::string
trim(std::string s)
{
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

Index
resolve_covariate(const std::string& token, const std::vector<std::string>& columns)
{
  if (!columns.empty()) {
    auto it = std::find(columns.begin(), columns.end(), token);
    if (it != columns.end())
      return static_cast<Index>(it - columns.begin());
  }
  if (token.size() >= 2 && token[0] == 'x' &&
      std::all_of(token.begin() + 1, token.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const long pos = std::stol(token.substr(1));
    if (pos >= 1)
      return static_cast<Index>(pos - 1);
  }
  throw std::invalid_argument("unknown covariate '" + token + "' in basis term");
}

} // namespace

BasisSpec
BasisSpec::parse(const std::vector<std::string>& terms, const std::vector<std::string>& columns)
{
  std::vector<BasisTerm> out;
  for (const auto& raw : terms) {
    const std::string t = trim(raw);
    BasisTerm term;
    if (t == "1") {
      term.kind = BasisTerm::Kind::constant;
    } else if (auto star = t.find('*'); star != std::string::npos) {
      term.kind = BasisTerm::Kind::product;
      term.i = resolve_covariate(trim(t.substr(0, star)), columns);
      term.j = resolve_covariate(trim(t.substr(star + 1)), columns);
    } else if (t.size() > 2 && t.substr(t.size() - 2) == "^2") {
      term.kind = BasisTerm::Kind::square;
      term.i = resolve_covariate(trim(t.substr(0, t.size() - 2)), columns);
    } else {
      term.kind = BasisTerm::Kind::coordinate;
      term.i = resolve_covariate(t, columns);
    }
    out.push_back(term);
  }
  return BasisSpec(std::move(out));
}

Eigen::RowVectorXd
BasisSpec::row(std::span<const double> x) const
{
  Eigen::RowVectorXd r(size());
  for (Index c = 0; c < size(); ++c) {
    const auto& t = terms_[static_cast<std::size_t>(c)];
    if (t.kind != BasisTerm::Kind::constant &&
        (t.i >= static_cast<Index>(x.size()) || t.j >= static_cast<Index>(x.size())))
      throw std::invalid_argument("basis term " + t.name() + " refers past the covariate vector");
    r(c) = t(x);
  }
  return r;
}

Eigen::MatrixXd
BasisSpec::design(const RowMatrix& X, const std::vector<Index>& rows) const
{
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::span<const double> x(X.data() + rows[r] * X.cols(), static_cast<std::size_t>(X.cols()));
    out.row(static_cast<Index>(r)) = row(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// outcome regression

OutcomeFit
fit_outcome_ls(const SampleSet& data,
               int arm,
               const BasisSpec& basis,
               const std::optional<Eigen::VectorXd>& weights)
{
  const auto rows = data.arm_indices(arm);
  if (static_cast<Index>(rows.size()) < basis.size())
    throw RankDeficient("arm " + std::to_string(arm) + " has " + std::to_string(rows.size()) +
                        " observations for " + std::to_string(basis.size()) + " basis terms");
  Eigen::MatrixXd A = basis.design(data.X, rows);
  Eigen::VectorXd b(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    b(static_cast<Index>(r)) = data.Y(rows[r]);
  if (weights) {
    if (weights->size() != data.n())
      throw std::invalid_argument("weight vector must have length n");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double w = (*weights)(rows[r]);
      if (!(w > 0.0))
        throw std::invalid_argument("least-squares weights must be positive");
      const double s = std::sqrt(w);
      A.row(static_cast<Index>(r)) *= s;
      b(static_cast<Index>(r)) *= s;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() < basis.size())
    throw RankDeficient("design matrix for arm " + std::to_string(arm) + " has rank " +
                        std::to_string(qr.rank()) + " < " + std::to_string(basis.size()));
  return OutcomeFit{ basis, qr.solve(b), arm };
}

// ---------------------------------------------------------------------------
// logistic regression

double
LogisticFit::linear_predictor(std::span<const double> x) const
{
  double eta = coefficients(0);
  for (std::size_t f = 0; f < features.size(); ++f)
    eta += coefficients(static_cast<Index>(f) + 1) * x[static_cast<std::size_t>(features[f])];
  return eta;
}

double
LogisticFit::probability(std::span<const double> x) const
{
  return 1.0 / (1.0 + std::exp(-linear_predictor(x)));
}

namespace {

// Saturation beyond which fitted probabilities are within ~1e-15 of 0 or 1.
constexpr double kSeparationEta = 35.0;

double
log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& d)
{
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    // log(1 + exp(eta)) evaluated stably
    const double softplus = eta(i) > 0 ? eta(i) + std::log1p(std::exp(-eta(i)))
                                       : std::log1p(std::exp(eta(i)));
    ll += d(i) * eta(i) - softplus;
  }
  return ll;
}

} // namespace

LogisticFit
fit_logistic(const SampleSet& data, const std::vector<Index>& features, const LogisticOptions& options)
{
  const Index n = data.n();
  const Index q = static_cast<Index>(features.size()) + 1;
  for (Index f : features)
    if (f < 0 || f >= data.p())
      throw std::invalid_argument("logistic feature index out of range");
  Index treated = 0;
  for (int d : data.D)
    treated += d;
  if (treated == 0 || treated == n)
    throw DataError("logistic fit needs both treatment arms");

  Eigen::MatrixXd Z(n, q);
  Eigen::VectorXd d(n);
  for (Index i = 0; i < n; ++i) {
    Z(i, 0) = 1.0;
    for (std::size_t f = 0; f < features.size(); ++f)
      Z(i, static_cast<Index>(f) + 1) = data.X(i, features[f]);
    d(i) = data.D[static_cast<std::size_t>(i)];
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd eta = Z * beta;
  double ll = log_likelihood(eta, d);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Eigen::VectorXd prob = (1.0 + (-eta.array()).exp()).inverse().matrix();
    Eigen::VectorXd grad = Z.transpose() * (d - prob);
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance)
      return LogisticFit{ features, beta, iter };

    Eigen::VectorXd w = (prob.array() * (1.0 - prob.array())).matrix();
    Eigen::MatrixXd H = Z.transpose() * w.asDiagonal() * Z;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff()))
      throw Separation("logistic information matrix is singular; the classes are separated");
    const Eigen::VectorXd step = ldlt.solve(grad);

    double scale = 1.0;
    Eigen::VectorXd candidate;
    Eigen::VectorXd candidate_eta;
    double candidate_ll = -INFINITY;
    for (int halving = 0; halving < 40; ++halving) {
      candidate = beta + scale * step;
      candidate_eta = Z * candidate;
      candidate_ll = log_likelihood(candidate_eta, d);
      if (candidate_ll >= ll - 1e-12 * std::abs(ll))
        break;
      scale *= 0.5;
    }
    beta = candidate;
    eta = candidate_eta;
    ll = candidate_ll;
    if (eta.lpNorm<Eigen::Infinity>() > kSeparationEta)
      throw Separation("logistic linear predictor diverges (|eta| > " +
                       std::to_string(kSeparationEta) + "); the classes are separated");
  }
  throw MaxIterations("logistic fit did not reach gradient tolerance in " +
                      std::to_string(options.max_iterations) + " iterations");
}

// ---------------------------------------------------------------------------
// propensity models

PropensityModel::PropensityModel(Kind kind, double clip)
  : kind_(kind)
  , clip_(clip)
{
  if (!(clip > 0.0 && clip < 0.5))
    throw std::invalid_argument("propensity clip c must lie in (0, 0.5)");
}

double
PropensityModel::clamp(double p) const
{
  return std::clamp(p, clip_, 1.0 - clip_);
}

PropensityModel
PropensityModel::from_function(std::function<double(std::span<const double>)> p, double clip)
{
  PropensityModel m(Kind::true_function, clip);
  m.raw_ = std::move(p);
  return m;
}

namespace {

std::vector<Index>
all_columns(Index p)
{
  std::vector<Index> out(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j)
    out[static_cast<std::size_t>(j)] = j;
  return out;
}

Eigen::VectorXd
treatment_vector(const SampleSet& data)
{
  Eigen::VectorXd d(data.n());
  for (Index i = 0; i < data.n(); ++i)
    d(i) = data.D[static_cast<std::size_t>(i)];
  return d;
}

} // namespace

PropensityModel
fit_propensity_logistic(const SampleSet& data,
                        const std::vector<Index>& features,
                        double clip,
                        const LogisticOptions& options)
{
  PropensityModel m(PropensityModel::Kind::parametric_logistic, clip);
  auto fit = std::make_shared<const LogisticFit>(fit_logistic(data, features, options));
  m.logistic_ = *fit;
  m.raw_ = [fit](std::span<const double> x) { return fit->probability(x); };
  return m;
}

PropensityModel
fit_propensity_nonparametric(const SampleSet& data, double h2, const KernelSpec& kernel, double clip)
{
  if (kernel.dim() != data.p())
    throw std::invalid_argument("nonparametric propensity kernel must have dimension p");
  if (!(h2 > 0.0))
    throw std::invalid_argument("bandwidth must be positive");
  PropensityModel m(PropensityModel::Kind::nonparametric, clip);
  auto points = std::make_shared<const RowMatrix>(data.X);
  auto d = std::make_shared<const Eigen::VectorXd>(treatment_vector(data));
  m.raw_ = [points, d, h2, kernel](std::span<const double> x) {
    return nw_regress(*points, *d, x, h2, kernel);
  };
  return m;
}

PropensityModel
fit_propensity_single_index(const SampleSet& data,
                            double h4,
                            const KernelSpec& kernel,
                            const std::vector<Index>& features,
                            double clip,
                            const LogisticOptions& options)
{
  if (kernel.dim() != 1)
    throw std::invalid_argument("single-index propensity kernel must be univariate");
  if (!(h4 > 0.0))
    throw std::invalid_argument("bandwidth must be positive");
  const auto used = features.empty() ? all_columns(data.p()) : features;
  LogisticFit fit = fit_logistic(data, used, options);

  Eigen::VectorXd slope = Eigen::VectorXd::Zero(data.p());
  for (std::size_t f = 0; f < used.size(); ++f)
    slope(used[f]) = fit.coefficients(static_cast<Index>(f) + 1);
  if (slope.norm() == 0.0)
    throw RankDeficient("logistic slope is zero; no index direction");
  const Eigen::VectorXd direction = normalize_direction(slope);

  PropensityModel m(PropensityModel::Kind::single_index, clip);
  m.logistic_ = fit;
  m.direction_ = direction;
  auto index = std::make_shared<RowMatrix>(data.X * direction);
  auto d = std::make_shared<const Eigen::VectorXd>(treatment_vector(data));
  m.raw_ = [index, d, direction, h4, kernel](std::span<const double> x) {
    double z = 0.0;
    for (Index j = 0; j < direction.size(); ++j)
      z += direction(j) * x[static_cast<std::size_t>(j)];
    return nw_regress(*index, *d, std::span<const double>(&z, 1), h4, kernel);
  };
  return m;
}

// ---------------------------------------------------------------------------
// directions

DirectionSet
DirectionSet::identity(Index p)
{
  DirectionSet s;
  s.beta1 = Eigen::MatrixXd::Identity(p, p);
  s.beta0 = Eigen::MatrixXd::Identity(p, p);
  s.source = Source::known;
  return s;
}

Eigen::VectorXd
normalize_direction(Eigen::VectorXd v)
{
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw RankDeficient("direction vector has zero or non-finite norm");
  v /= norm;
  // Entries at rounding level count as zero, otherwise a coefficient that is
  // exactly zero in theory decides the sign.
  constexpr double kZero = 1e-10;
  for (Index j = 0; j < v.size(); ++j) {
    if (std::abs(v(j)) > kZero) {
      if (v(j) < 0.0)
        v = -v;
      break;
    }
  }
  return v;
}

Eigen::MatrixXd
estimate_directions(const SampleSet& data, int arm, const DirectionMethod& method)
{
  const Index p = data.p();
  if (method.kind == DirectionMethod::Kind::known) {
    const auto& m = method.matrix;
    if (m.cols() == 0)
      return Eigen::MatrixXd(p, 0);
    if (m.rows() != p)
      throw std::invalid_argument("known direction matrix must have p = " + std::to_string(p) +
                                  " rows");
    if (!m.allFinite())
      throw std::invalid_argument("known direction matrix has non-finite entries");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
    qr.setThreshold(1e-10);
    if (qr.rank() < m.cols())
      throw RankDeficient("known direction columns are linearly dependent");
    return m;
  }

  if (method.rank == 0)
    return Eigen::MatrixXd(p, 0);
  if (method.rank != 1)
    throw UnsupportedRank("least-squares index direction supports r = 1 only, requested r = " +
                          std::to_string(method.rank));
  const auto rows = data.arm_indices(arm);
  if (static_cast<Index>(rows.size()) <= p)
    throw RankDeficient("arm " + std::to_string(arm) + " needs more than p observations for an "
                        "index direction");
  Eigen::MatrixXd A(static_cast<Index>(rows.size()), p + 1);
  Eigen::VectorXd b(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    A(static_cast<Index>(r), 0) = 1.0;
    A.row(static_cast<Index>(r)).tail(p) = data.X.row(rows[r]);
    b(static_cast<Index>(r)) = data.Y(rows[r]);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1)
    throw RankDeficient("covariates are collinear within arm " + std::to_string(arm));
  const Eigen::VectorXd coef = qr.solve(b);
  Eigen::MatrixXd out(p, 1);
  out.col(0) = normalize_direction(coef.tail(p));
  return out;
}

} // namespace cate
