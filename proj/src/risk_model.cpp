#include "meanrisk/risk_model.hpp"

#include "meanrisk/errors.hpp"
#include "meanrisk/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace meanrisk {

namespace {

std::string condition_summary(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  std::ostringstream out;
  if (es.info() != Eigen::Success) {
    out << "eigenvalue estimate unavailable";
    return out.str();
  }
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  out << "lambda_min=" << lo << ", lambda_max=" << hi;
  if (lo > 0.0) out << ", cond~" << hi / lo;
  return out.str();
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m,
                          const std::vector<Eigen::Index>& subset) {
  const Eigen::Index k = static_cast<Eigen::Index>(subset.size());
  Eigen::MatrixXd out(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      out(a, b) = m(subset[static_cast<std::size_t>(a)],
                    subset[static_cast<std::size_t>(b)]);
  return out;
}

void check_subset(const std::vector<Eigen::Index>& subset, Eigen::Index n,
                  Eigen::Index x_size) {
  if (subset.empty()) throw std::invalid_argument("subset must be non-empty");
  if (x_size != static_cast<Eigen::Index>(subset.size()))
    throw std::invalid_argument("subset vector length mismatch");
  Eigen::Index prev = -1;
  for (Eigen::Index i : subset) {
    if (i < 0 || i >= n) throw std::out_of_range("subset index out of range");
    if (i <= prev) throw std::invalid_argument("subset must be sorted and unique");
    prev = i;
  }
}

}  // namespace

Eigen::VectorXd RiskModel::solve_restricted(
    const std::vector<Eigen::Index>& subset, const Eigen::VectorXd& x) const {
  check_subset(subset, size(), x.size());
  const Eigen::MatrixXd sub = submatrix(dense(true), subset);
  Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success)
    throw NumericalError("restricted covariance block not positive definite (" +
                         condition_summary(sub) + ")");
  return llt.solve(x);
}

// --- DenseRiskModel -----------------------------------------------------

DenseRiskModel::DenseRiskModel(Eigen::MatrixXd covariance) : c_(std::move(covariance)) {
  if (c_.rows() != c_.cols() || c_.rows() < 1)
    throw std::invalid_argument("covariance must be square and non-empty");
  const double scale = c_.cwiseAbs().maxCoeff();
  if ((c_ - c_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0))
    throw std::invalid_argument("covariance must be symmetric");
  c_ = ((c_ + c_.transpose()) / 2.0).eval();
  llt_.compute(c_);
  if (llt_.info() != Eigen::Success)
    throw NumericalError("covariance not positive definite (" +
                         condition_summary(c_) + ")");
}

Eigen::VectorXd DenseRiskModel::apply(const Eigen::VectorXd& x) const {
  return c_ * x;
}

Eigen::VectorXd DenseRiskModel::solve(const Eigen::VectorXd& x) const {
  return llt_.solve(x);
}

Eigen::VectorXd DenseRiskModel::solve_restricted(
    const std::vector<Eigen::Index>& subset, const Eigen::VectorXd& x) const {
  check_subset(subset, size(), x.size());
  const Eigen::MatrixXd sub = submatrix(c_, subset);
  Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success)
    throw NumericalError("restricted covariance block not positive definite (" +
                         condition_summary(sub) + ")");
  return llt.solve(x);
}

Eigen::MatrixXd DenseRiskModel::dense(bool force) const {
  if (!force && size() > kDenseMaterializationCap)
    throw std::invalid_argument("dense materialization refused above cap");
  return c_;
}

// --- ScaledRiskModel ----------------------------------------------------

ScaledRiskModel::ScaledRiskModel(const RiskModel& base, double lambda)
    : base_(base), lambda_(lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("scale factor must be positive and finite");
}

Eigen::VectorXd ScaledRiskModel::apply(const Eigen::VectorXd& x) const {
  return lambda_ * base_.apply(x);
}

Eigen::VectorXd ScaledRiskModel::solve(const Eigen::VectorXd& x) const {
  return base_.solve(x) / lambda_;
}

Eigen::VectorXd ScaledRiskModel::diagonal() const {
  return lambda_ * base_.diagonal();
}

Eigen::VectorXd ScaledRiskModel::solve_restricted(
    const std::vector<Eigen::Index>& subset, const Eigen::VectorXd& x) const {
  return base_.solve_restricted(subset, x) / lambda_;
}

Eigen::MatrixXd ScaledRiskModel::dense(bool force) const {
  return lambda_ * base_.dense(force);
}

// --- FactorModel --------------------------------------------------------

void FactorModel::validate() const {
  const Eigen::Index N = xi2.size();
  if (N < 1) throw std::invalid_argument("factor model needs at least one instrument");
  if (!(xi2.array() > 0.0).all())
    throw std::invalid_argument("specific variances must be strictly positive");
  if (loadings.rows() != N && !(k() == 0 && loadings.rows() == 0))
    throw std::invalid_argument("loadings row count does not match xi2");
  if (factor_cov.rows() != k() || factor_cov.cols() != k())
    throw std::invalid_argument("factor covariance must be K x K");
  if (k() > N) throw std::invalid_argument("factor count must not exceed instrument count");
  if (k() > 0) {
    const double scale = std::max(factor_cov.cwiseAbs().maxCoeff(), 1.0);
    if ((factor_cov - factor_cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw std::invalid_argument("factor covariance must be symmetric");
  }
}

FactorModel FactorModel::diagonal(Eigen::VectorXd variances) {
  FactorModel m;
  m.xi2 = std::move(variances);
  m.loadings.resize(m.xi2.size(), 0);
  m.factor_cov.resize(0, 0);
  m.validate();
  return m;
}

FactorRiskModel::FactorRiskModel(FactorModel model) : model_(std::move(model)) {
  model_.validate();
  const Eigen::Index K = model_.k();
  if (K > 0) {
    Eigen::LLT<Eigen::MatrixXd> phi_llt(model_.factor_cov);
    if (phi_llt.info() != Eigen::Success)
      throw NumericalError("factor covariance not positive definite (" +
                           condition_summary(model_.factor_cov) + ")");
    phi_inv_ = phi_llt.solve(Eigen::MatrixXd::Identity(K, K));
    const Eigen::MatrixXd scaled =
        model_.loadings.array().colwise() / model_.xi2.array();
    Eigen::MatrixXd q = phi_inv_ + model_.loadings.transpose() * scaled.matrix();
    q_llt_.compute(q);
    ++kxk_count_;
    if (q_llt_.info() != Eigen::Success || !q_llt_.isPositive())
      throw NumericalError("factor solve block singular (" +
                           condition_summary(q) + ")");
  }
}

Eigen::VectorXd FactorRiskModel::apply(const Eigen::VectorXd& x) const {
  if (x.size() != size()) throw std::invalid_argument("vector length mismatch");
  Eigen::VectorXd out = model_.xi2.cwiseProduct(x);
  if (model_.k() > 0)
    out += model_.loadings * (model_.factor_cov * (model_.loadings.transpose() * x));
  return out;
}

Eigen::VectorXd FactorRiskModel::solve(const Eigen::VectorXd& x) const {
  if (x.size() != size()) throw std::invalid_argument("vector length mismatch");
  Eigen::VectorXd d = x.cwiseQuotient(model_.xi2);
  if (model_.k() == 0) return d;
  const Eigen::VectorXd t = q_llt_.solve(model_.loadings.transpose() * d);
  return d - (model_.loadings * t).cwiseQuotient(model_.xi2);
}

Eigen::VectorXd FactorRiskModel::diagonal() const {
  Eigen::VectorXd out = model_.xi2;
  if (model_.k() > 0)
    out += ((model_.loadings * model_.factor_cov).array() * model_.loadings.array())
               .rowwise()
               .sum()
               .matrix();
  return out;
}

Eigen::VectorXd FactorRiskModel::solve_restricted(
    const std::vector<Eigen::Index>& subset, const Eigen::VectorXd& x) const {
  check_subset(subset, size(), x.size());
  const Eigen::Index nj = static_cast<Eigen::Index>(subset.size());
  const Eigen::Index K = model_.k();
  Eigen::VectorXd xi2_j(nj);
  for (Eigen::Index a = 0; a < nj; ++a)
    xi2_j[a] = model_.xi2[subset[static_cast<std::size_t>(a)]];
  Eigen::VectorXd d = x.cwiseQuotient(xi2_j);
  if (K == 0) return d;
  Eigen::MatrixXd omega_j(nj, K);
  for (Eigen::Index a = 0; a < nj; ++a)
    omega_j.row(a) = model_.loadings.row(subset[static_cast<std::size_t>(a)]);
  // Q(J) = phi^{-1} + sum_{i in J} omega_i omega_i^T / xi_i^2
  const Eigen::MatrixXd scaled = omega_j.array().colwise() / xi2_j.array();
  Eigen::MatrixXd q = phi_inv_ + omega_j.transpose() * scaled.matrix();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(q);
  ++kxk_count_;
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericalError("restricted factor solve block singular (" +
                         condition_summary(q) + ")");
  const Eigen::VectorXd t = ldlt.solve(omega_j.transpose() * d);
  return d - (omega_j * t).cwiseQuotient(xi2_j);
}

Eigen::MatrixXd FactorRiskModel::dense(bool force) const {
  if (!force && size() > kDenseMaterializationCap)
    throw std::invalid_argument("dense materialization refused above cap");
  Eigen::MatrixXd c = model_.xi2.asDiagonal();
  if (model_.k() > 0)
    c += model_.loadings * model_.factor_cov * model_.loadings.transpose();
  return c;
}

Eigen::VectorXd woodbury_inverse_apply(const FactorModel& model,
                                       const Eigen::VectorXd& x,
                                       const std::vector<Eigen::Index>* subset) {
  FactorRiskModel op(model);
  if (subset == nullptr) return op.solve(x);
  return op.solve_restricted(*subset, x);
}

// --- constraints --------------------------------------------------------

void ConstraintSet::validate(Eigen::Index n) const {
  if (m() == 0) return;  // no constraints: a valid (trivial) set
  if (g.rows() != n)
    throw std::invalid_argument("constraint rows must match instrument count");
  if (g.cols() >= n)
    throw std::invalid_argument("need fewer constraints than instruments");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(g);
  if (qr.rank() < g.cols())
    throw std::invalid_argument("constraint columns must be linearly independent");
}

ConstraintSet ConstraintSet::dollar_neutral(Eigen::Index n) {
  ConstraintSet c;
  c.g = Eigen::MatrixXd::Ones(n, 1);
  return c;
}

PaddedInverse::PaddedInverse(const FactorModel& model,
                             const ConstraintSet& constraints) {
  model.validate();
  constraints.validate(model.n());
  n_ = model.n();
  const Eigen::Index K = model.k();
  const Eigen::Index m = constraints.m();
  inv_xi2_ = model.xi2.cwiseInverse();

  padded_.resize(n_, K + m);
  if (K > 0) padded_.leftCols(K) = model.loadings;
  if (m > 0) padded_.rightCols(m) = constraints.g;

  // phi-tilde keeps phi^{-1} on the factor block and zeros elsewhere, so
  // the operator annihilates the constraint columns exactly.
  Eigen::MatrixXd phi_tilde = Eigen::MatrixXd::Zero(K + m, K + m);
  if (K > 0) {
    Eigen::LLT<Eigen::MatrixXd> phi_llt(model.factor_cov);
    if (phi_llt.info() != Eigen::Success)
      throw NumericalError("factor covariance not positive definite (" +
                           condition_summary(model.factor_cov) + ")");
    phi_tilde.topLeftCorner(K, K) =
        phi_llt.solve(Eigen::MatrixXd::Identity(K, K));
  }
  const Eigen::MatrixXd scaled = padded_.array().colwise() * inv_xi2_.array();
  Eigen::MatrixXd q = phi_tilde + padded_.transpose() * scaled.matrix();
  q_ldlt_.compute(q);
  if (q_ldlt_.info() != Eigen::Success || !q_ldlt_.isPositive())
    throw NumericalError("padded solve block singular (" + condition_summary(q) +
                         ")");
}

Eigen::VectorXd PaddedInverse::apply(const Eigen::VectorXd& x) const {
  if (x.size() != n_) throw std::invalid_argument("vector length mismatch");
  const Eigen::VectorXd d = x.cwiseProduct(inv_xi2_);
  const Eigen::VectorXd t = q_ldlt_.solve(padded_.transpose() * d);
  return d - (padded_ * t).cwiseProduct(inv_xi2_);
}

PaddedInverse pad_with_constraints(const FactorModel& model,
                                   const ConstraintSet& constraints) {
  return PaddedInverse(model, constraints);
}

// --- uniform correlation ------------------------------------------------

void UniformCorrelationModel::validate() const {
  const Eigen::Index N = n();
  if (N < 1) throw std::invalid_argument("model needs at least one instrument");
  if (!(sigma.array() > 0.0).all())
    throw std::invalid_argument("volatilities must be strictly positive");
  const double lo = N > 1 ? -1.0 / static_cast<double>(N - 1)
                          : -std::numeric_limits<double>::infinity();
  if (!(rho > lo && rho < 1.0))
    throw std::invalid_argument(
        "uniform correlation outside the positive-definite range (-1/(N-1), 1)");
}

FactorModel UniformCorrelationModel::to_factor_model() const {
  validate();
  if (rho < 0.0)
    throw std::invalid_argument(
        "one-factor form needs rho >= 0 (negative rho has no real loading)");
  FactorModel m;
  m.xi2 = sigma.array().square() * (1.0 - rho);
  m.loadings = std::sqrt(rho) * sigma;
  m.factor_cov = Eigen::MatrixXd::Identity(1, 1);
  m.validate();
  return m;
}

UniformCorrelationRiskModel::UniformCorrelationRiskModel(UniformCorrelationModel model)
    : model_(std::move(model)) {
  model_.validate();
}

Eigen::VectorXd UniformCorrelationRiskModel::apply(const Eigen::VectorXd& x) const {
  if (x.size() != size()) throw std::invalid_argument("vector length mismatch");
  const auto& s = model_.sigma;
  const Eigen::VectorXd sx = s.cwiseProduct(x);
  return s.cwiseProduct((1.0 - model_.rho) * sx +
                        Eigen::VectorXd::Constant(size(), model_.rho * sx.sum()));
}

Eigen::VectorXd UniformCorrelationRiskModel::solve(const Eigen::VectorXd& x) const {
  if (x.size() != size()) throw std::invalid_argument("vector length mismatch");
  const auto& s = model_.sigma;
  const double N = static_cast<double>(size());
  const double c = model_.rho / (1.0 + (N - 1.0) * model_.rho);
  const Eigen::VectorXd y = x.cwiseQuotient(s);
  const double total = y.sum();
  return (y.array() - c * total).matrix().cwiseQuotient(s) / (1.0 - model_.rho);
}

Eigen::VectorXd UniformCorrelationRiskModel::diagonal() const {
  return model_.sigma.array().square();
}

Eigen::MatrixXd UniformCorrelationRiskModel::dense(bool force) const {
  if (!force && size() > kDenseMaterializationCap)
    throw std::invalid_argument("dense materialization refused above cap");
  const Eigen::Index N = size();
  Eigen::MatrixXd psi =
      Eigen::MatrixXd::Constant(N, N, model_.rho) +
      (1.0 - model_.rho) * Eigen::MatrixXd::Identity(N, N);
  return model_.sigma.asDiagonal() * psi * model_.sigma.asDiagonal();
}

Eigen::VectorXd uniform_correlation_inverse_weights(
    const UniformCorrelationModel& model, const Eigen::VectorXd& e) {
  model.validate();
  if (e.size() != model.n()) throw std::invalid_argument("returns length mismatch");
  const Eigen::Index N = model.n();
  const double c = model.rho / (1.0 + (static_cast<double>(N) - 1.0) * model.rho);
  const Eigen::VectorXd etil = e.cwiseQuotient(model.sigma);
  const double total = etil.sum();
  Eigen::VectorXd w =
      ((etil.array() - c * total) / (model.sigma.array() * (1.0 - model.rho)))
          .matrix();
  const double sum = w.sum();
  if (std::abs(sum) < 1e-14 * w.cwiseAbs().sum())
    throw DegenerateError("inverse weights sum to zero; cannot normalize to unit budget");
  return w / sum;
}

Eigen::VectorXd uniform_correlation_inverse_weights(
    const UniformCorrelationModel& model, const ExpectedReturns& e) {
  return uniform_correlation_inverse_weights(model, e.values);
}

CorrelationSplit market_mode_split(const Eigen::MatrixXd& correlation) {
  const Eigen::Index N = correlation.rows();
  if (N < 2 || correlation.cols() != N)
    throw std::invalid_argument("need a square correlation matrix with N >= 2");
  const double off_sum = correlation.sum() - correlation.diagonal().sum();
  const double rho = off_sum / (static_cast<double>(N) * (N - 1));
  CorrelationSplit split;
  split.rho = rho;
  split.delta = correlation -
                (Eigen::MatrixXd::Constant(N, N, rho) +
                 (1.0 - rho) * Eigen::MatrixXd::Identity(N, N));
  return split;
}

FactorModel remove_market_mode_factor(const FactorModel& model,
                                      const Eigen::VectorXd& v) {
  model.validate();
  Eigen::VectorXd dir = v.size() == 0 ? Eigen::VectorXd::Ones(model.n()) : v;
  if (dir.size() != model.n())
    throw std::invalid_argument("market direction length mismatch");
  if (!(dir.array() > 0.0).all())
    throw std::invalid_argument("market direction must be componentwise positive");
  FactorModel out = model;
  if (model.k() == 0) return out;
  const double vtv = dir.squaredNorm();
  out.loadings = model.loadings -
                 dir * (dir.transpose() * model.loadings) / vtv;
  return out;
}

Eigen::VectorXd inverse_variance_benchmark(const Eigen::VectorXd& sigma,
                                           double lo_quantile,
                                           double hi_quantile) {
  if (sigma.size() < 1) throw std::invalid_argument("empty volatility vector");
  if (!(sigma.array() > 0.0).all())
    throw std::invalid_argument("volatilities must be strictly positive");
  if (!(lo_quantile >= 0.0 && lo_quantile < hi_quantile && hi_quantile <= 1.0))
    throw std::invalid_argument("need 0 <= lo < hi <= 1 for winsor quantiles");
  Eigen::VectorXd v = sigma.array().square().inverse();
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&sorted](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  const double lo = quantile(lo_quantile);
  const double hi = quantile(hi_quantile);
  return v.cwiseMax(lo).cwiseMin(hi);
}

// --- statistical model --------------------------------------------------

double effective_rank(const Eigen::VectorXd& eigenvalues) {
  if (eigenvalues.size() == 0)
    throw std::invalid_argument("empty eigenvalue list");
  if ((eigenvalues.array() < 0.0).any())
    throw std::invalid_argument("eigenvalues must be nonnegative");
  const double total = eigenvalues.sum();
  if (!(total > 0.0))
    throw std::invalid_argument("eigenvalue spectrum must have positive mass");
  double entropy = 0.0;
  for (Eigen::Index a = 0; a < eigenvalues.size(); ++a) {
    const double p = eigenvalues[a] / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

StatisticalModel build_statistical_model(const ReturnsPanel& panel,
                                         bool remove_market_mode,
                                         const StatisticalModelOptions& options) {
  panel.validate();
  const Eigen::Index N = panel.n();
  const Eigen::Index T = panel.t();
  if (N < 2) throw std::invalid_argument("need at least two instruments");
  if (T < 2) throw std::invalid_argument("need at least two days");

  // Row-normalize: Z has unit-norm demeaned rows, so Psi_sample = Z Z^T is
  // the sample correlation matrix with an exactly unit diagonal.
  Eigen::MatrixXd z = panel.returns;
  Eigen::VectorXd sigma(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double mean = z.row(i).mean();
    z.row(i).array() -= mean;
    const double norm = z.row(i).norm();
    if (norm == 0.0)
      throw std::invalid_argument(
          "instrument with zero in-window variance must be excluded first: " +
          panel.tickers[static_cast<std::size_t>(i)]);
    sigma[i] = norm / std::sqrt(static_cast<double>(T - 1));
    z.row(i) /= norm;
  }

  // Eigendecompose Psi_sample; go through the thin SVD of Z when T << N so
  // the cost scales with the actual rank.
  Eigen::VectorXd lambda;
  Eigen::MatrixXd vecs;
  if (T < N) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinU);
    lambda = svd.singularValues().array().square();
    vecs = svd.matrixU();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(z * z.transpose());
    if (es.info() != Eigen::Success)
      throw NumericalError("sample correlation eigendecomposition failed");
    lambda = es.eigenvalues().reverse();
    vecs = es.eigenvectors().rowwise().reverse();
  }
  lambda = lambda.cwiseMax(0.0);

  const double lead = lambda[0];
  if (!(lead > 0.0)) throw NumericalError("sample correlation has empty spectrum");
  int rank = 0;
  for (Eigen::Index a = 0; a < lambda.size(); ++a)
    if (lambda[a] > 1e-10 * lead) ++rank;

  // Sign convention: flip coordinates so the first principal component is
  // componentwise positive (zero entries count as positive).
  for (Eigen::Index i = 0; i < N; ++i)
    if (vecs(i, 0) < 0.0) vecs.row(i) = -vecs.row(i);

  const Eigen::VectorXd positive = lambda.head(rank);
  const double erank = effective_rank(positive);
  int k;
  if (options.k_override) {
    k = *options.k_override;
    if (k < 1) throw std::invalid_argument("component count must be >= 1");
  } else {
    k = options.truncate_erank ? static_cast<int>(std::floor(erank))
                               : static_cast<int>(std::floor(erank + 0.5));
  }
  k = std::max(k, 1);
  std::vector<std::string> warnings;
  const int k_cap = rank >= 2 ? rank - 1 : 1;
  if (k > k_cap) {
    warnings.push_back("requested " + std::to_string(k) +
                       " components but sample rank is " + std::to_string(rank) +
                       "; reduced to " + std::to_string(k_cap));
    k = k_cap;
  }

  const int kept_begin = remove_market_mode ? 1 : 0;
  const int kept_count = std::max(k - kept_begin, 0);

  StatisticalModel model;
  model.sigma = sigma;
  model.market_mode_removed = remove_market_mode;
  model.market_eigenvalue = lambda[0];
  model.market_component = vecs.col(0);
  model.erank = erank;
  model.k = k;
  model.sample_rank = rank;
  model.eigenvalues = lambda.segment(kept_begin, kept_count);
  model.components = vecs.middleCols(kept_begin, kept_count);

  // Specific variances absorb everything not kept, so the model
  // correlation matrix retains a unit diagonal.
  Eigen::VectorXd specific = Eigen::VectorXd::Ones(N);
  for (int a = 0; a < kept_count; ++a)
    specific -= model.eigenvalues[a] *
                model.components.col(a).array().square().matrix();
  if ((specific.array() < options.specific_floor).any())
    warnings.push_back("some specific variances hit the floor " +
                       std::to_string(options.specific_floor));
  model.specific = specific.cwiseMax(options.specific_floor);
  model.warnings = std::move(warnings);
  return model;
}

FactorModel StatisticalModel::to_factor_model() const {
  FactorModel m;
  m.xi2 = sigma.array().square() * specific.array();
  const Eigen::Index kept = components.cols();
  m.loadings = components.array().colwise() * sigma.array();
  m.factor_cov = eigenvalues.asDiagonal();
  if (kept == 0) {
    m.loadings.resize(sigma.size(), 0);
    m.factor_cov.resize(0, 0);
  }
  m.validate();
  return m;
}

Eigen::MatrixXd StatisticalModel::correlation_dense() const {
  Eigen::MatrixXd psi = specific.asDiagonal();
  if (components.cols() > 0)
    psi += components * eigenvalues.asDiagonal() * components.transpose();
  return psi;
}

// --- serialization ------------------------------------------------------

void save_factor_model(const std::filesystem::path& path, const FactorModel& model) {
  model.validate();
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const Eigen::Index N = model.n();
  const Eigen::Index K = model.k();
  out << "meanrisk-riskmodel v1\n";
  out << "kind factor\n";
  out << "n " << N << "\n";
  out << "k " << K << "\n";
  out << "xi2\n";
  for (Eigen::Index i = 0; i < N; ++i)
    out << model.xi2[i] << (i + 1 == N ? '\n' : ' ');
  out << "loadings\n";
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index a = 0; a < K; ++a)
      out << model.loadings(i, a) << (a + 1 == K ? '\n' : ' ');
    if (K == 0) out << '\n';
  }
  out << "factor_cov\n";
  for (Eigen::Index a = 0; a < K; ++a)
    for (Eigen::Index b = 0; b < K; ++b)
      out << model.factor_cov(a, b) << (b + 1 == K ? '\n' : ' ');
  out << "end\n";
  if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

namespace {

void expect_token(std::istream& in, const std::string& expected,
                  const std::filesystem::path& path) {
  std::string token;
  if (!(in >> token) || token != expected)
    throw std::invalid_argument("malformed risk model file (expected '" +
                                expected + "'): " + path.string());
}

}  // namespace

FactorModel load_factor_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  expect_token(in, "meanrisk-riskmodel", path);
  std::string version;
  in >> version;
  if (version != "v1")
    throw std::invalid_argument("unsupported risk model version '" + version +
                                "': " + path.string());
  expect_token(in, "kind", path);
  std::string kind;
  in >> kind;
  if (kind != "factor")
    throw std::invalid_argument("unsupported risk model kind '" + kind +
                                "': " + path.string());
  Eigen::Index n = 0, k = 0;
  expect_token(in, "n", path);
  in >> n;
  expect_token(in, "k", path);
  in >> k;
  if (!in || n < 1 || k < 0)
    throw std::invalid_argument("malformed risk model dimensions: " + path.string());
  FactorModel model;
  model.xi2.resize(n);
  model.loadings.resize(n, k);
  model.factor_cov.resize(k, k);
  expect_token(in, "xi2", path);
  for (Eigen::Index i = 0; i < n; ++i) in >> model.xi2[i];
  expect_token(in, "loadings", path);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < k; ++a) in >> model.loadings(i, a);
  expect_token(in, "factor_cov", path);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) in >> model.factor_cov(a, b);
  if (!in) throw std::invalid_argument("truncated risk model file: " + path.string());
  expect_token(in, "end", path);
  model.validate();
  return model;
}

void save_constraints_csv(const std::filesystem::path& path,
                          const ConstraintSet& constraints) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < constraints.g.rows(); ++i) {
    for (Eigen::Index j = 0; j < constraints.g.cols(); ++j)
      out << constraints.g(i, j) << (j + 1 == constraints.g.cols() ? '\n' : ',');
  }
  if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

ConstraintSet load_constraints_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<double> row;
    while (std::getline(ls, field, ',')) {
      try {
        row.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw std::invalid_argument("bad numeric cell in " + path.string());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("ragged constraint csv: " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("empty constraint csv: " + path.string());
  ConstraintSet c;
  c.g.resize(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      c.g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return c;
}

}  // namespace meanrisk
