#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace meanrisk {

/// Dense materialization is refused above this size unless forced; models
/// this large should only be touched through operator form.
inline constexpr Eigen::Index kDenseMaterializationCap = 2000;

/**
 * Abstract covariance operator C.
 *
 * Optimizers only need matrix-vector products with C and C^{-1} (plus the
 * diagonal and restrictions to an active subset), so concrete models are
 * free to exploit structure: a K-factor model never forms or inverts the N
 * x N matrix, only K x K blocks.
 */
class RiskModel {
 public:
  virtual ~RiskModel() = default;

  virtual Eigen::Index size() const = 0;

  /// C x
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& x) const = 0;

  /// C^{-1} x
  virtual Eigen::VectorXd solve(const Eigen::VectorXd& x) const = 0;

  /// diag(C)
  virtual Eigen::VectorXd diagonal() const = 0;

  /**
   * [C(J)]^{-1} x for the principal submatrix on `subset` (sorted, unique
   * indices).  `x` has subset.size() entries.  The default implementation
   * solves the dense submatrix; structured models override with cheaper
   * algebra.
   */
  virtual Eigen::VectorXd solve_restricted(
      const std::vector<Eigen::Index>& subset, const Eigen::VectorXd& x) const;

  /// Dense C. Throws std::invalid_argument above the materialization cap
  /// unless force is set.
  virtual Eigen::MatrixXd dense(bool force = false) const = 0;
};

/// Explicit dense SPD covariance. Construction factorizes; a non-PD input
/// raises NumericalError with a rough condition estimate in the message.
class DenseRiskModel : public RiskModel {
 public:
  explicit DenseRiskModel(Eigen::MatrixXd covariance);

  Eigen::Index size() const override { return c_.rows(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd solve(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd diagonal() const override { return c_.diagonal(); }
  Eigen::VectorXd solve_restricted(const std::vector<Eigen::Index>& subset,
                                   const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd dense(bool force = false) const override;

 private:
  Eigen::MatrixXd c_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Rescaled view lambda * C of another model (used by the rescaling checks).
class ScaledRiskModel : public RiskModel {
 public:
  ScaledRiskModel(const RiskModel& base, double lambda);

  Eigen::Index size() const override { return base_.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd solve(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd diagonal() const override;
  Eigen::VectorXd solve_restricted(const std::vector<Eigen::Index>& subset,
                                   const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd dense(bool force = false) const override;

 private:
  const RiskModel& base_;
  double lambda_;
};

/**
 * Multifactor covariance data:
 *
 *   C_ij = xi2_i delta_ij + sum_AB loadings_iA factor_cov_AB loadings_jB
 *
 * with strictly positive specific variances xi2 and SPD factor_cov.
 * K = 0 (empty loadings) is the pure diagonal model.
 */
struct FactorModel {
  Eigen::VectorXd xi2;        // N
  Eigen::MatrixXd loadings;   // N x K
  Eigen::MatrixXd factor_cov; // K x K

  Eigen::Index n() const { return xi2.size(); }
  Eigen::Index k() const { return loadings.cols(); }

  void validate() const;
  static FactorModel diagonal(Eigen::VectorXd variances);
};

/**
 * Operator form of a FactorModel.
 *
 * Inversion goes through the factored form: with D = diag(xi2) and
 * Q = factor_cov^{-1} + loadings^T D^{-1} loadings (K x K),
 *
 *   C^{-1} x = D^{-1} x - D^{-1} loadings Q^{-1} loadings^T D^{-1} x,
 *
 * and the restriction to an active subset J only changes Q via the rows in
 * J, so every solve costs one K x K factorization at most.  The number of
 * K x K factorizations performed is observable for efficiency tests.
 */
class FactorRiskModel : public RiskModel {
 public:
  explicit FactorRiskModel(FactorModel model);

  Eigen::Index size() const override { return model_.n(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd solve(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd diagonal() const override;
  Eigen::VectorXd solve_restricted(const std::vector<Eigen::Index>& subset,
                                   const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd dense(bool force = false) const override;

  const FactorModel& model() const { return model_; }
  std::size_t kxk_factorizations() const { return kxk_count_.load(); }

 private:
  FactorModel model_;
  Eigen::MatrixXd phi_inv_;            // factor_cov^{-1}
  Eigen::LDLT<Eigen::MatrixXd> q_llt_; // factorization of full-universe Q
  mutable std::atomic<std::size_t> kxk_count_{0};
};

/// C^{-1} x via the K x K route; subset (sorted unique) restricts to a
/// principal block. Convenience wrapper over FactorRiskModel.
Eigen::VectorXd woodbury_inverse_apply(
    const FactorModel& model, const Eigen::VectorXd& x,
    const std::vector<Eigen::Index>* subset = nullptr);

/**
 * Homogeneous linear constraints G^T w = 0 (one column per constraint).
 * Columns must be linearly independent and fewer than N.
 */
struct ConstraintSet {
  Eigen::MatrixXd g;  // N x m

  Eigen::Index m() const { return g.cols(); }
  void validate(Eigen::Index n) const;

  static ConstraintSet dollar_neutral(Eigen::Index n);
};

/**
 * Constraint-aware effective inverse.
 *
 * The loadings are padded with the constraint columns and the padded
 * factor-covariance block is kept zero on the constraint rows/columns, so
 * the resulting operator annihilates every constraint column:
 * apply(x) lies in the null space of G^T for any x.  This is how linear
 * constraints ride along with the factor machinery at no extra cost beyond
 * enlarging K by m.
 */
class PaddedInverse {
 public:
  PaddedInverse(const FactorModel& model, const ConstraintSet& constraints);

  Eigen::Index size() const { return n_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;

 private:
  Eigen::Index n_ = 0;
  Eigen::VectorXd inv_xi2_;
  Eigen::MatrixXd padded_;             // N x (K + m)
  Eigen::LDLT<Eigen::MatrixXd> q_ldlt_;
};

PaddedInverse pad_with_constraints(const FactorModel& model,
                                   const ConstraintSet& constraints);

/**
 * Uniform pairwise correlation model: C_ij = sigma_i sigma_j Psi_ij with
 * Psi = (1 - rho) I + rho nu nu^T.  Positive definite for
 * -1/(N-1) < rho < 1; construction rejects anything outside.
 */
struct UniformCorrelationModel {
  Eigen::VectorXd sigma;
  double rho = 0.0;

  Eigen::Index n() const { return sigma.size(); }
  void validate() const;

  /// One-factor form (requires rho >= 0): xi2 = sigma^2 (1-rho),
  /// loading sqrt(rho) sigma, unit factor variance.
  FactorModel to_factor_model() const;
};

class UniformCorrelationRiskModel : public RiskModel {
 public:
  explicit UniformCorrelationRiskModel(UniformCorrelationModel model);

  Eigen::Index size() const override { return model_.n(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd solve(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd diagonal() const override;
  Eigen::MatrixXd dense(bool force = false) const override;

  const UniformCorrelationModel& model() const { return model_; }

 private:
  UniformCorrelationModel model_;
};

/**
 * @brief Closed-form maximum-Sharpe weights under uniform correlations.
 *
 * w_i proportional to (1/(sigma_i (1-rho))) [Etil_i - rho/(1+(N-1)rho) *
 * sum_j Etil_j] with Etil_i = e_i / sigma_i, normalized to sum to one.
 * Exposes the sign structure of C^{-1}-based weights directly: everything
 * below (a multiple of) the cross-sectional mean goes short.
 */
Eigen::VectorXd uniform_correlation_inverse_weights(
    const UniformCorrelationModel& model, const Eigen::VectorXd& e);
struct ExpectedReturns;  // market_data.hpp
Eigen::VectorXd uniform_correlation_inverse_weights(
    const UniformCorrelationModel& model, const ExpectedReturns& e);

/// Split a correlation matrix into the uniform part and the residual:
/// rho = mean off-diagonal entry, delta = Psi - [(1-rho) I + rho nu nu^T].
/// The residual's entries sum to zero by construction.
struct CorrelationSplit {
  double rho = 0.0;
  Eigen::MatrixXd delta;
};
CorrelationSplit market_mode_split(const Eigen::MatrixXd& correlation);

/// Project factor loadings orthogonal to a positive "market" direction v
/// (componentwise > 0; defaults to all-ones when empty).
FactorModel remove_market_mode_factor(const FactorModel& model,
                                      const Eigen::VectorXd& v = {});

/// Benchmark direction v_i = 1/sigma_i^2 with tails winsorized at the given
/// quantiles (alternative to the all-ones default).
Eigen::VectorXd inverse_variance_benchmark(const Eigen::VectorXd& sigma,
                                           double lo_quantile = 0.01,
                                           double hi_quantile = 0.99);

/// exp(entropy) of the normalized eigenvalue distribution. Requires
/// nonnegative eigenvalues, at least one positive.
double effective_rank(const Eigen::VectorXd& eigenvalues);

/**
 * Statistical (principal-component) risk model built from a sample
 * correlation matrix.
 *
 * Kept components are a = 1..K (market retained) or a = 2..K (market
 * removed); the specific variances absorb everything else so the model
 * correlation matrix keeps a unit diagonal either way.  K is the rounded
 * effective rank of the sample spectrum, clamped to [1, rank-1].
 */
struct StatisticalModel {
  Eigen::VectorXd sigma;           // per-instrument vols (sample SD)
  Eigen::VectorXd eigenvalues;     // kept lambda^(a), descending
  Eigen::MatrixXd components;      // N x kept, orthonormal columns
  Eigen::VectorXd specific;        // xi^2 on the correlation scale
  bool market_mode_removed = false;
  double market_eigenvalue = 0.0;  // lambda^(1)
  Eigen::VectorXd market_component;
  double erank = 0.0;              // effective rank (real)
  int k = 0;                       // chosen component count
  int sample_rank = 0;
  std::vector<std::string> warnings;  // e.g. requested K clamped to rank-1

  Eigen::Index n() const { return sigma.size(); }
  FactorModel to_factor_model() const;

  /// Model correlation matrix (unit diagonal).
  Eigen::MatrixXd correlation_dense() const;
};

struct StatisticalModelOptions {
  bool truncate_erank = false;      // floor instead of round-half-up
  std::optional<int> k_override;    // force the component count
  double specific_floor = 1e-12;    // guard for degenerate spectra
};

struct ReturnsPanel;  // market_data.hpp

/// Build from the full panel window handed in (callers pre-trim columns).
/// Instruments with zero in-window variance must be excluded beforehand.
StatisticalModel build_statistical_model(
    const ReturnsPanel& panel, bool remove_market_mode,
    const StatisticalModelOptions& options = {});

// --- serialization ------------------------------------------------------
//
// Versioned flat text format, decimal full-precision numbers.

void save_factor_model(const std::filesystem::path& path, const FactorModel& model);
FactorModel load_factor_model(const std::filesystem::path& path);

/// Constraint matrices travel as headerless numeric CSV, one row per
/// instrument, one column per constraint.
void save_constraints_csv(const std::filesystem::path& path, const ConstraintSet& constraints);
ConstraintSet load_constraints_csv(const std::filesystem::path& path);

}  // namespace meanrisk
