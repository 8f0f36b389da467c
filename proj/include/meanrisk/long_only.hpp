#pragma once

#include "meanrisk/ratio_optimizer.hpp"
#include "meanrisk/risk_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace meanrisk {

struct VolatilityProfile;  // market_data.hpp

/// One stock removed by the relaxation, with the iteration that removed it.
struct DroppedStock {
  Eigen::Index index = 0;
  int iteration = 0;
};

/// Partition of the universe into kept stocks and permanently removed ones.
struct ActiveSet {
  std::vector<Eigen::Index> included;  // sorted
  std::vector<DroppedStock> excluded;  // in drop order
  int iterations = 0;                  // number of drop rounds performed
};

/// Scalars of one relaxation round, kept for reporting.
struct RelaxationStep {
  int iteration = 0;
  int active_count = 0;
  ScalarInvariants scalars;
  Eigen::Index dropped = -1;    // -1 on the terminal round
  double dropped_ratio = 0.0;   // E_l / C_ll of the removed stock
};

/**
 * Long-only portfolio produced by the iterative relaxation: weights are
 * exactly zero off the active set, nonnegative and unit-sum on it, and on
 * the final active set they solve the corresponding unconstrained problem
 * restricted to those stocks.
 */
struct LongOnlySolution {
  Eigen::VectorXd weights;
  ActiveSet active_set;
  /// E_i plus the active-set shift alpha(J)/beta(J) (zero shift for the
  /// Sharpe variant).  A stock with E_i < 0 can still carry positive weight
  /// when its effective return is positive.
  Eigen::VectorXd effective_returns;
  ScalarInvariants scalars;  // on the final active set
  std::vector<RelaxationStep> history;
};

/**
 * Maximize the mean-to-variance ratio subject to w_i >= 0, sum(w) = 1 by
 * relaxation: solve unconstrained on the active set; while any weight is
 * negative, permanently remove the negative-weight stock with the smallest
 * per-stock ratio E_i/C_ii (ties: larger C_ii, then lower index) and
 * re-solve.  At most N-1 rounds.  The result approximates the constrained
 * optimum; it is exact on the final active set.
 */
LongOnlySolution fano_long_only(const RiskModel& model, const Eigen::VectorXd& e);

/// Same relaxation skeleton for the maximum-Sharpe direction C^{-1}E
/// (normalized at the end), with the same drop criterion.
LongOnlySolution sharpe_long_only(const RiskModel& model, const Eigen::VectorXd& e);

LongOnlySolution fano_long_only(const RiskModel& model, const ExpectedReturns& e);
LongOnlySolution sharpe_long_only(const RiskModel& model, const ExpectedReturns& e);

/**
 * Side-by-side diversification diagnostics of the two long-only methods,
 * plus the sqrt(N)-based volatility threshold: with sigma* the harmonic
 * aggregate (N/sigma*^2 = sum 1/sigma_i^2), a stock is unlikely to lose its
 * positive ratio shift once sigma_i < sqrt(N)/5 * sigma*, so the count of
 * stocks above that threshold bounds how many can miss the diversification
 * benefit.
 */
struct DiversificationReport {
  int n = 0;
  int fano_active = 0;
  int sharpe_active = 0;
  int negative_return_longs = 0;  // E_i < 0 yet long in the ratio portfolio
  double sigma_star = 0.0;
  double sigma_tilde_5 = 0.0;   // sqrt(N)/5  * sigma_star
  double sigma_tilde_10 = 0.0;  // sqrt(N)/10 * sigma_star
  int count_above_5 = 0;        // sigma_i >= sigma_tilde_5
  int count_above_10 = 0;
  bool fano_at_least_as_diverse = false;  // reported tendency, not a theorem
};

DiversificationReport diversification_report(const LongOnlySolution& fano_sol,
                                             const LongOnlySolution& sharpe_sol,
                                             const VolatilityProfile& sigma);

/**
 * Worked two-sector example: C_ij = sigma_i sigma_j [(1-rho) delta_ij +
 * rho s_i s_j] with s = +1 on the first half and -1 on the second.  The
 * mean-to-variance weights are computed three ways: a closed form built
 * from scalar sums only, the generic optimizer, and the large-N
 * approximation that replaces the active-set shift by E_* sigma_* / sigma_i.
 */
struct OneFactorDemoReport {
  int n = 0;
  double rho = 0.0;
  Eigen::VectorXd sigma;
  Eigen::VectorXd expected;
  Eigen::VectorXd signs;
  Eigen::VectorXd weights_closed_form;
  Eigen::VectorXd weights_optimizer;
  Eigen::VectorXd weights_approximation;
  double closed_vs_optimizer = 0.0;  // max |diff| / max |w|
  double approx_vs_closed = 0.0;
};

OneFactorDemoReport one_factor_demo(int n, double rho, std::uint64_t seed);

std::string long_only_to_json(const LongOnlySolution& solution, int indent = 2);
std::string diversification_to_json(const DiversificationReport& report,
                                    int indent = 2);

}  // namespace meanrisk
