#pragma once

#include "meanrisk/risk_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace meanrisk {

struct ExpectedReturns;  // market_data.hpp

/**
 * Mean-to-risk objective G = E / f(V).
 *
 * f must be positive and strictly increasing for V > 0.  Sharpe (f = sqrt V)
 * and Fano (f = V) have closed-form maximizers; Power and Exp reduce the
 * stationarity condition to a quadratic in V; anything else is handled by
 * bracketed scalar root finding through the `custom` constructor.
 */
enum class RatioKind { Sharpe, Fano, Power, Exp, Custom };

struct RatioSpec {
  RatioKind kind = RatioKind::Sharpe;
  double p = 0.5;   // Power exponent (f = V^p)
  double xi = 1.0;  // Exp rate (f = exp(xi V))
  std::function<double(double)> f;
  std::function<double(double)> f_prime;
  std::string label;

  static RatioSpec sharpe();
  static RatioSpec fano();
  static RatioSpec power(double p);
  static RatioSpec exponential(double xi);
  static RatioSpec custom(std::function<double(double)> f,
                          std::function<double(double)> f_prime,
                          std::string label = "custom");

  /// Sampling check of f > 0 and f' > 0 on a log-spaced V grid.
  void validate() const;

  double risk(double v) const { return f(v); }
  /// f(V) / (2 f'(V)), the combination the stationarity condition uses.
  double half_ratio(double v) const { return f(v) / (2.0 * f_prime(v)); }
};

/**
 * The three scalars every closed form is written in:
 *   alpha2 = E . C^{-1} E,  beta2 = nu . C^{-1} nu,  gamma = E . C^{-1} nu
 * with nu the all-ones vector.  Cauchy-Schwarz gives gamma^2 <= alpha2*beta2.
 */
struct ScalarInvariants {
  double alpha2 = 0.0;
  double beta2 = 0.0;
  double gamma = 0.0;

  double alpha() const { return std::sqrt(alpha2); }
  double beta() const { return std::sqrt(beta2); }
  /// alpha2*beta2 - gamma^2 >= 0; zero iff E is proportional to nu.
  double discriminant() const { return alpha2 * beta2 - gamma * gamma; }
};

ScalarInvariants scalar_invariants(const RiskModel& model,
                                   const Eigen::VectorXd& e);
ScalarInvariants scalar_invariants(const RiskModel& model,
                                   const ExpectedReturns& e);

/// A stationary point that was evaluated but lost the objective comparison.
struct RejectedRoot {
  double v = 0.0;
  double a = 0.0;
  double b = 0.0;
  double objective = 0.0;
};

/**
 * Maximizer output.  The weights always satisfy sum(w) = 1 and lie in the
 * two-dimensional family w = a C^{-1}E + b C^{-1}nu; e_port/v_port/sharpe/
 * fano are the achieved portfolio statistics of those exact weights.  mu is
 * the implied Lagrange multiplier of the budget constraint (reported for
 * diagnostics; downstream code never consumes it).
 */
struct OptimizerSolution {
  Eigen::VectorXd weights;
  double a = 0.0;
  double b = 0.0;
  double e_port = 0.0;
  double v_port = 0.0;
  double sharpe = 0.0;
  double fano = 0.0;
  double mu = 0.0;
  double objective = 0.0;  // achieved G = E / f(V)
  std::string spec_label;
  std::vector<RejectedRoot> rejected_roots;
};

/// b = 0, a = 1/gamma, w = C^{-1}E / gamma.  Throws DegenerateError when
/// gamma == 0 (expected returns orthogonal to the budget direction).
OptimizerSolution maximize_sharpe(const RiskModel& model,
                                  const Eigen::VectorXd& e);

/// Radical-free closed form: a = 1/(alpha beta + gamma),
/// b = alpha / (beta (alpha beta + gamma)).  Throws InfeasibleError when
/// alpha beta + gamma <= 0 (no positive-expected-return solution).
OptimizerSolution maximize_fano(const RiskModel& model,
                                const Eigen::VectorXd& e);

/// General f: solves gamma^2 (V beta2 - 1) / (alpha2 beta2 - gamma^2) =
/// (1 + beta2 [f/(2f') - V])^2 for V (analytically for Power/Exp, by
/// bracketed root scan for Custom), then picks the sign of a and the root
/// maximizing the achieved objective; losers land in rejected_roots.
OptimizerSolution maximize_general(const RiskModel& model,
                                   const Eigen::VectorXd& e,
                                   const RatioSpec& spec);

OptimizerSolution maximize_sharpe(const RiskModel& model, const ExpectedReturns& e);
OptimizerSolution maximize_fano(const RiskModel& model, const ExpectedReturns& e);
OptimizerSolution maximize_general(const RiskModel& model, const ExpectedReturns& e,
                                   const RatioSpec& spec);

/**
 * Point statistics of an arbitrary weight vector: E, V, S = E/sqrt(V),
 * F = E/V and kappa = 2F.  kappa < 1 flags the "not worth the risk" regime
 * (for a single stock this is exactly F < 1/2).  V = 0 raises
 * DegenerateError.
 */
struct PortfolioStats {
  double e = 0.0;
  double v = 0.0;
  double sharpe = 0.0;
  double fano = 0.0;
  double kappa = 0.0;
  bool bubble = false;  // kappa < 1
};

PortfolioStats evaluate_portfolio(const Eigen::VectorXd& weights,
                                  const RiskModel& model,
                                  const Eigen::VectorXd& e);

/// JSON rendering of a solution (weights, scalars, spec descriptor).
std::string solution_to_json(const OptimizerSolution& solution, int indent = 2);

}  // namespace meanrisk
