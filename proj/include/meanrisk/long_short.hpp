#pragma once

#include "meanrisk/risk_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace meanrisk {

struct ExpectedReturns;  // market_data.hpp

/// Per-stock box w-_i <= w_i <= w+_i. Bounds must straddle zero so the
/// unbounded direction is always reachable by shrinking.
struct PositionBounds {
  Eigen::VectorXd lower;  // all < 0
  Eigen::VectorXd upper;  // all > 0

  void validate(Eigen::Index n) const;

  /// +/- cap_i around zero.
  static PositionBounds symmetric(const Eigen::VectorXd& cap);
};

/**
 * Configuration of a multiply-optimized long-short strategy: how many
 * reoptimization levels to stack, the relative coefficient between them,
 * and optional linear constraints / position boxes on the final weights.
 */
struct MultiOptSpec {
  int n_opt = 1;       // number of stacked levels, >= 1
  double b_hat = 1.0;  // dimensionless relative coefficient between levels
  std::optional<ConstraintSet> constraints;
  std::optional<PositionBounds> bounds;

  void validate(Eigen::Index n) const;
};

/**
 * The reoptimized return stack E^(1)..E^(n_opt) with E^(p+1) = C^{-1}E^(p),
 * plus the scale h that makes the blending coefficient dimensionless:
 *
 *   h^2 = (E . C^{-1}E) / (E^(2) . C^{-1}E^(2)) > 0.
 *
 * Under E -> zeta E and C -> lambda C, h -> lambda h, so b_hat stays a pure
 * number.
 */
struct IteratedReturns {
  std::vector<Eigen::VectorXd> levels;
  double h = 0.0;
};

IteratedReturns iterate_returns(const RiskModel& model, const Eigen::VectorXd& e,
                                int n_opt);

struct MultiOptSolution {
  Eigen::VectorXd weights;  // sum |w_i| = 1 (bounds permitting)
  double a = 0.0;           // overall normalization coefficient
  double h = 0.0;
  double b_tilde = 0.0;     // b_hat * h
  int n_opt = 1;
  double b_hat = 1.0;
  Eigen::VectorXd e_hat;    // blended return stack driving the final solve
  std::vector<Eigen::Index> at_bound;  // coordinates clipped to a bound
};

/**
 * Stacked long-short weights w = a C^{-1} E_hat with
 * E_hat = sum_p (b_hat h)^{p-1} E^(p), normalized to unit gross exposure.
 * Constraints apply only to the final solve (factor models ride the padded
 * inverse; dense models solve the equivalent saddle system); the stack
 * itself always uses the raw inverse.  Position bounds, when present, are
 * imposed on the final solve as well.
 */
MultiOptSolution multiply_optimized_weights(const RiskModel& model,
                                            const Eigen::VectorXd& e,
                                            const MultiOptSpec& spec);
MultiOptSolution multiply_optimized_weights(const RiskModel& model,
                                            const ExpectedReturns& e,
                                            const MultiOptSpec& spec);

/// One rescaling trial: weights recomputed under E -> zeta E, C -> lambda C.
struct RescalingTrial {
  double zeta = 1.0;
  double lambda = 1.0;
  double max_deviation = 0.0;  // sup-norm gap vs the baseline weights
};

struct RescalingCheck {
  std::vector<RescalingTrial> trials;
  double worst = 0.0;
  bool passed = false;  // worst <= 1e-10
};

/// Recomputes the weights on a grid of return/covariance rescalings and
/// records the largest deviation; normalized weights must be invariant.
RescalingCheck rescaling_check(const RiskModel& model, const Eigen::VectorXd& e,
                               const MultiOptSpec& spec,
                               std::uint64_t seed = 7);

struct TanhOptions {
  int max_iter = 100;
  double tol = 1e-10;
  /// Blend factor toward the previous iterate; unset = plain iteration.
  /// 0.5 is a reasonable value when signs flip-flop.
  std::optional<double> damping;
};

struct TanhSolution {
  Eigen::VectorXd weights;
  bool converged = false;
  int iterations = 0;
  double last_change = 0.0;  // sup-norm of the final update
  double a = 0.0;            // coefficients of the last evaluated pass
  double b = 0.0;
};

/**
 * Smoothed-sign fixed point: w = normalize(C^{-1}[a E + b tanh(w/Delta)])
 * with (a, b) recomputed each pass from the ratio closed form, the smoothed
 * sign vector standing in for the budget direction.  Non-convergence (sign
 * flip-flop) is reported through the flag, not an exception.
 */
TanhSolution tanh_fixed_point(const RiskModel& model, const Eigen::VectorXd& e,
                              const Eigen::VectorXd& delta,
                              const TanhOptions& options = {});
TanhSolution tanh_fixed_point(const RiskModel& model, const Eigen::VectorXd& e,
                              double delta, const TanhOptions& options = {});

/**
 * Interpolation between inverse-covariance weights and a weighted
 * cross-sectional regression: w proportional to (C - theta diag(xi^2))^{-1}E
 * for 0 < theta < 1, and at theta = 1 the limit w_i proportional to
 * eps_i/xi_i^2 where eps are the residuals of regressing E on the factor
 * loadings with weights 1/xi^2 (no intercept).  Normalized to sum |w| = 1.
 */
Eigen::VectorXd regression_limit_weights(const FactorModel& model,
                                         const Eigen::VectorXd& e,
                                         double theta);

struct LinearizedSolution {
  Eigen::VectorXd weights;
  double h = 0.0;
  double b_tilde = 0.0;
  bool exact = false;    // false: shifted matrix not PD, series fallback used
  int series_terms = 0;  // stack depth of the fallback (0 when exact)
};

/**
 * Exact solve of the linearized smoothed-sign equation: w solves
 * (C - b_tilde I) w = a E with b_tilde = b_hat h and a fixed by unit gross
 * exposure.  When the shifted matrix is not positive definite the truncated
 * stack of `fallback_n_opt` levels is returned instead, flagged as inexact.
 */
LinearizedSolution linearized_weights(const RiskModel& model,
                                      const Eigen::VectorXd& e, double b_hat,
                                      int fallback_n_opt = 8);

struct BoundedSolveResult {
  Eigen::VectorXd weights;
  std::vector<Eigen::Index> at_bound;  // sorted clipped coordinates
  double a = 0.0;  // free-set multiplier of the final round
  int rounds = 0;  // clipping rounds performed
};

/**
 * Impose a position box on the stacked-return solve by iterated clipping:
 * violating coordinates are fixed at their bound, the free set is re-solved
 * with the budget refilled to unit gross exposure, until stable.  Free
 * coordinates satisfy the unbounded stationarity condition of the final
 * round; linear constraints hold throughout.
 */
BoundedSolveResult apply_position_bounds(
    const Eigen::VectorXd& e_hat, const RiskModel& model,
    const PositionBounds& bounds,
    const std::optional<ConstraintSet>& constraints = std::nullopt);

std::string multi_opt_to_json(const MultiOptSolution& solution, int indent = 2);
std::string tanh_to_json(const TanhSolution& solution, int indent = 2);

}  // namespace meanrisk
