#include "meanrisk/long_short.hpp"

#include "meanrisk/errors.hpp"
#include "meanrisk/market_data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <utility>

namespace meanrisk {

namespace {

void check_returns(const Eigen::VectorXd& e, Eigen::Index n) {
  if (e.size() != n)
    throw std::invalid_argument("expected returns length does not match model");
  if (!e.allFinite())
    throw std::invalid_argument("expected returns must be finite");
  if (e.isZero(0.0))
    throw std::invalid_argument("expected returns must not all be zero");
}

/// Gross exposure normalization u / sum|u|; rejects a vanishing direction.
Eigen::VectorXd normalize_gross(const Eigen::VectorXd& u, double* scale_out) {
  const double total = u.cwiseAbs().sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw DegenerateError("weight direction vanished; cannot normalize");
  if (scale_out) *scale_out = 1.0 / total;
  return u / total;
}

}  // namespace

// --- bounds and spec ------------------------------------------------------

void PositionBounds::validate(Eigen::Index n) const {
  if (lower.size() != n || upper.size() != n)
    throw std::invalid_argument("position bounds length does not match model");
  if (!lower.allFinite() || !upper.allFinite())
    throw std::invalid_argument("position bounds must be finite");
  if (!(lower.array() < 0.0).all() || !(upper.array() > 0.0).all())
    throw std::invalid_argument("position bounds must straddle zero");
}

PositionBounds PositionBounds::symmetric(const Eigen::VectorXd& cap) {
  PositionBounds b;
  b.lower = -cap;
  b.upper = cap;
  return b;
}

void MultiOptSpec::validate(Eigen::Index n) const {
  if (n_opt < 1)
    throw std::invalid_argument("the stack depth n_opt must be at least 1");
  if (!std::isfinite(b_hat))
    throw std::invalid_argument("b_hat must be finite");
  if (constraints) constraints->validate(n);
  if (bounds) bounds->validate(n);
}

// --- reoptimized return stack --------------------------------------------

IteratedReturns iterate_returns(const RiskModel& model, const Eigen::VectorXd& e,
                                int n_opt) {
  if (n_opt < 1)
    throw std::invalid_argument("the stack depth n_opt must be at least 1");
  check_returns(e, model.size());

  IteratedReturns out;
  out.levels.reserve(static_cast<std::size_t>(n_opt));
  out.levels.push_back(e);
  for (int p = 1; p < n_opt; ++p)
    out.levels.push_back(model.solve(out.levels.back()));

  // h^2 = (E.C^{-1}E)/(E2.C^{-1}E2) with E2 = C^{-1}E; reuse deeper levels
  // when the stack already contains them.
  const Eigen::VectorXd& e2 =
      out.levels.size() >= 2 ? out.levels[1] : model.solve(e);
  const Eigen::VectorXd e3 =
      out.levels.size() >= 3 ? out.levels[2] : model.solve(e2);
  const double num = e.dot(e2);
  const double den = e2.dot(e3);
  if (!(num > 0.0) || !std::isfinite(num))
    throw DegenerateError("E . C^{-1}E is not positive; h is undefined");
  if (!(den > 0.0) || !std::isfinite(den))
    throw DegenerateError(
        "the once-reoptimized returns vanished; h is undefined");
  out.h = std::sqrt(num / den);
  return out;
}

// --- stacked weights ------------------------------------------------------

namespace {

Eigen::VectorXd blend_stack(const IteratedReturns& it, double b_tilde) {
  Eigen::VectorXd e_hat = it.levels[0];
  double coef = 1.0;
  for (std::size_t p = 1; p < it.levels.size(); ++p) {
    coef *= b_tilde;
    e_hat += coef * it.levels[p];
  }
  return e_hat;
}

/// Constrained stationary direction: C w + G mu = x, G^T w = 0.  Factor
/// models go through the padded inverse (no N x N algebra); anything else
/// solves the dense saddle-point system.
Eigen::VectorXd constrained_solve(const RiskModel& model,
                                  const ConstraintSet& constraints,
                                  const Eigen::VectorXd& x) {
  if (const auto* factor = dynamic_cast<const FactorRiskModel*>(&model))
    return pad_with_constraints(factor->model(), constraints).apply(x);

  const Eigen::Index n = model.size();
  const Eigen::Index m = constraints.m();
  Eigen::MatrixXd kkt(n + m, n + m);
  kkt.setZero();
  kkt.topLeftCorner(n, n) = model.dense(true);
  kkt.topRightCorner(n, m) = constraints.g;
  kkt.bottomLeftCorner(m, n) = constraints.g.transpose();
  Eigen::VectorXd rhs(n + m);
  rhs.head(n) = x;
  rhs.tail(m).setZero();
  const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
  if (!sol.allFinite())
    throw NumericalError("constrained solve produced non-finite weights");
  return sol.head(n);
}

}  // namespace

MultiOptSolution multiply_optimized_weights(const RiskModel& model,
                                            const Eigen::VectorXd& e,
                                            const MultiOptSpec& spec) {
  spec.validate(model.size());
  const IteratedReturns it = iterate_returns(model, e, spec.n_opt);

  MultiOptSolution sol;
  sol.h = it.h;
  sol.b_tilde = spec.b_hat * it.h;
  sol.n_opt = spec.n_opt;
  sol.b_hat = spec.b_hat;
  sol.e_hat = blend_stack(it, sol.b_tilde);

  if (spec.bounds) {
    BoundedSolveResult bounded =
        apply_position_bounds(sol.e_hat, model, *spec.bounds, spec.constraints);
    sol.weights = std::move(bounded.weights);
    sol.at_bound = std::move(bounded.at_bound);
    sol.a = bounded.a;
    return sol;
  }

  const Eigen::VectorXd raw =
      spec.constraints ? constrained_solve(model, *spec.constraints, sol.e_hat)
                       : model.solve(sol.e_hat);
  sol.weights = normalize_gross(raw, &sol.a);
  return sol;
}

MultiOptSolution multiply_optimized_weights(const RiskModel& model,
                                            const ExpectedReturns& e,
                                            const MultiOptSpec& spec) {
  return multiply_optimized_weights(model, e.values, spec);
}

// --- rescaling proof ------------------------------------------------------

RescalingCheck rescaling_check(const RiskModel& model, const Eigen::VectorXd& e,
                               const MultiOptSpec& spec, std::uint64_t seed) {
  const Eigen::VectorXd base = multiply_optimized_weights(model, e, spec).weights;

  std::vector<std::pair<double, double>> pairs;
  for (double zeta : {0.2, 1.0, 5.0})
    for (double lambda : {0.2, 1.0, 5.0}) pairs.emplace_back(zeta, lambda);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> log10u(-1.0, 1.0);
  for (int extra = 0; extra < 2; ++extra)
    pairs.emplace_back(std::pow(10.0, log10u(rng)),
                       std::pow(10.0, log10u(rng)));

  RescalingCheck check;
  for (const auto& [zeta, lambda] : pairs) {
    const ScaledRiskModel scaled(model, lambda);
    const Eigen::VectorXd w =
        multiply_optimized_weights(scaled, zeta * e, spec).weights;
    RescalingTrial trial;
    trial.zeta = zeta;
    trial.lambda = lambda;
    trial.max_deviation = (w - base).cwiseAbs().maxCoeff();
    check.worst = std::max(check.worst, trial.max_deviation);
    check.trials.push_back(trial);
  }
  check.passed = check.worst <= 1e-10;
  return check;
}

// --- smoothed-sign fixed point -------------------------------------------

TanhSolution tanh_fixed_point(const RiskModel& model, const Eigen::VectorXd& e,
                              const Eigen::VectorXd& delta,
                              const TanhOptions& options) {
  const Eigen::Index n = model.size();
  check_returns(e, n);
  if (delta.size() != n)
    throw std::invalid_argument("delta length does not match model");
  if (!delta.allFinite() || !(delta.array() > 0.0).all())
    throw std::invalid_argument("delta must be strictly positive");
  if (options.max_iter < 1)
    throw std::invalid_argument("max_iter must be at least 1");
  if (!(options.tol > 0.0))
    throw std::invalid_argument("tolerance must be positive");
  if (options.damping &&
      !(*options.damping >= 0.0 && *options.damping < 1.0))
    throw std::invalid_argument("damping must lie in [0, 1)");

  const Eigen::VectorXd inv_e = model.solve(e);
  const double alpha2 = e.dot(inv_e);
  if (!(alpha2 > 0.0))
    throw NumericalError("covariance model is not positive definite");
  const double alpha = std::sqrt(alpha2);

  TanhSolution sol;
  Eigen::VectorXd w = normalize_gross(inv_e, nullptr);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const Eigen::VectorXd chi =
        (w.array() / delta.array()).tanh().matrix();
    const Eigen::VectorXd inv_chi = model.solve(chi);
    const double beta2 = chi.dot(inv_chi);
    if (!(beta2 > 0.0))
      throw NumericalError(
          "smoothed sign vector collapsed; cannot form the ratio coefficients");
    const double beta = std::sqrt(beta2);
    const double gamma = chi.dot(inv_e);
    const double lam = alpha * beta + gamma;
    if (!(lam > 1e-12 * alpha * beta))
      throw NumericalError(
          "expected returns anti-aligned with the smoothed signs; the ratio "
          "coefficients degenerate");
    sol.a = 1.0 / lam;
    sol.b = alpha / (beta * lam);

    Eigen::VectorXd next =
        normalize_gross(sol.a * inv_e + sol.b * inv_chi, nullptr);
    if (options.damping) {
      next = (1.0 - *options.damping) * next + *options.damping * w;
      next = normalize_gross(next, nullptr);
    }
    sol.last_change = (next - w).cwiseAbs().maxCoeff();
    w = std::move(next);
    sol.iterations = iter + 1;
    if (sol.last_change < options.tol) {
      sol.converged = true;
      break;
    }
  }
  sol.weights = std::move(w);
  return sol;
}

TanhSolution tanh_fixed_point(const RiskModel& model, const Eigen::VectorXd& e,
                              double delta, const TanhOptions& options) {
  return tanh_fixed_point(
      model, e, Eigen::VectorXd::Constant(model.size(), delta), options);
}

// --- regression limit -----------------------------------------------------

Eigen::VectorXd regression_limit_weights(const FactorModel& model,
                                         const Eigen::VectorXd& e,
                                         double theta) {
  model.validate();
  check_returns(e, model.n());
  if (!(theta > 0.0) || !(theta <= 1.0))
    throw std::invalid_argument("theta must lie in (0, 1]");

  if (theta == 1.0) {
    // Weighted cross-sectional regression of E on the loadings with weights
    // 1/xi^2; the portfolio holds the residuals scaled by the same weights.
    Eigen::VectorXd eps;
    if (model.k() == 0) {
      eps = e;
    } else {
      const Eigen::ArrayXd root_z = model.xi2.array().rsqrt();
      const Eigen::MatrixXd scaled =
          root_z.matrix().asDiagonal() * model.loadings;
      const Eigen::VectorXd target = (e.array() * root_z).matrix();
      const Eigen::VectorXd coef =
          scaled.colPivHouseholderQr().solve(target);
      eps = e - model.loadings * coef;
    }
    // Judge degeneracy in the metric the regression itself uses: residuals
    // that are pure rounding noise relative to the fitted returns would make
    // the portfolio direction meaningless.
    const double fit_scale =
        (e.array() * model.xi2.array().rsqrt()).matrix().norm();
    const double resid_scale =
        (eps.array() * model.xi2.array().rsqrt()).matrix().norm();
    if (!(resid_scale > 1e-12 * fit_scale))
      throw DegenerateError(
          "expected returns are explained exactly by the loadings; the "
          "residual portfolio is empty");
    const Eigen::VectorXd raw =
        (eps.array() / model.xi2.array()).matrix();
    return normalize_gross(raw, nullptr);
  }

  // 0 < theta < 1: same factor structure with specific variances shrunk by
  // (1 - theta); the shifted matrix stays positive definite.
  FactorModel shifted = model;
  shifted.xi2 *= (1.0 - theta);
  Eigen::VectorXd raw;
  try {
    raw = FactorRiskModel(std::move(shifted)).solve(e);
  } catch (const NumericalError&) {
    throw NumericalError(
        "shifted covariance is numerically singular at this theta");
  }
  if (!raw.allFinite())
    throw NumericalError(
        "shifted covariance is numerically singular at this theta");
  return normalize_gross(raw, nullptr);
}

// --- exact linearized solve ----------------------------------------------

LinearizedSolution linearized_weights(const RiskModel& model,
                                      const Eigen::VectorXd& e, double b_hat,
                                      int fallback_n_opt) {
  if (!std::isfinite(b_hat))
    throw std::invalid_argument("b_hat must be finite");
  if (fallback_n_opt < 1)
    throw std::invalid_argument("fallback stack depth must be at least 1");

  LinearizedSolution sol;
  sol.h = iterate_returns(model, e, 1).h;
  sol.b_tilde = b_hat * sol.h;

  const Eigen::MatrixXd c = model.dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs;
  eigs.compute(c, Eigen::EigenvaluesOnly);
  const double min_eig = eigs.eigenvalues()(0);

  if (sol.b_tilde < min_eig * (1.0 - 1e-12)) {
    Eigen::MatrixXd shifted = c;
    shifted.diagonal().array() -= sol.b_tilde;
    const Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      sol.weights = normalize_gross(llt.solve(e), nullptr);
      sol.exact = true;
      return sol;
    }
  }

  // Shift too large: the matrix is no longer positive definite, so fall
  // back to the truncated stack, flagged as inexact.
  MultiOptSpec spec;
  spec.n_opt = fallback_n_opt;
  spec.b_hat = b_hat;
  sol.weights = multiply_optimized_weights(model, e, spec).weights;
  sol.exact = false;
  sol.series_terms = fallback_n_opt;
  return sol;
}

// --- position bounds ------------------------------------------------------

namespace {

/// Largest positive root of sum_i |a p_i - q_i| = target (convex piecewise
/// linear in a).  Returns NaN when no positive root exists.
double largest_budget_root(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                           double target) {
  struct Kink {
    double at;
    double weight;
  };
  std::vector<Kink> kinks;
  double flat = 0.0;    // sum over p_i = 0 terms
  double wsum = 0.0;    // total slope weight sum |p_i|
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) {
      flat += std::abs(q[i]);
    } else {
      kinks.push_back({q[i] / p[i], std::abs(p[i])});
      wsum += std::abs(p[i]);
    }
  }
  if (kinks.empty())
    return std::abs(flat - target) <= 1e-12 * std::max(1.0, target)
               ? 1.0
               : std::numeric_limits<double>::quiet_NaN();

  std::sort(kinks.begin(), kinks.end(),
            [](const Kink& a, const Kink& b) { return a.at < b.at; });
  auto phi = [&](double a) {
    double s = flat;
    for (const Kink& k : kinks) s += k.weight * std::abs(a - k.at);
    return s;
  };

  // Right ray first: beyond the last kink the function climbs with slope
  // wsum, so the largest root lives there whenever the target is above the
  // last kink value.
  const double last = kinks.back().at;
  const double phi_last = phi(last);
  if (target >= phi_last) {
    const double root = last + (target - phi_last) / wsum;
    return root > 0.0 ? root
                      : std::numeric_limits<double>::quiet_NaN();
  }
  // Walk left looking for the rightmost crossing segment.
  double hi = last;
  double phi_hi = phi_last;
  for (std::size_t k = kinks.size() - 1; k-- > 0;) {
    const double lo = kinks[k].at;
    const double phi_lo = phi(lo);
    if (phi_lo <= target && target <= phi_hi) {
      const double root =
          phi_hi == phi_lo
              ? hi
              : lo + (target - phi_lo) * (hi - lo) / (phi_hi - phi_lo);
      return root > 0.0 ? root
                        : std::numeric_limits<double>::quiet_NaN();
    }
    hi = lo;
    phi_hi = phi_lo;
  }
  // Left ray: the function climbs toward -infinity as well, but a root
  // there has a < smallest kink; only acceptable if still positive.
  if (target >= phi_hi && wsum > 0.0) {
    const double root = hi - (target - phi_hi) / wsum;
    return root > 0.0 ? root : std::numeric_limits<double>::quiet_NaN();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

BoundedSolveResult apply_position_bounds(
    const Eigen::VectorXd& e_hat, const RiskModel& model,
    const PositionBounds& bounds,
    const std::optional<ConstraintSet>& constraints) {
  const Eigen::Index n = model.size();
  check_returns(e_hat, n);
  bounds.validate(n);
  if (constraints) constraints->validate(n);
  const Eigen::Index m = constraints ? constraints->m() : 0;

  std::vector<Eigen::Index> free_set(static_cast<std::size_t>(n));
  std::iota(free_set.begin(), free_set.end(), Eigen::Index{0});
  // Clipped positions only; free entries stay zero so covariance cross
  // terms and constraint budgets see the fixed part alone.
  Eigen::VectorXd bound_vals = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Index> clipped;

  BoundedSolveResult result;
  const int cap = static_cast<int>(n) + 2;
  for (int round = 0; round <= cap; ++round) {
    if (free_set.empty())
      throw ConvergenceError(
          "every position hit a bound; the budget cannot be filled");
    const auto sz = static_cast<Eigen::Index>(free_set.size());

    auto gather = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd out(sz);
      for (Eigen::Index k = 0; k < sz; ++k) out[k] = v[free_set[k]];
      return out;
    };

    // Fixed positions feed back through the covariance cross terms.
    const bool full = free_set.size() == static_cast<std::size_t>(n);
    auto solve_free = [&](const Eigen::VectorXd& rhs) {
      return full ? model.solve(rhs) : model.solve_restricted(free_set, rhs);
    };
    const Eigen::VectorXd x = solve_free(gather(e_hat));
    const Eigen::VectorXd y = clipped.empty()
                                  ? Eigen::VectorXd::Zero(sz)
                                  : solve_free(gather(model.apply(bound_vals)));

    // Direction w_F(a) = a p - q, with the constraint multipliers folded in.
    Eigen::VectorXd p = x;
    Eigen::VectorXd q = y;
    if (m > 0) {
      Eigen::MatrixXd gf(sz, m);
      for (Eigen::Index k = 0; k < sz; ++k)
        gf.row(k) = constraints->g.row(free_set[k]);
      Eigen::MatrixXd xg(sz, m);
      for (Eigen::Index c = 0; c < m; ++c)
        xg.col(c) = solve_free(gf.col(c));
      const Eigen::MatrixXd schur = gf.transpose() * xg;
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(schur);
      if (!lu.isInvertible())
        throw NumericalError(
            "constraints became degenerate on the free positions");
      // The clipped positions carry constraint budget G_B^T w_B that the
      // free ones must offset.
      const Eigen::VectorXd g0 = constraints->g.transpose() * bound_vals;
      const Eigen::VectorXd m1 = lu.solve(gf.transpose() * x);
      const Eigen::VectorXd m0 = lu.solve(g0 - gf.transpose() * y);
      p = x - xg * m1;
      q = y + xg * m0;
    }

    double held = 0.0;
    for (Eigen::Index i : clipped) held += std::abs(bound_vals[i]);
    const double target = 1.0 - held;
    if (target <= 0.0)
      throw ConvergenceError(
          "clipped positions already exhaust the gross exposure budget");

    const double a = largest_budget_root(p, q, target);
    if (!std::isfinite(a))
      throw ConvergenceError(
          "no positive multiplier fills the exposure budget on the free "
          "positions");

    const Eigen::VectorXd wf = a * p - q;

    // Clip every violator to the bound it crossed.
    std::vector<Eigen::Index> violators;
    for (Eigen::Index k = 0; k < sz; ++k) {
      const Eigen::Index i = free_set[k];
      if (wf[k] > bounds.upper[i]) {
        bound_vals[i] = bounds.upper[i];
        violators.push_back(i);
      } else if (wf[k] < bounds.lower[i]) {
        bound_vals[i] = bounds.lower[i];
        violators.push_back(i);
      }
    }
    if (violators.empty()) {
      Eigen::VectorXd w = bound_vals;
      for (Eigen::Index k = 0; k < sz; ++k) w[free_set[k]] = wf[k];
      result.weights = std::move(w);
      result.at_bound = std::move(clipped);
      result.a = a;
      result.rounds = round;
      return result;
    }
    for (Eigen::Index i : violators) {
      clipped.push_back(i);
      free_set.erase(std::find(free_set.begin(), free_set.end(), i));
    }
    std::sort(clipped.begin(), clipped.end());
  }
  throw ConvergenceError("position-bound clipping failed to stabilize");
}

// --- JSON rendering -------------------------------------------------------

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

std::string multi_opt_to_json(const MultiOptSolution& solution, int indent) {
  nlohmann::json j;
  j["weights"] = to_std(solution.weights);
  j["a"] = solution.a;
  j["h"] = solution.h;
  j["b_tilde"] = solution.b_tilde;
  j["n_opt"] = solution.n_opt;
  j["b_hat"] = solution.b_hat;
  j["net_exposure"] = solution.weights.sum();
  if (!solution.at_bound.empty()) j["at_bound"] = solution.at_bound;
  return j.dump(indent);
}

std::string tanh_to_json(const TanhSolution& solution, int indent) {
  nlohmann::json j;
  j["weights"] = to_std(solution.weights);
  j["converged"] = solution.converged;
  j["iterations"] = solution.iterations;
  j["last_change"] = solution.last_change;
  j["a"] = solution.a;
  j["b"] = solution.b;
  return j.dump(indent);
}

}  // namespace meanrisk
