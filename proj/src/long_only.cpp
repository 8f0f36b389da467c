#include "meanrisk/long_only.hpp"

#include "meanrisk/errors.hpp"
#include "meanrisk/market_data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

namespace meanrisk {

namespace {

constexpr double kSnapTol = 1e-12;      // dust threshold on final weights
constexpr double kEdgeRelTol = 1e-12;   // feasibility boundary guard

Eigen::VectorXd gather(const Eigen::VectorXd& v,
                       const std::vector<Eigen::Index>& subset) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(subset.size()));
  for (std::size_t k = 0; k < subset.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = v[subset[k]];
  return out;
}

struct ActiveSolve {
  Eigen::VectorXd inv_e;   // [C(J)]^{-1} E(J)
  Eigen::VectorXd inv_nu;  // [C(J)]^{-1} nu(J)
  ScalarInvariants s;
};

ActiveSolve solve_active(const RiskModel& model, const Eigen::VectorXd& e,
                         const std::vector<Eigen::Index>& active) {
  ActiveSolve out;
  const Eigen::VectorXd ej = gather(e, active);
  const Eigen::VectorXd ones =
      Eigen::VectorXd::Ones(static_cast<Eigen::Index>(active.size()));
  if (static_cast<Eigen::Index>(active.size()) == model.size()) {
    // Full universe: the plain solve is cheaper than the restricted path.
    out.inv_e = model.solve(ej);
    out.inv_nu = model.solve(ones);
  } else {
    out.inv_e = model.solve_restricted(active, ej);
    out.inv_nu = model.solve_restricted(active, ones);
  }
  out.s.alpha2 = ej.dot(out.inv_e);
  out.s.beta2 = out.inv_nu.sum();
  out.s.gamma = out.inv_e.sum();
  if (!(out.s.beta2 > 0.0))
    throw NumericalError(
        "restricted covariance is not positive definite on the active set");
  if (out.s.alpha2 < 0.0) {
    if (out.s.alpha2 < -1e-10 * (1.0 + ej.squaredNorm()))
      throw NumericalError(
          "restricted covariance is not positive definite on the active set");
    out.s.alpha2 = 0.0;  // rounding noise around E(J) = 0
  }
  return out;
}

// The negative-weight stock to remove: smallest per-stock ratio E_i/C_ii;
// ties go to the larger variance, then the lower index (ascending scan).
Eigen::Index pick_drop(const std::vector<Eigen::Index>& active,
                       const Eigen::VectorXd& w_active,
                       const Eigen::VectorXd& e, const Eigen::VectorXd& diag,
                       double* ratio_out) {
  Eigen::Index best = -1;
  double best_ratio = 0.0;
  double best_var = 0.0;
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (!(w_active[static_cast<Eigen::Index>(k)] < 0.0)) continue;
    const Eigen::Index i = active[k];
    const double ratio = e[i] / diag[i];
    if (best < 0 || ratio < best_ratio ||
        (ratio == best_ratio && diag[i] > best_var)) {
      best = i;
      best_ratio = ratio;
      best_var = diag[i];
    }
  }
  *ratio_out = best_ratio;
  return best;
}

enum class Variant { Fano, Sharpe };

LongOnlySolution run_relaxation(const RiskModel& model,
                                const Eigen::VectorXd& e, Variant variant) {
  const Eigen::Index n = model.size();
  if (e.size() != n)
    throw std::invalid_argument("expected returns length does not match model");
  if (!e.allFinite())
    throw std::invalid_argument("expected returns must be finite");

  const Eigen::VectorXd diag = model.diagonal();
  std::vector<Eigen::Index> active(static_cast<std::size_t>(n));
  std::iota(active.begin(), active.end(), Eigen::Index{0});

  LongOnlySolution sol;
  ActiveSolve cur;
  Eigen::VectorXd w_active;
  int iteration = 0;

  while (true) {
    if (active.empty())
      throw InfeasibleError(
          "every stock was removed: no long-only portfolio with positive "
          "expected return exists");
    cur = solve_active(model, e, active);

    if (variant == Variant::Fano) {
      const double alpha = cur.s.alpha();
      const double beta = cur.s.beta();
      const double lam = alpha * beta + cur.s.gamma;
      if (!(lam > kEdgeRelTol * alpha * beta))
        throw InfeasibleError(
            "alpha beta + gamma vanishes on the active set: no "
            "positive-expected-return ratio portfolio exists");
      // Unconstrained solution on the active set; the budget holds by
      // construction (a gamma + b beta^2 = 1).
      const double a = 1.0 / lam;
      const double b = alpha / (beta * lam);
      w_active = a * cur.inv_e + b * cur.inv_nu;
    } else {
      // A positive multiple of the maximum-Sharpe direction; only the signs
      // matter until the final normalization.
      w_active = cur.inv_e;
    }

    RelaxationStep step;
    step.iteration = iteration;
    step.active_count = static_cast<int>(active.size());
    step.scalars = cur.s;

    if (!(w_active.array() < 0.0).any()) {
      sol.history.push_back(step);
      break;
    }
    double ratio = 0.0;
    const Eigen::Index drop = pick_drop(active, w_active, e, diag, &ratio);
    step.dropped = drop;
    step.dropped_ratio = ratio;
    sol.history.push_back(step);
    ++iteration;
    sol.active_set.excluded.push_back({drop, iteration});
    active.erase(std::find(active.begin(), active.end(), drop));
  }
  sol.active_set.iterations = iteration;

  Eigen::VectorXd w_act = w_active;
  if (variant == Variant::Sharpe) {
    const double total = w_act.sum();
    if (!(total > 0.0))
      throw InfeasibleError(
          "active set carries no positive expected return: the Sharpe "
          "direction cannot be normalized long-only");
    w_act /= total;
  }

  // Assemble the full-size vector; weights below the dust threshold become
  // exact zeros and their stocks leave the active set.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Index> kept;
  bool snapped = false;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const double wk = w_act[static_cast<Eigen::Index>(k)];
    if (wk <= kSnapTol) {
      snapped = true;
      sol.active_set.excluded.push_back({active[k], iteration});
    } else {
      kept.push_back(active[k]);
      w[active[k]] = wk;
    }
  }
  if (kept.empty())
    throw InfeasibleError(
        "every stock was removed: no long-only portfolio with positive "
        "expected return exists");
  double total = 0.0;
  for (Eigen::Index i : kept) total += w[i];
  for (Eigen::Index i : kept) w[i] /= total;

  sol.weights = std::move(w);
  sol.active_set.included = std::move(kept);
  sol.scalars = snapped
                    ? solve_active(model, e, sol.active_set.included).s
                    : cur.s;
  const double shift = variant == Variant::Fano
                           ? sol.scalars.alpha() / sol.scalars.beta()
                           : 0.0;
  sol.effective_returns = e.array() + shift;
  return sol;
}

}  // namespace

LongOnlySolution fano_long_only(const RiskModel& model,
                                const Eigen::VectorXd& e) {
  return run_relaxation(model, e, Variant::Fano);
}

LongOnlySolution sharpe_long_only(const RiskModel& model,
                                  const Eigen::VectorXd& e) {
  return run_relaxation(model, e, Variant::Sharpe);
}

LongOnlySolution fano_long_only(const RiskModel& model,
                                const ExpectedReturns& e) {
  return fano_long_only(model, e.values);
}

LongOnlySolution sharpe_long_only(const RiskModel& model,
                                  const ExpectedReturns& e) {
  return sharpe_long_only(model, e.values);
}

// --- diversification diagnostics ----------------------------------------

DiversificationReport diversification_report(
    const LongOnlySolution& fano_sol, const LongOnlySolution& sharpe_sol,
    const VolatilityProfile& sigma) {
  const Eigen::Index n = fano_sol.weights.size();
  if (sharpe_sol.weights.size() != n || sigma.sigma.size() != n)
    throw std::invalid_argument(
        "diversification report needs both solutions and volatilities on "
        "the same universe");

  DiversificationReport rep;
  rep.n = static_cast<int>(n);
  rep.fano_active = static_cast<int>(fano_sol.active_set.included.size());
  rep.sharpe_active = static_cast<int>(sharpe_sol.active_set.included.size());
  rep.fano_at_least_as_diverse = rep.fano_active >= rep.sharpe_active;

  // Raw returns recovered from the stored effective returns by undoing the
  // active-set shift.
  const double shift =
      fano_sol.scalars.alpha() / fano_sol.scalars.beta();
  for (Eigen::Index i = 0; i < n; ++i)
    if (fano_sol.weights[i] > 0.0 && fano_sol.effective_returns[i] < shift)
      ++rep.negative_return_longs;

  rep.sigma_star = sigma.aggregate();
  std::vector<bool> skip(static_cast<std::size_t>(n), false);
  for (Eigen::Index i : sigma.excluded) skip[static_cast<std::size_t>(i)] = true;
  const int counted =
      rep.n - static_cast<int>(sigma.excluded.size());
  const double root_n = std::sqrt(static_cast<double>(counted));
  rep.sigma_tilde_5 = root_n / 5.0 * rep.sigma_star;
  rep.sigma_tilde_10 = root_n / 10.0 * rep.sigma_star;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (skip[static_cast<std::size_t>(i)]) continue;
    if (sigma.sigma[i] >= rep.sigma_tilde_5) ++rep.count_above_5;
    if (sigma.sigma[i] >= rep.sigma_tilde_10) ++rep.count_above_10;
  }
  return rep;
}

// --- two-sector worked example ------------------------------------------

OneFactorDemoReport one_factor_demo(int n, double rho, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("demo universe size must be even, at least 2");
  if (!(rho > -1.0 / (n - 1)) || !(rho < 1.0))
    throw std::invalid_argument(
        "correlation outside the positive-definite range (-1/(n-1), 1)");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  OneFactorDemoReport rep;
  rep.n = n;
  rep.rho = rho;
  rep.sigma.resize(n);
  rep.expected.resize(n);
  rep.signs.resize(n);
  for (int i = 0; i < n; ++i) {
    rep.sigma[i] = std::exp(0.35 * gauss(rng) - 0.2);
    rep.signs[i] = i < n / 2 ? 1.0 : -1.0;
  }
  // Draw normalized returns with a mildly positive mean; raw returns scale
  // with the volatilities.
  for (int i = 0; i < n; ++i)
    rep.expected[i] = rep.sigma[i] * (0.3 + gauss(rng));

  // Closed form from scalar sums only: with C = diag(sigma) Psi diag(sigma)
  // and Psi = (1-rho) I + rho s s^T, the inverse is a rank-one correction,
  // so every invariant collapses to five cross sums.
  const Eigen::ArrayXd s = rep.signs.array();
  const Eigen::ArrayXd u = rep.sigma.array().inverse();
  const Eigen::ArrayXd et = rep.expected.array() * u;  // E_i / sigma_i
  const double denom = 1.0 + (n - 1) * rho;
  const double sum_ee = (et * et).sum();
  const double sum_uu = (u * u).sum();
  const double sum_eu = (et * u).sum();
  const double sum_es = (et * s).sum();
  const double sum_us = (u * s).sum();
  const double one_m = 1.0 - rho;
  const double alpha2 = (sum_ee - rho / denom * sum_es * sum_es) / one_m;
  const double beta2 = (sum_uu - rho / denom * sum_us * sum_us) / one_m;
  const double gamma = (sum_eu - rho / denom * sum_es * sum_us) / one_m;
  const double alpha = std::sqrt(alpha2);
  const double beta = std::sqrt(beta2);
  const double a = 1.0 / (alpha * beta + gamma);
  const Eigen::ArrayXd eprime = et + (alpha / beta) * u;
  const double sum_ps = (eprime * s).sum();
  rep.weights_closed_form =
      (a / one_m) * u * (eprime - rho / denom * sum_ps * s);

  // Generic optimizer on the materialized covariance.
  Eigen::MatrixXd psi = rho * rep.signs * rep.signs.transpose();
  psi.diagonal().array() += one_m;
  const Eigen::MatrixXd cov =
      rep.sigma.asDiagonal() * psi * rep.sigma.asDiagonal();
  rep.weights_optimizer =
      maximize_fano(DenseRiskModel(cov), rep.expected).weights;

  // Large-universe approximation: the active-set shift becomes
  // E_* sigma_* / sigma_i and the rank-one correction becomes a 1/N term.
  const double estar = std::sqrt(sum_ee / n);
  const double sstar = std::sqrt(n / sum_uu);
  const double sum_approx = sum_es + estar * sstar * sum_us;
  rep.weights_approximation =
      (a / one_m) * u * (et + estar * sstar * u - sum_approx / n * s);

  const double scale = rep.weights_closed_form.cwiseAbs().maxCoeff();
  rep.closed_vs_optimizer =
      (rep.weights_optimizer - rep.weights_closed_form).cwiseAbs().maxCoeff() /
      scale;
  rep.approx_vs_closed =
      (rep.weights_approximation - rep.weights_closed_form)
          .cwiseAbs()
          .maxCoeff() /
      scale;
  return rep;
}

// --- JSON rendering -------------------------------------------------------

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

std::string long_only_to_json(const LongOnlySolution& solution, int indent) {
  nlohmann::json j;
  j["weights"] = to_std(solution.weights);
  j["effective_returns"] = to_std(solution.effective_returns);
  j["scalars"] = {{"alpha2", solution.scalars.alpha2},
                  {"beta2", solution.scalars.beta2},
                  {"gamma", solution.scalars.gamma}};
  j["active"] = solution.active_set.included;
  nlohmann::json dropped = nlohmann::json::array();
  for (const DroppedStock& d : solution.active_set.excluded)
    dropped.push_back({{"index", d.index}, {"iteration", d.iteration}});
  j["dropped"] = dropped;
  j["iterations"] = solution.active_set.iterations;
  nlohmann::json hist = nlohmann::json::array();
  for (const RelaxationStep& st : solution.history) {
    nlohmann::json row = {{"iteration", st.iteration},
                          {"active_count", st.active_count},
                          {"alpha2", st.scalars.alpha2},
                          {"beta2", st.scalars.beta2},
                          {"gamma", st.scalars.gamma}};
    if (st.dropped >= 0) {
      row["dropped"] = st.dropped;
      row["dropped_ratio"] = st.dropped_ratio;
    }
    hist.push_back(row);
  }
  j["history"] = hist;
  return j.dump(indent);
}

std::string diversification_to_json(const DiversificationReport& report,
                                    int indent) {
  nlohmann::json j;
  j["n"] = report.n;
  j["ratio_active"] = report.fano_active;
  j["sharpe_active"] = report.sharpe_active;
  j["negative_return_longs"] = report.negative_return_longs;
  j["sigma_star"] = report.sigma_star;
  j["sigma_tilde_5"] = report.sigma_tilde_5;
  j["sigma_tilde_10"] = report.sigma_tilde_10;
  j["count_above_5"] = report.count_above_5;
  j["count_above_10"] = report.count_above_10;
  j["ratio_at_least_as_diverse"] = report.fano_at_least_as_diverse;
  return j.dump(indent);
}

}  // namespace meanrisk
