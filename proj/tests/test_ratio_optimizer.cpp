#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "meanrisk/errors.hpp"
#include "meanrisk/market_data.hpp"
#include "meanrisk/ratio_optimizer.hpp"
#include "meanrisk/risk_model.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <cmath>
#include <random>

using namespace meanrisk;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd v(3);
  v << a, b, c;
  return v;
}

DenseRiskModel identity_model(Eigen::Index n) {
  return DenseRiskModel(Eigen::MatrixXd::Identity(n, n));
}

// Stationarity residual of the budget-constrained problem: grad G + mu * nu
// evaluated at the reported weights with the reported multiplier, with the
// covariance applied through the model (not the internal aE + b*nu identity).
double stationarity_residual(const OptimizerSolution& sol,
                             const RiskModel& model, const Eigen::VectorXd& e,
                             const RatioSpec& spec) {
  const double fv = spec.f(sol.v_port);
  const double fpv = spec.f_prime(sol.v_port);
  const Eigen::VectorXd cw = model.apply(sol.weights);
  const Eigen::VectorXd grad =
      e / fv - (2.0 * sol.e_port * fpv / (fv * fv)) * cw;
  return (grad.array() + sol.mu).abs().maxCoeff();
}

}  // namespace

TEST_CASE("scalar invariants on hand instances") {
  const DenseRiskModel id2 = identity_model(2);

  ScalarInvariants s = scalar_invariants(id2, vec2(1.0, 1.0));
  CHECK(s.alpha2 == doctest::Approx(2.0));
  CHECK(s.beta2 == doctest::Approx(2.0));
  CHECK(s.gamma == doctest::Approx(2.0));
  CHECK(s.discriminant() == 0.0);  // 2*2 - 2*2, exact in floating point

  s = scalar_invariants(id2, vec2(3.0, 1.0));
  CHECK(s.alpha2 == doctest::Approx(10.0));
  CHECK(s.beta2 == doctest::Approx(2.0));
  CHECK(s.gamma == doctest::Approx(4.0));
  CHECK(s.discriminant() == doctest::Approx(4.0));

  const DenseRiskModel diag(Eigen::Vector2d(1.0, 4.0).asDiagonal());
  s = scalar_invariants(diag, vec2(1.0, 1.0));
  CHECK(s.alpha2 == doctest::Approx(1.25));
  CHECK(s.beta2 == doctest::Approx(1.25));
  CHECK(s.gamma == doctest::Approx(1.25));

  // Wrapper overload carries the same values through.
  ExpectedReturns er;
  er.values = vec2(1.0, 1.0);
  er.horizon_days = 1;
  const ScalarInvariants s2 = scalar_invariants(diag, er);
  CHECK(s2.alpha2 == s.alpha2);
  CHECK(s2.gamma == s.gamma);
}

TEST_CASE("Cauchy-Schwarz holds for the invariants of random instances") {
  auto rng = oracles::make_rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(trial % 5);
    const Eigen::MatrixXd c = oracles::random_spd(n, rng);
    const Eigen::VectorXd e = oracles::random_vector(n, rng);
    const ScalarInvariants s = scalar_invariants(DenseRiskModel(c), e);
    CHECK(s.alpha2 > 0.0);
    CHECK(s.beta2 > 0.0);
    CHECK(s.discriminant() >= -1e-10 * s.alpha2 * s.beta2);
  }
}

TEST_CASE("maximum-Sharpe closed form on hand instances") {
  const DenseRiskModel id2 = identity_model(2);

  SUBCASE("equal returns split the budget evenly") {
    const OptimizerSolution sol = maximize_sharpe(id2, vec2(1.0, 1.0));
    CHECK(sol.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.sharpe == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(sol.e_port == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.v_port == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.a == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(sol.b) <= 1e-15);
    CHECK(std::abs(sol.mu) <= 1e-12);
    CHECK(sol.rejected_roots.empty());
  }

  SUBCASE("weights are proportional to expected returns under identity risk") {
    const OptimizerSolution sol = maximize_sharpe(id2, vec2(3.0, 1.0));
    CHECK(sol.weights[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(sol.weights[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(sol.e_port == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(sol.v_port == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(sol.sharpe == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));
    CHECK(sol.objective == doctest::Approx(sol.sharpe).epsilon(1e-12));
    // Grid search over the budget line lands on the same maximum.
    const double grid = oracles::budget_line_best(
        Eigen::MatrixXd::Identity(2, 2), vec2(3.0, 1.0),
        [](double v) { return std::sqrt(v); });
    CHECK(grid == doctest::Approx(sol.sharpe).epsilon(1e-6));
  }
}

TEST_CASE("maximum-Sharpe equals normalized C^{-1}E on random instances") {
  auto rng = oracles::make_rng(42);
  int negative_gamma_seen = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(trial % 3);
    const Eigen::MatrixXd c = oracles::random_spd(n, rng);
    const Eigen::VectorXd e = oracles::random_vector(n, rng);
    const Eigen::VectorXd inv_e = oracles::dense_solve(c, e);
    const double gamma = inv_e.sum();
    if (std::abs(gamma) < 1e-6) continue;
    if (gamma < 0.0) ++negative_gamma_seen;

    const OptimizerSolution sol = maximize_sharpe(DenseRiskModel(c), e);
    CHECK(oracles::rel_err(sol.weights, Eigen::VectorXd(inv_e / gamma)) < 1e-10);
    const double alpha = std::sqrt(e.dot(inv_e));
    CHECK(sol.sharpe ==
          doctest::Approx(alpha * (gamma > 0.0 ? 1.0 : -1.0)).epsilon(1e-10));
    CHECK(std::abs(sol.mu) <= 1e-10 * (1.0 + alpha));
    CHECK(std::abs(sol.weights.sum() - 1.0) <= 1e-12);
  }
  // The closed form is sign-agnostic; make sure both branches were exercised.
  CHECK(negative_gamma_seen > 0);
}

TEST_CASE("mean-to-variance closed form on hand instances") {
  SUBCASE("identity risk, equal returns") {
    const OptimizerSolution sol = maximize_fano(identity_model(2), vec2(1.0, 1.0));
    CHECK(sol.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.fano == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sol.e_port == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.v_port == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.a == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(sol.b == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("variance-4 stock gets a quarter of the weight of the variance-1 stock") {
    const DenseRiskModel diag(Eigen::Vector2d(1.0, 4.0).asDiagonal());
    const OptimizerSolution sol = maximize_fano(diag, vec2(1.0, 1.0));
    CHECK(sol.weights[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(sol.weights[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(sol.fano == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(sol.e_port == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.v_port == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(sol.a == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(sol.b == doctest::Approx(0.4).epsilon(1e-12));
    // Independent check against the direct two-asset grid.
    const double grid = oracles::budget_grid_best_2(
        Eigen::Vector2d(1.0, 4.0).asDiagonal(), vec2(1.0, 1.0),
        [](double v) { return v; });
    CHECK(grid == doctest::Approx(1.25).epsilon(1e-6));
  }
}

TEST_CASE("mean-to-variance ratio scales as 1/lambda under C -> lambda C") {
  auto rng = oracles::make_rng(7);
  const Eigen::MatrixXd c = oracles::random_spd(5, rng);
  Eigen::VectorXd e = oracles::random_vector(5, rng).array() + 0.6;
  const double lambda = 2.5;

  const OptimizerSolution base = maximize_fano(DenseRiskModel(c), e);
  const OptimizerSolution scaled = maximize_fano(DenseRiskModel(lambda * c), e);
  CHECK(oracles::rel_err(scaled.weights, base.weights) < 1e-10);
  CHECK(scaled.fano == doctest::Approx(base.fano / lambda).epsilon(1e-12));
  CHECK(scaled.e_port == doctest::Approx(base.e_port).epsilon(1e-12));
  CHECK(scaled.v_port == doctest::Approx(base.v_port * lambda).epsilon(1e-12));
}

TEST_CASE("horizon scaling: E -> T E, C -> T C") {
  auto rng = oracles::make_rng(8);
  const Eigen::MatrixXd c = oracles::random_spd(4, rng);
  const Eigen::VectorXd e = oracles::random_vector(4, rng).array() + 0.5;
  const double t = 21.0;

  const OptimizerSolution f1 = maximize_fano(DenseRiskModel(c), e);
  const OptimizerSolution ft =
      maximize_fano(DenseRiskModel(t * c), Eigen::VectorXd(t * e));
  // The mean-to-variance ratio is horizon-invariant; weights do not move.
  CHECK(oracles::rel_err(ft.weights, f1.weights) < 1e-10);
  CHECK(ft.fano == doctest::Approx(f1.fano).epsilon(1e-12));

  const OptimizerSolution s1 = maximize_sharpe(DenseRiskModel(c), e);
  const OptimizerSolution st =
      maximize_sharpe(DenseRiskModel(t * c), Eigen::VectorXd(t * e));
  // The Sharpe ratio grows with the square root of the horizon.
  CHECK(oracles::rel_err(st.weights, s1.weights) < 1e-10);
  CHECK(st.sharpe == doctest::Approx(std::sqrt(t) * s1.sharpe).epsilon(1e-12));
}

TEST_CASE("Sharpe weights are invariant under E -> zeta E, C -> lambda C") {
  auto rng = oracles::make_rng(9);
  const Eigen::MatrixXd c = oracles::random_spd(5, rng);
  const Eigen::VectorXd e = oracles::random_vector(5, rng).array() + 0.4;
  const double zeta = 3.0, lambda = 2.5;

  const OptimizerSolution base = maximize_sharpe(DenseRiskModel(c), e);
  const OptimizerSolution scaled =
      maximize_sharpe(DenseRiskModel(lambda * c), Eigen::VectorXd(zeta * e));
  CHECK(oracles::rel_err(scaled.weights, base.weights) < 1e-10);
  CHECK(scaled.sharpe ==
        doctest::Approx(base.sharpe * zeta / std::sqrt(lambda)).epsilon(1e-12));
}

TEST_CASE("general maximizer reduces to the closed forms") {
  auto rng = oracles::make_rng(10);
  int tested = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(trial % 3);
    const Eigen::MatrixXd c = oracles::random_spd(n, rng);
    const Eigen::VectorXd e = oracles::random_vector(n, rng).array() + 0.5;
    const double gamma = oracles::dense_solve(c, e).sum();
    if (gamma <= 1e-3) continue;
    ++tested;
    const DenseRiskModel model(c);

    // f(V) = V through the custom path lands exactly on the closed form.
    const OptimizerSolution fano = maximize_fano(model, e);
    const OptimizerSolution via_custom = maximize_general(
        model, e,
        RatioSpec::custom([](double v) { return v; },
                          [](double) { return 1.0; }, "variance"));
    CHECK(oracles::rel_err(via_custom.weights, fano.weights) < 1e-10);
    CHECK(oracles::rel_err(via_custom.objective, fano.fano) < 1e-12);

    // f(V) = V^{1/2} through the power path reproduces the Sharpe point.
    const OptimizerSolution sharpe = maximize_sharpe(model, e);
    const OptimizerSolution via_power =
        maximize_general(model, e, RatioSpec::power(0.5));
    CHECK(oracles::rel_err(via_power.weights, sharpe.weights) < 1e-10);
    CHECK(oracles::rel_err(via_power.objective, sharpe.sharpe) < 1e-12);
  }
  CHECK(tested >= 6);
}

TEST_CASE("power-2 objective worked through by hand") {
  // Identity covariance, E = (3, 1): alpha2 = 10, beta2 = 2, gamma = 4,
  // so the stationarity quadratic is 2.25 V^2 - 11 V + 5 = 0 with roots
  // 4.3817329 and 0.5071560; the small-variance root wins E/V^2.
  const OptimizerSolution sol =
      maximize_general(identity_model(2), vec2(3.0, 1.0), RatioSpec::power(2.0));
  CHECK(sol.v_port == doctest::Approx(0.5071560250930338).epsilon(1e-10));
  CHECK(sol.weights[0] == doctest::Approx(0.5598164906).epsilon(1e-8));
  CHECK(sol.weights[1] == doctest::Approx(0.4401835094).epsilon(1e-8));
  CHECK(sol.e_port == doctest::Approx(2.1196329812).epsilon(1e-8));
  CHECK(sol.objective == doctest::Approx(8.2409539964).epsilon(1e-8));
  CHECK(sol.spec_label == "power(2)");

  // Both signs of the other root and the losing sign of this one were
  // evaluated and rejected.
  CHECK(sol.rejected_roots.size() == 3);
  bool saw_big_root = false;
  for (const RejectedRoot& r : sol.rejected_roots) {
    CHECK(r.objective < sol.objective);
    if (std::abs(r.v - 4.381732863795855) < 1e-6) saw_big_root = true;
  }
  CHECK(saw_big_root);

  // The budget-line grid search confirms this is the global maximum.
  const double grid = oracles::budget_line_best(
      Eigen::MatrixXd::Identity(2, 2), vec2(3.0, 1.0),
      [](double v) { return v * v; });
  CHECK(grid == doctest::Approx(sol.objective).epsilon(1e-6));
}

TEST_CASE("general maximizer agrees with exhaustive grid search") {
  auto rng = oracles::make_rng(11);
  int tested = 0;
  for (int trial = 0; trial < 16; ++trial) {
    const Eigen::Index n = (trial % 2 == 0) ? 2 : 3;
    const Eigen::MatrixXd c = oracles::random_spd(n, rng, 1.0);
    const Eigen::VectorXd e = oracles::random_vector(n, rng).array() + 0.7;
    const Eigen::VectorXd inv_e = oracles::dense_solve(c, e);
    const double gamma = inv_e.sum();
    if (gamma <= 0.05) continue;
    ++tested;
    const DenseRiskModel model(c);

    struct Case {
      RatioSpec spec;
      std::function<double(double)> f;
    };
    const Case cases[] = {
        {RatioSpec::power(2.0), [](double v) { return v * v; }},
        {RatioSpec::exponential(0.5), [](double v) { return std::exp(0.5 * v); }},
        {RatioSpec::custom([](double v) { return v + v * v; },
                           [](double v) { return 1.0 + 2.0 * v; }, "v+v^2"),
         [](double v) { return v + v * v; }},
    };
    for (const Case& cs : cases) {
      const OptimizerSolution sol = maximize_general(model, e, cs.spec);
      double grid;
      if (n == 2) {
        grid = oracles::budget_grid_best_2(c, e, cs.f);
      } else {
        // Full two-dimensional budget set: also validates that the optimum
        // really lies on the C^{-1}E / C^{-1}nu line.
        grid = oracles::budget_grid_best_3(c, e, cs.f);
      }
      CHECK(grid <= sol.objective + 1e-9);
      CHECK(std::abs(sol.objective - grid) <=
            1e-3 * std::max(1.0, std::abs(grid)));
    }
  }
  CHECK(tested >= 10);
}

TEST_CASE("exp-rate quadratic agrees with the bracketed scan") {
  auto rng = oracles::make_rng(12);
  const Eigen::MatrixXd c = oracles::random_spd(4, rng);
  const Eigen::VectorXd e = oracles::random_vector(4, rng).array() + 0.8;
  const DenseRiskModel model(c);
  const double xi = 0.7;

  const OptimizerSolution analytic =
      maximize_general(model, e, RatioSpec::exponential(xi));
  const OptimizerSolution scanned = maximize_general(
      model, e,
      RatioSpec::custom([xi](double v) { return std::exp(xi * v); },
                        [xi](double v) { return xi * std::exp(xi * v); },
                        "exp-scan"));
  CHECK(oracles::rel_err(scanned.weights, analytic.weights) < 1e-8);
  CHECK(oracles::rel_err(scanned.objective, analytic.objective) < 1e-10);
}

TEST_CASE("mean-to-variance optimum trades level for ratio against max Sharpe") {
  auto rng = oracles::make_rng(13);
  int tested = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const Eigen::MatrixXd c = oracles::random_spd(4, rng);
    const Eigen::VectorXd e = oracles::random_vector(4, rng).array() + 0.6;
    const ScalarInvariants s = scalar_invariants(DenseRiskModel(c), e);
    if (s.gamma <= 0.0) continue;
    if (s.discriminant() <= 1e-8 * s.alpha2 * s.beta2) continue;
    ++tested;

    const OptimizerSolution sh = maximize_sharpe(DenseRiskModel(c), e);
    const OptimizerSolution fa = maximize_fano(DenseRiskModel(c), e);
    // Deconcentrating toward the low-variance end: both statistics of the
    // ratio portfolio sit below the Sharpe point, its Sharpe is smaller,
    // and its mean-to-variance ratio is larger.
    CHECK(fa.sharpe < sh.sharpe);
    CHECK(fa.fano > sh.fano);
    CHECK(fa.e_port < sh.e_port);
    CHECK(fa.v_port < sh.v_port);
  }
  CHECK(tested >= 8);
}

TEST_CASE("reported solutions are stationary points of the constrained problem") {
  auto rng = oracles::make_rng(14);
  int tested = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::MatrixXd c = oracles::random_spd(4, rng, 1.0);
    const Eigen::VectorXd e = oracles::random_vector(4, rng).array() + 0.7;
    const DenseRiskModel model(c);
    const ScalarInvariants s = scalar_invariants(model, e);
    if (s.gamma <= 0.05) continue;
    ++tested;

    const RatioSpec specs[] = {
        RatioSpec::sharpe(),
        RatioSpec::fano(),
        RatioSpec::power(2.0),
        RatioSpec::power(0.7),
        RatioSpec::exponential(1.3),
        RatioSpec::custom(
            [](double v) { return v + std::sqrt(v); },
            [](double v) { return 1.0 + 0.5 / std::sqrt(v); }, "v+sqrt(v)"),
    };
    for (const RatioSpec& spec : specs) {
      const OptimizerSolution sol = maximize_general(model, e, spec);
      CHECK(stationarity_residual(sol, model, e, spec) <= 1e-8);
      CHECK(std::abs(sol.weights.sum() - 1.0) <= 1e-12);
      // Reported statistics match a from-scratch evaluation of the weights.
      const PortfolioStats st = evaluate_portfolio(sol.weights, model, e);
      CHECK(st.e == doctest::Approx(sol.e_port).epsilon(1e-10));
      CHECK(st.v == doctest::Approx(sol.v_port).epsilon(1e-10));
    }
  }
  CHECK(tested >= 5);
}

TEST_CASE("degenerate and infeasible inputs raise the specific errors") {
  const DenseRiskModel id2 = identity_model(2);

  // E orthogonal to the budget direction: no normalizable Sharpe point.
  CHECK_THROWS_AS(maximize_sharpe(id2, vec2(1.0, -1.0)), DegenerateError);

  // alpha*beta + gamma = 0: nothing with positive expected return.
  CHECK_THROWS_AS(maximize_fano(id2, vec2(-1.0, -1.0)), InfeasibleError);
  CHECK_THROWS_AS(maximize_general(id2, vec2(-1.0, -1.0), RatioSpec::power(2.0)),
                  InfeasibleError);

  // Malformed ratio specifications.
  CHECK_THROWS_AS(RatioSpec::power(0.0), std::invalid_argument);
  CHECK_THROWS_AS(RatioSpec::power(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(RatioSpec::exponential(0.0), std::invalid_argument);
  CHECK_THROWS_AS(RatioSpec::exponential(-2.0), std::invalid_argument);
  CHECK_THROWS_AS(RatioSpec::custom([](double v) { return v; }, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      maximize_general(id2, vec2(1.0, 2.0),
                       RatioSpec::custom([](double v) { return v - 10.0; },
                                         [](double) { return 1.0; })),
      std::invalid_argument);

  // Steep sub-square-root risk growth: the stationarity condition has no
  // real solution, and the failure is reported rather than papered over.
  CHECK_THROWS_AS(maximize_general(id2, vec2(1.0, -0.9), RatioSpec::power(0.1)),
                  ConvergenceError);

  // Input validation.
  CHECK_THROWS_AS(maximize_sharpe(id2, vec3(1.0, 2.0, 3.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(maximize_sharpe(id2, vec2(0.0, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(
      maximize_sharpe(id2, vec2(std::numeric_limits<double>::quiet_NaN(), 1.0)),
      std::invalid_argument);
  CHECK_THROWS_AS(evaluate_portfolio(vec2(0.0, 0.0), id2, vec2(1.0, 1.0)),
                  DegenerateError);
}

TEST_CASE("returns proportional to the budget direction give minimum variance") {
  const DenseRiskModel diag(Eigen::Vector2d(1.0, 4.0).asDiagonal());
  const Eigen::VectorXd e = vec2(2.0, 2.0);

  const OptimizerSolution general =
      maximize_general(diag, e, RatioSpec::power(2.0));
  CHECK(general.weights[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(general.weights[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(std::abs(general.a) <= 1e-12);
  CHECK(general.b == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(general.v_port == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(general.e_port == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(general.objective == doctest::Approx(2.0 / 0.64).epsilon(1e-12));

  // Every budget portfolio has the same expected return here, so the
  // closed forms land on the same minimum-variance point.
  const OptimizerSolution fano = maximize_fano(diag, e);
  const OptimizerSolution sharpe = maximize_sharpe(diag, e);
  CHECK(oracles::rel_err(fano.weights, general.weights) < 1e-10);
  CHECK(oracles::rel_err(sharpe.weights, general.weights) < 1e-10);
}

TEST_CASE("single-position evaluation flags unrewarded risk") {
  const DenseRiskModel id2 = identity_model(2);
  const Eigen::VectorXd w = vec2(1.0, 0.0);

  PortfolioStats st = evaluate_portfolio(w, id2, vec2(1.0, 0.3));
  CHECK(st.e == doctest::Approx(1.0));
  CHECK(st.v == doctest::Approx(1.0));
  CHECK(st.fano == doctest::Approx(1.0));
  CHECK(st.kappa == doctest::Approx(2.0));
  CHECK_FALSE(st.bubble);

  // Expected return below half the variance: risk is not being paid for.
  st = evaluate_portfolio(w, id2, vec2(0.4, 0.3));
  CHECK(st.kappa == doctest::Approx(0.8));
  CHECK(st.bubble);

  // The flag is strict at the boundary.
  st = evaluate_portfolio(w, id2, vec2(0.5, 0.3));
  CHECK(st.kappa == doctest::Approx(1.0));
  CHECK_FALSE(st.bubble);
}

TEST_CASE("optimizers run unchanged through structured risk operators") {
  SUBCASE("uniform correlation: opposite positions against a correlated pair") {
    Eigen::VectorXd sigma = vec2(1.0, 1.0);
    const UniformCorrelationRiskModel model(UniformCorrelationModel{sigma, 0.5});
    const OptimizerSolution sol = maximize_sharpe(model, vec2(1.0, 0.0));
    CHECK(sol.weights[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sol.weights[1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(sol.sharpe == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-12));
  }

  SUBCASE("factor operator and its dense materialization agree") {
    auto rng = oracles::make_rng(15);
    FactorModel fm;
    fm.xi2 = oracles::random_positive(6, rng);
    fm.loadings = oracles::random_matrix(6, 2, rng, 0.4);
    fm.factor_cov = oracles::random_spd(2, rng, 0.2);
    const FactorRiskModel structured(fm);
    const DenseRiskModel dense(
        Eigen::MatrixXd(fm.xi2.asDiagonal()) +
        fm.loadings * fm.factor_cov * fm.loadings.transpose());
    const Eigen::VectorXd e = oracles::random_vector(6, rng).array() + 0.6;

    const OptimizerSolution a = maximize_fano(structured, e);
    const OptimizerSolution b = maximize_fano(dense, e);
    CHECK(oracles::rel_err(a.weights, b.weights) < 1e-9);
    CHECK(oracles::rel_err(a.fano, b.fano) < 1e-10);
  }
}

TEST_CASE("expected-returns wrappers match the plain-vector entry points") {
  auto rng = oracles::make_rng(16);
  const Eigen::MatrixXd c = oracles::random_spd(3, rng);
  const DenseRiskModel model(c);
  ExpectedReturns er;
  er.values = oracles::random_vector(3, rng).array() + 0.8;
  er.horizon_days = 1;

  const OptimizerSolution a = maximize_sharpe(model, er);
  const OptimizerSolution b = maximize_sharpe(model, er.values);
  CHECK(a.weights == b.weights);
  CHECK(a.sharpe == b.sharpe);

  const OptimizerSolution f1 = maximize_general(model, er, RatioSpec::power(2.0));
  const OptimizerSolution f2 =
      maximize_general(model, er.values, RatioSpec::power(2.0));
  CHECK(f1.weights == f2.weights);
}

TEST_CASE("solution JSON carries the reported numbers") {
  const OptimizerSolution sol =
      maximize_general(identity_model(2), vec2(3.0, 1.0), RatioSpec::power(2.0));
  const nlohmann::json j = nlohmann::json::parse(solution_to_json(sol));

  CHECK(j.at("spec").get<std::string>() == "power(2)");
  CHECK(j.at("weights").size() == 2);
  CHECK(j.at("weights")[0].get<double>() == doctest::Approx(sol.weights[0]));
  CHECK(j.at("variance").get<double>() == doctest::Approx(sol.v_port));
  CHECK(j.at("objective").get<double>() == doctest::Approx(sol.objective));
  CHECK(j.at("kappa").get<double>() == doctest::Approx(2.0 * sol.fano));
  CHECK(j.at("rejected_roots").size() == 3);

  // Closed-form solutions have no rejected roots and no such key.
  const nlohmann::json js = nlohmann::json::parse(
      solution_to_json(maximize_sharpe(identity_model(2), vec2(1.0, 1.0))));
  CHECK_FALSE(js.contains("rejected_roots"));
}
