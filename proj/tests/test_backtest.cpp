#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "meanrisk/backtest.hpp"
#include "meanrisk/density.hpp"
#include "meanrisk/errors.hpp"
#include "meanrisk/market_data.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace meanrisk;

namespace {

/// Tiny hand-built panel: N instruments, T days, constant values with
/// hand-chosen tradeable returns and prices on the most recent column.
ReturnsPanel constant_panel(Eigen::Index n, Eigen::Index t, double ret,
                            double volume) {
  ReturnsPanel panel;
  panel.returns = Eigen::MatrixXd::Constant(n, t, ret);
  panel.volumes = Eigen::MatrixXd::Constant(n, t, volume);
  for (Eigen::Index i = 0; i < n; ++i)
    panel.tickers.push_back("T" + std::to_string(i));
  for (Eigen::Index s = 0; s < t; ++s)
    panel.dates.push_back("d" + std::to_string(s));
  return panel;
}

VolatilityProfile profile(std::initializer_list<double> sigma) {
  VolatilityProfile p;
  p.sigma = Eigen::VectorXd(static_cast<Eigen::Index>(sigma.size()));
  Eigen::Index i = 0;
  for (double s : sigma) p.sigma[i++] = s;
  p.window = 21;
  return p;
}

double trapezoid(const DensityEstimate& est) {
  double acc = 0.0;
  for (Eigen::Index j = 1; j < est.x.size(); ++j)
    acc += 0.5 * (est.density[j] + est.density[j - 1]) *
           (est.x[j] - est.x[j - 1]);
  return acc;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("meanrisk_bt_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("cost calibration pins the cross-sectional mean at ten bps") {
  SUBCASE("uniform ratio") {
    Eigen::VectorXd addv(2);
    addv << 1e6, 2e6;
    const CostModel m = calibrate_costs(profile({0.01, 0.02}), addv);
    CHECK(m.tau[0] == 1e-3);
    CHECK(m.tau[1] == 1e-3);
  }
  SUBCASE("one-to-three ratio splits around the mean") {
    Eigen::VectorXd addv(2);
    addv << 1e6, 1e6;
    const CostModel m = calibrate_costs(profile({0.01, 0.03}), addv);
    CHECK(m.tau[0] == doctest::Approx(0.5e-3).epsilon(1e-14));
    CHECK(m.tau[1] == doctest::Approx(1.5e-3).epsilon(1e-14));
  }
  SUBCASE("random profile keeps the exact mean") {
    auto rng = oracles::make_rng(17);
    VolatilityProfile p;
    p.sigma = oracles::random_positive(100, rng, 0.7) * 0.01;
    const Eigen::VectorXd addv = oracles::random_positive(100, rng) * 1e7;
    const CostModel m = calibrate_costs(p, addv);
    CHECK(oracles::rel_err(m.tau.mean(), 1e-3) < 1e-15);
    CHECK(m.zeta > 0.0);
    m.validate();
  }
  SUBCASE("rejects droppable instruments and shape mismatches") {
    Eigen::VectorXd addv(2);
    addv << 1e6, 0.0;
    CHECK_THROWS_AS(calibrate_costs(profile({0.01, 0.02}), addv),
                    std::invalid_argument);
    addv << 1e6, 1e6;
    CHECK_THROWS_AS(calibrate_costs(profile({0.01, 0.0}), addv),
                    std::invalid_argument);
    VolatilityProfile with_excluded = profile({0.01, 0.02});
    with_excluded.excluded.push_back(1);
    CHECK_THROWS_AS(calibrate_costs(with_excluded, addv),
                    std::invalid_argument);
    Eigen::VectorXd wrong(3);
    wrong << 1e6, 1e6, 1e6;
    CHECK_THROWS_AS(calibrate_costs(profile({0.01, 0.02}), wrong),
                    std::invalid_argument);
  }
}

TEST_CASE("cost haircut shrinks magnitudes toward zero, keeping signs") {
  CostModel costs;
  costs.tau = Eigen::VectorXd(3);
  costs.tau << 0.001, 0.003, 0.001;
  costs.zeta = 1.0;
  Eigen::VectorXd e(3);
  e << 0.005, 0.002, -0.004;
  const Eigen::VectorXd eff = effective_returns(e, costs);
  CHECK(eff[0] == doctest::Approx(0.004).epsilon(1e-14));
  CHECK(eff[1] == 0.0);  // signal too weak to clear its own cost
  CHECK(eff[2] == doctest::Approx(-0.003).epsilon(1e-14));

  ExpectedReturns er;
  er.values = e;
  er.horizon_days = 5;
  const ExpectedReturns out = effective_returns(er, costs);
  CHECK(out.horizon_days == 5);
  CHECK(out.values == eff);

  Eigen::VectorXd wrong(2);
  wrong << 0.1, 0.1;
  CHECK_THROWS_AS(effective_returns(wrong, costs), std::invalid_argument);
}

TEST_CASE("data feed exposes closed days only") {
  ReturnsPanel panel = constant_panel(2, 6, 0.0, 1e6);
  for (Eigen::Index s = 0; s < 6; ++s) {
    panel.returns(0, s) = 0.01 * static_cast<double>(s + 1);
    panel.volumes(1, s) = 1e6 + 1e3 * static_cast<double>(s);
  }
  const DataFeed feed(panel, 2);
  CHECK(feed.universe() == 2);
  CHECK(feed.trade_date() == "d2");
  CHECK(feed.closed_days() == 3);

  const ReturnsPanel hist = feed.history(2);
  CHECK(hist.t() == 2);
  CHECK(hist.returns(0, 0) == panel.returns(0, 3));
  CHECK(hist.returns(0, 1) == panel.returns(0, 4));
  CHECK(hist.dates.front() == "d3");

  CHECK(feed.past_return(0, 3) == panel.returns(0, 3));
  CHECK(feed.past_volume(1, 5) == panel.volumes(1, 5));
  CHECK_THROWS_AS(feed.past_return(0, 2), LookaheadError);  // the trade date
  CHECK_THROWS_AS(feed.past_return(0, 0), LookaheadError);  // its future
  CHECK_THROWS_AS(feed.past_volume(1, 1), LookaheadError);
  CHECK_THROWS_AS(feed.history(4), std::out_of_range);
  CHECK_THROWS_AS(feed.history(0), std::out_of_range);
  CHECK_THROWS_AS(feed.past_return(0, 6), std::out_of_range);
}

TEST_CASE("single-stock hand arithmetic: one percent move, ten bps each way") {
  ReturnsPanel panel = constant_panel(1, 3, 0.005, 1e9);
  panel.open_to_close = Eigen::MatrixXd::Constant(1, 3, 0.004);
  panel.open_to_close->coeffRef(0, 0) = 0.01;  // the traded day moves 1%
  panel.open_prices = Eigen::MatrixXd::Constant(1, 3, 50.0);

  CostModel costs;
  costs.tau = Eigen::VectorXd::Constant(1, 1e-3);
  costs.zeta = 1.0;

  BacktestOptions options;
  options.history_days = 2;
  options.addv_window = 2;
  const auto full_tilt = [](const DataFeed&, const PositionBounds&) {
    return Eigen::VectorXd::Ones(1);
  };
  const BacktestReport report =
      run_intraday_backtest(panel, full_tilt, 100.0, costs, 0.01, options);

  REQUIRE(report.days() == 1);
  CHECK(report.dates.front() == "d0");
  CHECK(report.daily_gross[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.daily_costs[0] == doctest::Approx(0.20).epsilon(1e-12));
  CHECK(report.daily_pnl[0] == doctest::Approx(0.80).epsilon(1e-12));
  CHECK(report.total_net <= report.total_gross);
  // Four shares cross the tape (buy and sell 100 dollars at $50).
  CHECK(report.total_shares == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(report.cps_defined);
  CHECK(report.cps == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(report.roc == doctest::Approx(0.8 / 100.0 * 252.0).epsilon(1e-12));
  CHECK_FALSE(report.sr_defined);  // one day has no spread
  CHECK(report.zero_weight_days == 0);
}

TEST_CASE("standing aside every day yields zero metrics and a flag") {
  ReturnsPanel panel = constant_panel(2, 10, 0.01, 1e6);
  const auto flat = [](const DataFeed& feed, const PositionBounds&) {
    return Eigen::VectorXd::Zero(feed.universe()).eval();
  };
  BacktestOptions options;
  options.history_days = 3;
  options.addv_window = 3;
  const BacktestReport report = run_intraday_backtest(
      panel, flat, 1e6, CostModel::zero(2), 0.01, options);
  CHECK(report.days() == 7);
  CHECK(report.zero_weight_days == 7);
  CHECK(report.total_net == 0.0);
  CHECK(report.roc == 0.0);
  CHECK_FALSE(report.sr_defined);
  CHECK(std::isnan(report.sr));
  CHECK_FALSE(report.cps_defined);
  CHECK(report.total_shares == 0.0);
}

TEST_CASE("perfect foresight without costs is profitable every day") {
  GeneratorConfig config;
  config.n = 8;
  config.t = 40;
  config.seed = 5;
  const ReturnsPanel panel = synthesize_panel(config);
  const Eigen::MatrixXd& tradeable = panel.intraday_returns();

  // Deliberately cheating benchmark: read the trade date's own returns
  // (through a captured reference, outside the feed's guard rails).
  const auto oracle_strategy = [&](const DataFeed& feed,
                                   const PositionBounds&) {
    Eigen::VectorXd w(feed.universe());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double r = tradeable(i, feed.today_column());
      w[i] = (r > 0.0 ? 1.0 : r < 0.0 ? -1.0 : 0.0) / 8.0;
    }
    return w;
  };

  BacktestOptions options;
  options.history_days = 5;
  options.addv_window = 5;
  const BacktestReport free_ride = run_intraday_backtest(
      panel, oracle_strategy, 1e4, CostModel::zero(8), 1.0, options);
  CHECK(free_ride.days() == 35);
  CHECK(free_ride.daily_pnl.minCoeff() > 0.0);
  CHECK(free_ride.daily_pnl == free_ride.daily_gross);  // no costs at all

  // The same ride with costs pays for every trade: strictly below gross.
  CostModel costs;
  costs.tau = Eigen::VectorXd::Constant(8, 1e-3);
  costs.zeta = 1.0;
  const BacktestReport taxed = run_intraday_backtest(
      panel, oracle_strategy, 1e4, costs, 1.0, options);
  CHECK((taxed.daily_pnl.array() < taxed.daily_gross.array()).all());
  CHECK(taxed.total_net < taxed.total_gross);
  CHECK(taxed.daily_gross == free_ride.daily_gross);
}

TEST_CASE("oversized orders are clipped to the liquidity bound") {
  ReturnsPanel panel = constant_panel(2, 12, 0.01, 1e4);
  const auto reckless = [](const DataFeed&, const PositionBounds&) {
    Eigen::VectorXd w(2);
    w << 10.0, -10.0;
    return w;
  };
  BacktestOptions options;
  options.history_days = 4;
  options.addv_window = 4;
  options.record_positions = true;
  const double investment = 1e6;
  const double fraction = 0.01;
  const BacktestReport report = run_intraday_backtest(
      panel, reckless, investment, CostModel::zero(2), fraction, options);

  REQUIRE(report.positions.has_value());
  const double cap = fraction * 1e4;  // constant volumes
  for (Eigen::Index d = 0; d < report.days(); ++d) {
    CHECK(std::abs((*report.positions)(0, d)) <= cap + 1e-9);
    CHECK((*report.positions)(0, d) == cap);    // clipped at the bound
    CHECK((*report.positions)(1, d) == -cap);
  }
  // The strategy asked for 10 million dollars against a 100-dollar cap.
  CHECK(report.max_bound_excess ==
        doctest::Approx(10.0 * investment - cap).epsilon(1e-12));
}

TEST_CASE("panel strategy: dollar neutrality and full investment hold") {
  GeneratorConfig config;
  config.n = 10;
  config.t = 70;
  config.seed = 21;
  const ReturnsPanel panel = synthesize_panel(config);

  StrategyConfig strat;
  strat.n_opt = 2;
  strat.return_window = 5;
  strat.risk_window = 20;
  BacktestOptions options;
  options.history_days = 20;
  options.addv_window = 5;
  options.record_positions = true;

  const double investment = 1e4;  // small against synthetic liquidity
  const BacktestReport report = run_intraday_backtest(
      panel, make_panel_strategy(strat, CostModel::zero(10)), investment,
      CostModel::zero(10), 0.01, options);

  CHECK(report.days() == 50);
  CHECK(report.zero_weight_days == 0);
  CHECK(report.max_abs_net_exposure <= 1.0);  // dollars
  REQUIRE(report.positions.has_value());
  for (Eigen::Index d = 0; d < report.days(); ++d) {
    const double gross = report.positions->col(d).cwiseAbs().sum();
    CHECK(gross == doctest::Approx(investment).epsilon(1e-10));
  }
  CHECK(report.max_bound_excess <= 1e-9);
}

TEST_CASE("doubling the investment doubles P&L exactly and keeps SR") {
  GeneratorConfig config;
  config.n = 6;
  config.t = 50;
  config.seed = 8;
  const ReturnsPanel panel = synthesize_panel(config);

  StrategyConfig strat;
  strat.risk_window = 15;
  strat.return_window = 3;
  BacktestOptions options;
  options.history_days = 15;
  options.addv_window = 5;

  CostModel costs;
  costs.tau = Eigen::VectorXd::Constant(6, 1e-3);
  costs.zeta = 1.0;

  const BacktestReport base = run_intraday_backtest(
      panel, make_panel_strategy(strat, costs), 1e4, costs, 0.01, options);
  const BacktestReport doubled = run_intraday_backtest(
      panel, make_panel_strategy(strat, costs), 2e4, costs, 0.01, options);

  REQUIRE(base.days() == doubled.days());
  // Liquidity bounds never bind at this investment level, so the linear
  // cost model makes the scaling exact in floating point.
  CHECK(base.max_bound_excess < 0.0);
  CHECK(doubled.daily_pnl == (2.0 * base.daily_pnl).eval());
  CHECK(doubled.sr == base.sr);
  CHECK(doubled.roc == base.roc);  // both P&L and capital double
}

TEST_CASE("future data cannot reach positions at an earlier date") {
  GeneratorConfig config;
  config.n = 6;
  config.t = 60;
  config.seed = 13;
  const ReturnsPanel panel = synthesize_panel(config);

  StrategyConfig strat;
  strat.risk_window = 15;
  strat.return_window = 4;
  BacktestOptions options;
  options.history_days = 15;
  options.addv_window = 5;
  options.record_positions = true;

  const auto run = [&](const ReturnsPanel& p) {
    return run_intraday_backtest(p, make_panel_strategy(strat, CostModel::zero(6)),
                                 1e4, CostModel::zero(6), 0.01, options);
  };
  const BacktestReport before = run(panel);

  // Scramble every column strictly more recent than column 10 — days the
  // date-10 decision is not allowed to see.
  ReturnsPanel scrambled = panel;
  std::mt19937_64 rng(4242);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index s = 0; s < 10; ++s)
    for (Eigen::Index i = 0; i < scrambled.n(); ++i) {
      scrambled.returns(i, s) = 0.02 * g(rng);
      scrambled.volumes(i, s) = 1e6 * (1.0 + std::abs(g(rng)));
      scrambled.open_to_close->coeffRef(i, s) = 0.02 * g(rng);
      scrambled.open_prices->coeffRef(i, s) = 40.0 + 10.0 * std::abs(g(rng));
    }
  const BacktestReport after = run(scrambled);

  const auto at = std::find(before.dates.begin(), before.dates.end(),
                            panel.dates[10]);
  REQUIRE(at != before.dates.end());
  const Eigen::Index col = at - before.dates.begin();
  CHECK(before.dates[static_cast<std::size_t>(col)] ==
        after.dates[static_cast<std::size_t>(col)]);
  CHECK(before.positions->col(col) == after.positions->col(col));
}

TEST_CASE("a strategy that peeks at the trade date is stopped cold") {
  ReturnsPanel panel = constant_panel(2, 12, 0.01, 1e6);
  const auto cheat = [](const DataFeed& feed, const PositionBounds&) {
    const double r = feed.past_return(0, feed.today_column());
    return Eigen::VectorXd::Constant(2, r).eval();
  };
  BacktestOptions options;
  options.history_days = 4;
  options.addv_window = 4;
  CHECK_THROWS_AS(run_intraday_backtest(panel, cheat, 1e4, CostModel::zero(2),
                                        0.01, options),
                  LookaheadError);
}

TEST_CASE("prohibitive costs push the strategy flat through the haircut") {
  GeneratorConfig config;
  config.n = 5;
  config.t = 40;
  config.seed = 30;
  const ReturnsPanel panel = synthesize_panel(config);

  CostModel costs;
  costs.tau = Eigen::VectorXd::Constant(5, 10.0);  // costs dwarf any signal
  costs.zeta = 1.0;
  StrategyConfig strat;
  strat.risk_window = 10;
  strat.return_window = 3;
  strat.apply_cost_haircut = true;
  BacktestOptions options;
  options.history_days = 10;
  options.addv_window = 5;

  const BacktestReport report = run_intraday_backtest(
      panel, make_panel_strategy(strat, costs), 1e4, costs, 0.01, options);
  CHECK(report.zero_weight_days == report.days());
  CHECK(report.total_net == 0.0);
  CHECK_FALSE(report.sr_defined);
}

TEST_CASE("stack sweep shares models and matches the standalone run") {
  GeneratorConfig config;
  config.n = 10;
  config.t = 80;
  config.seed = 77;
  const ReturnsPanel panel = synthesize_panel(config);

  const VolatilityProfile vol = rolling_volatility(panel, 21);
  const Eigen::VectorXd addv = rolling_addv(panel, 21);
  const CostModel costs = calibrate_costs(vol, addv);

  StrategyConfig base;
  base.risk_window = 30;
  base.return_window = 5;
  BacktestOptions options;
  options.history_days = 30;
  options.addv_window = 21;

  const std::vector<SweepRow> rows =
      run_nopt_sweep(panel, 1e4, costs, 0.01, 3, base, options);
  REQUIRE(rows.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(rows[static_cast<std::size_t>(k)].n_opt == k + 1);
    CHECK(rows[static_cast<std::size_t>(k)].report.days() == 50);
  }

  StrategyConfig standalone = base;
  standalone.n_opt = 1;
  const BacktestReport solo = run_intraday_backtest(
      panel, make_panel_strategy(standalone, costs), 1e4, costs, 0.01,
      options);
  CHECK(rows[0].report.daily_pnl == solo.daily_pnl);
  CHECK(rows[0].report.roc == solo.roc);
  CHECK(rows[0].report.sr == solo.sr);

  // Costs bite on every traded day.
  for (const auto& row : rows)
    CHECK((row.report.daily_pnl.array() <= row.report.daily_gross.array()).all());
}

TEST_CASE("report serialization carries the headline numbers") {
  ReturnsPanel panel = constant_panel(1, 3, 0.005, 1e9);
  panel.open_to_close = Eigen::MatrixXd::Constant(1, 3, 0.01);
  panel.open_prices = Eigen::MatrixXd::Constant(1, 3, 50.0);
  CostModel costs;
  costs.tau = Eigen::VectorXd::Constant(1, 1e-3);
  costs.zeta = 1.0;
  BacktestOptions options;
  options.history_days = 2;
  options.addv_window = 2;
  const auto full_tilt = [](const DataFeed&, const PositionBounds&) {
    return Eigen::VectorXd::Ones(1);
  };
  const BacktestReport report =
      run_intraday_backtest(panel, full_tilt, 100.0, costs, 0.01, options);

  const nlohmann::json j = nlohmann::json::parse(backtest_to_json(report));
  CHECK(j.at("days").get<int>() == 1);
  CHECK(j.at("total_net").get<double>() == doctest::Approx(0.8));
  CHECK(j.at("sr").is_null());  // undefined on a one-day stream
  CHECK(j.at("cps").get<double>() == doctest::Approx(20.0));
  CHECK(j.at("daily_pnl").size() == 1);
  const nlohmann::json compact =
      nlohmann::json::parse(backtest_to_json(report, false));
  CHECK_FALSE(compact.contains("daily_pnl"));

  TempDir dir;
  write_daily_pnl_csv(dir.path / "daily.csv", report, {"provenance line"});
  std::ifstream in(dir.path / "daily.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "# provenance line");
  std::getline(in, line);
  CHECK(line == "date,gross,costs,net");
  std::getline(in, line);
  CHECK(line.substr(0, 3) == "d0,");

  std::vector<SweepRow> rows(2);
  rows[0].n_opt = 1;
  rows[0].report = report;
  rows[1].n_opt = 2;
  rows[1].report = report;
  const nlohmann::json sweep = nlohmann::json::parse(sweep_to_json(rows));
  CHECK(sweep.is_array());
  CHECK(sweep.size() == 2);
  CHECK(sweep[1].at("n_opt").get<int>() == 2);
  write_sweep_summary_csv(dir.path / "sweep.csv", rows, {});
  std::ifstream sweep_in(dir.path / "sweep.csv");
  std::getline(sweep_in, line);
  CHECK(line == "n_opt,roc,sr,cps,total_net");
}

TEST_CASE("kernel density: calibrated lognormal universe is right-skewed") {
  auto rng = oracles::make_rng(55);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd sigma(800);
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    sigma[i] = std::exp(-4.29 + 0.7753 * g(rng));

  const DensityEstimate est = kernel_density(sigma);
  CHECK_FALSE(est.degenerate);
  CHECK(est.bandwidth > 0.0);
  CHECK(trapezoid(est) == doctest::Approx(1.0).epsilon(2e-2));
  Eigen::Index mode;
  est.density.maxCoeff(&mode);
  CHECK(est.x[mode] < sigma.mean());  // mode sits left of the mean

  // In log space the same universe is symmetric: the mode of log(sigma)
  // lands near its mean instead of below it.
  const DensityEstimate log_est =
      kernel_density(sigma.array().log().matrix());
  Eigen::Index log_mode;
  log_est.density.maxCoeff(&log_mode);
  const double log_mean = sigma.array().log().mean();
  const double log_sd = oracles::sample_sd(sigma.array().log().matrix());
  CHECK(std::abs(log_est.x[log_mode] - log_mean) < 0.2 * log_sd);
}

TEST_CASE("kernel density edge cases") {
  Eigen::VectorXd one(1);
  one << 0.014;
  const DensityEstimate spike = kernel_density(one);
  CHECK(spike.degenerate);
  REQUIRE_FALSE(spike.warnings.empty());
  CHECK(trapezoid(spike) == doctest::Approx(1.0).epsilon(2e-2));

  Eigen::VectorXd flat = Eigen::VectorXd::Constant(5, 2.0);
  CHECK(kernel_density(flat).degenerate);

  Eigen::VectorXd two(2);
  two << 1.0, 2.0;
  const DensityEstimate forced = kernel_density(two, 101, 0.25);
  CHECK(forced.bandwidth == 0.25);
  CHECK_FALSE(forced.degenerate);

  CHECK_THROWS_AS(kernel_density(Eigen::VectorXd()), std::invalid_argument);
  CHECK_THROWS_AS(kernel_density(two, 1), std::invalid_argument);
  CHECK_THROWS_AS(kernel_density(two, 101, -0.5), std::invalid_argument);
}

TEST_CASE("backtest input validation") {
  ReturnsPanel panel = constant_panel(2, 5, 0.01, 1e6);
  const auto flat = [](const DataFeed& feed, const PositionBounds&) {
    return Eigen::VectorXd::Zero(feed.universe()).eval();
  };
  BacktestOptions options;
  options.history_days = 10;  // longer than the panel
  options.addv_window = 2;
  CHECK_THROWS_AS(run_intraday_backtest(panel, flat, 1e4, CostModel::zero(2),
                                        0.01, options),
                  std::invalid_argument);
  options.history_days = 2;
  CHECK_THROWS_AS(run_intraday_backtest(panel, flat, -5.0, CostModel::zero(2),
                                        0.01, options),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_intraday_backtest(panel, flat, 1e4, CostModel::zero(3),
                                        0.01, options),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_intraday_backtest(panel, flat, 1e4, CostModel::zero(2),
                                        0.0, options),
                  std::invalid_argument);

  const auto malformed = [](const DataFeed&, const PositionBounds&) {
    return Eigen::VectorXd::Ones(3).eval();  // wrong universe size
  };
  CHECK_THROWS_AS(run_intraday_backtest(panel, malformed, 1e4,
                                        CostModel::zero(2), 0.01, options),
                  std::invalid_argument);

  StrategyConfig bad;
  bad.n_opt = 0;
  CHECK_THROWS_AS(make_panel_strategy(bad, CostModel::zero(2)),
                  std::invalid_argument);
}
