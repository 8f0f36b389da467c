#pragma once

#include "meanrisk/long_short.hpp"
#include "meanrisk/market_data.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace meanrisk {

/**
 * Linear trading costs per dollar traded.
 *
 * tau_i is the one-way cost of trading one dollar of instrument i; zeta is
 * the calibration constant that set the cross-sectional mean.
 */
struct CostModel {
  Eigen::VectorXd tau;
  double zeta = 0.0;

  Eigen::Index n() const { return tau.size(); }
  // Throws std::invalid_argument unless every tau_i >= 0 and zeta > 0.
  void validate() const;

  /// All-zero costs for n instruments (frictionless runs).
  static CostModel zero(Eigen::Index n);
};

/**
 * @brief Calibrate tau_i = zeta * sigma_i / A_i with the constant chosen so
 * the cross-sectional mean cost is exactly 10 basis points per dollar.
 *
 * Instruments flagged excluded in the volatility profile (or with
 * non-positive ADDV) must be dropped first; they raise std::invalid_argument.
 */
CostModel calibrate_costs(const VolatilityProfile& sigma,
                          const Eigen::VectorXd& addv);

/**
 * @brief Returns with the round-trip-aware cost haircut applied:
 * sign(E_i) * max(|E_i| - tau_i, 0).
 *
 * Shrinking the magnitudes this way is only an approximation to optimizing
 * with costs inside the objective; it zeroes signals too weak to clear
 * their own cost.
 */
ExpectedReturns effective_returns(const ExpectedReturns& e,
                                  const CostModel& costs);
Eigen::VectorXd effective_returns(const Eigen::VectorXd& e,
                                  const CostModel& costs);

/**
 * The only view of the panel a backtested strategy receives.
 *
 * Column `today` is the trade date; its own returns (and anything more
 * recent) are unknowable at the open, so every accessor hands out data for
 * strictly older columns only and raises LookaheadError on any attempt to
 * read the trade date or its future.
 */
class DataFeed {
 public:
  DataFeed(const ReturnsPanel& panel, Eigen::Index today);

  Eigen::Index universe() const { return panel_->n(); }
  Eigen::Index today_column() const { return today_; }
  const std::string& trade_date() const;
  /// Number of fully closed days available before the trade date.
  Eigen::Index closed_days() const { return panel_->t() - today_ - 1; }

  /**
   * Sub-panel of the `depth` most recent fully closed days: column 0 of the
   * result is the day before the trade date.  depth < 1 or deeper than the
   * available history throws std::out_of_range.
   */
  ReturnsPanel history(Eigen::Index depth) const;

  /// Close-to-close return at absolute panel column s.  s <= today_column()
  /// is a future row from the feed's viewpoint: LookaheadError.
  double past_return(Eigen::Index instrument, Eigen::Index s) const;
  /// Dollar volume at absolute panel column s, same lookahead rule.
  double past_volume(Eigen::Index instrument, Eigen::Index s) const;

 private:
  const ReturnsPanel* panel_;
  Eigen::Index today_;
};

/**
 * Weight-construction callback: given the feed and the per-instrument
 * position bounds for the trade date (expressed in weight space, i.e.
 * dollars divided by the investment level), produce portfolio weights.
 * An all-zero vector means "stand aside today".
 */
using WeightStrategy =
    std::function<Eigen::VectorXd(const DataFeed&, const PositionBounds&)>;

struct BacktestOptions {
  int history_days = 252;  ///< closed days guaranteed to the strategy
  int addv_window = 21;    ///< rolling window for the dollar-volume bounds
  bool record_positions = false;  ///< keep the full N x days dollar book
};

/**
 * Result of an intraday (establish at open, liquidate at close) backtest.
 * Daily streams run chronologically, oldest date first.
 */
struct BacktestReport {
  std::vector<std::string> dates;
  Eigen::VectorXd daily_pnl;    // net dollars per day
  Eigen::VectorXd daily_gross;  // before costs
  Eigen::VectorXd daily_costs;  // round-trip costs charged

  double investment = 0.0;
  double bounds_fraction = 0.0;

  double total_net = 0.0;
  double total_gross = 0.0;
  double total_costs = 0.0;

  double roc = 0.0;  // annualized return on capital
  double sr = std::numeric_limits<double>::quiet_NaN();
  bool sr_defined = false;  // false when the daily stream has no spread
  double cps = std::numeric_limits<double>::quiet_NaN();
  bool cps_defined = false;        // false without open prices or shares
  bool synthetic_prices = false;   // cps computed from generated prices
  double total_shares = 0.0;

  int zero_weight_days = 0;
  double max_abs_net_exposure = 0.0;  // dollars, worst day
  // Worst |H_i| - cap_i over all instrument-dates BEFORE execution clipping;
  // <= 0 whenever the strategy respected its bounds.
  double max_bound_excess = -std::numeric_limits<double>::infinity();

  std::optional<Eigen::MatrixXd> positions;  // N x days, dollars

  Eigen::Index days() const { return daily_pnl.size(); }
};

/**
 * @brief Run the intraday protocol over every date with enough history.
 *
 * Per date: the strategy sees only closed days through the DataFeed; its
 * weights become dollar positions H_i = investment * w_i, hard-clipped to
 * |H_i| <= bounds_fraction * ADDV_i; gross P&L is sum H_i * r_i over the
 * date's tradeable (open-to-close when available) return; costs are charged
 * on both the establishing and the liquidating trade, 2 * sum tau_i |H_i|.
 */
BacktestReport run_intraday_backtest(const ReturnsPanel& panel,
                                     const WeightStrategy& strategy,
                                     double investment, const CostModel& costs,
                                     double bounds_fraction,
                                     const BacktestOptions& options = {});

// --- the standard panel strategy -----------------------------------------

/**
 * Recipe for the stacked mean-to-risk strategy the backtest CLI runs:
 * trailing moving-average expected returns, a statistical factor risk model
 * rebuilt from the trailing window, dollar neutrality, and the date's
 * liquidity bounds, fed through multiply_optimized_weights.
 */
struct StrategyConfig {
  int n_opt = 1;
  double b_hat = 1.0;
  int return_window = 5;
  int risk_window = 126;
  bool dollar_neutral = true;
  bool remove_market_mode = false;
  bool apply_cost_haircut = false;  // shrink E by tau before optimizing

  void validate() const;
};

/// Memoizes per-date risk models so a sweep over n_opt pays for each
/// eigendecomposition once.  Share one cache across runs on the same panel.
class RiskModelCache;
std::shared_ptr<RiskModelCache> make_risk_model_cache();

WeightStrategy make_panel_strategy(
    const StrategyConfig& config, const CostModel& costs,
    std::shared_ptr<RiskModelCache> cache = nullptr);

// --- stack-depth sweep ----------------------------------------------------

struct SweepRow {
  int n_opt = 0;
  BacktestReport report;
};

/**
 * @brief Backtest the standard strategy at every stack depth 1..n_opt_max
 * on one panel, sharing risk models across rows.
 */
std::vector<SweepRow> run_nopt_sweep(const ReturnsPanel& panel,
                                     double investment, const CostModel& costs,
                                     double bounds_fraction, int n_opt_max,
                                     const StrategyConfig& base,
                                     const BacktestOptions& options = {});

// --- report output --------------------------------------------------------

/// JSON summary; daily streams included unless include_daily is false.
std::string backtest_to_json(const BacktestReport& report,
                             bool include_daily = true);

/// date,gross,costs,net rows, oldest first.  Comment lines go on top.
void write_daily_pnl_csv(const std::filesystem::path& path,
                         const BacktestReport& report,
                         const std::vector<std::string>& header_comments = {});

/// n_opt,roc,sr,cps,net summary table, one row per sweep entry.
void write_sweep_summary_csv(const std::filesystem::path& path,
                             const std::vector<SweepRow>& rows,
                             const std::vector<std::string>& header_comments = {});

std::string sweep_to_json(const std::vector<SweepRow>& rows);

}  // namespace meanrisk
