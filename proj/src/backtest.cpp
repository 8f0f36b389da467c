#include "meanrisk/backtest.hpp"

#include "meanrisk/errors.hpp"
#include "meanrisk/risk_model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>
#include <utility>

namespace meanrisk {

namespace {

constexpr double kTradingDaysPerYear = 252.0;
constexpr double kMeanCostPerDollar = 1e-3;  // ten basis points

double sample_sd(const Eigen::VectorXd& x) {
  const double mean = x.mean();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean;
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(x.size() - 1));
}

}  // namespace

void CostModel::validate() const {
  if (tau.size() == 0) throw std::invalid_argument("cost model is empty");
  if (!tau.allFinite() || (tau.array() < 0.0).any())
    throw std::invalid_argument("per-dollar costs must be finite and >= 0");
  if (!(zeta > 0.0) || !std::isfinite(zeta))
    throw std::invalid_argument("cost calibration constant must be positive");
}

CostModel CostModel::zero(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("need at least one instrument");
  CostModel model;
  model.tau = Eigen::VectorXd::Zero(n);
  model.zeta = 1.0;
  return model;
}

CostModel calibrate_costs(const VolatilityProfile& sigma,
                          const Eigen::VectorXd& addv) {
  const Eigen::Index n = sigma.sigma.size();
  if (n == 0) throw std::invalid_argument("empty volatility profile");
  if (addv.size() != n)
    throw std::invalid_argument("volatility and ADDV lengths differ");
  if (!sigma.excluded.empty())
    throw std::invalid_argument(
        "volatility profile still contains excluded instruments; drop them "
        "before calibrating costs");
  Eigen::VectorXd ratio(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(sigma.sigma[i] > 0.0) || !std::isfinite(sigma.sigma[i]))
      throw std::invalid_argument("non-positive volatility at instrument " +
                                  std::to_string(i) +
                                  "; excluded instruments must be dropped");
    if (!(addv[i] > 0.0) || !std::isfinite(addv[i]))
      throw std::invalid_argument("non-positive ADDV at instrument " +
                                  std::to_string(i) +
                                  "; excluded instruments must be dropped");
    ratio[i] = sigma.sigma[i] / addv[i];
  }
  CostModel model;
  model.zeta = kMeanCostPerDollar / ratio.mean();
  model.tau = model.zeta * ratio;
  return model;
}

Eigen::VectorXd effective_returns(const Eigen::VectorXd& e,
                                  const CostModel& costs) {
  costs.validate();
  if (e.size() != costs.n())
    throw std::invalid_argument("returns and cost model lengths differ");
  Eigen::VectorXd out(e.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double mag = std::max(std::abs(e[i]) - costs.tau[i], 0.0);
    out[i] = e[i] < 0.0 ? -mag : mag;
  }
  return out;
}

ExpectedReturns effective_returns(const ExpectedReturns& e,
                                  const CostModel& costs) {
  ExpectedReturns out;
  out.values = effective_returns(e.values, costs);
  out.horizon_days = e.horizon_days;
  return out;
}

// --- DataFeed -------------------------------------------------------------

DataFeed::DataFeed(const ReturnsPanel& panel, Eigen::Index today)
    : panel_(&panel), today_(today) {
  if (today < 0 || today >= panel.t())
    throw std::invalid_argument("trade date outside the panel");
}

const std::string& DataFeed::trade_date() const {
  return panel_->dates[static_cast<std::size_t>(today_)];
}

ReturnsPanel DataFeed::history(Eigen::Index depth) const {
  if (depth < 1 || depth > closed_days())
    throw std::out_of_range(
        "requested " + std::to_string(depth) + " closed days, have " +
        std::to_string(closed_days()));
  const Eigen::Index n = panel_->n();
  ReturnsPanel out;
  out.returns = panel_->returns.block(0, today_ + 1, n, depth);
  out.volumes = panel_->volumes.block(0, today_ + 1, n, depth);
  out.tickers = panel_->tickers;
  out.dates.assign(panel_->dates.begin() + today_ + 1,
                   panel_->dates.begin() + today_ + 1 + depth);
  if (panel_->open_to_close)
    out.open_to_close = panel_->open_to_close->block(0, today_ + 1, n, depth);
  if (panel_->open_prices)
    out.open_prices = panel_->open_prices->block(0, today_ + 1, n, depth);
  out.synthetic_prices = panel_->synthetic_prices;
  return out;
}

double DataFeed::past_return(Eigen::Index instrument, Eigen::Index s) const {
  if (instrument < 0 || instrument >= panel_->n())
    throw std::out_of_range("instrument index out of range");
  if (s >= panel_->t()) throw std::out_of_range("day offset out of range");
  if (s <= today_)
    throw LookaheadError("return at day offset " + std::to_string(s) +
                         " is not known at the open of column " +
                         std::to_string(today_));
  return panel_->returns(instrument, s);
}

double DataFeed::past_volume(Eigen::Index instrument, Eigen::Index s) const {
  if (instrument < 0 || instrument >= panel_->n())
    throw std::out_of_range("instrument index out of range");
  if (s >= panel_->t()) throw std::out_of_range("day offset out of range");
  if (s <= today_)
    throw LookaheadError("volume at day offset " + std::to_string(s) +
                         " is not known at the open of column " +
                         std::to_string(today_));
  return panel_->volumes(instrument, s);
}

// --- backtest loop --------------------------------------------------------

BacktestReport run_intraday_backtest(const ReturnsPanel& panel,
                                     const WeightStrategy& strategy,
                                     double investment, const CostModel& costs,
                                     double bounds_fraction,
                                     const BacktestOptions& options) {
  panel.validate();
  costs.validate();
  if (!strategy) throw std::invalid_argument("no strategy provided");
  const Eigen::Index n = panel.n();
  if (costs.n() != n)
    throw std::invalid_argument("cost model does not match the universe");
  if (!(investment > 0.0) || !std::isfinite(investment))
    throw std::invalid_argument("investment must be positive");
  if (!(bounds_fraction > 0.0) || !std::isfinite(bounds_fraction))
    throw std::invalid_argument("bounds fraction must be positive");
  if (options.history_days < 1 || options.addv_window < 1)
    throw std::invalid_argument("history and ADDV windows must be >= 1");

  const Eigen::Index need =
      std::max<Eigen::Index>(options.history_days, options.addv_window);
  const Eigen::Index first = panel.t() - 1 - need;
  if (first < 0)
    throw std::invalid_argument(
        "panel has " + std::to_string(panel.t()) + " days, need more than " +
        std::to_string(need));
  const Eigen::Index days = first + 1;

  const Eigen::MatrixXd& tradeable = panel.intraday_returns();

  BacktestReport report;
  report.investment = investment;
  report.bounds_fraction = bounds_fraction;
  report.synthetic_prices = panel.synthetic_prices;
  report.dates.reserve(static_cast<std::size_t>(days));
  report.daily_pnl.resize(days);
  report.daily_gross.resize(days);
  report.daily_costs.resize(days);
  if (options.record_positions)
    report.positions = Eigen::MatrixXd::Zero(n, days);

  Eigen::Index out = 0;
  for (Eigen::Index c = first; c >= 0; --c, ++out) {
    const DataFeed feed(panel, c);
    const Eigen::VectorXd addv =
        panel.volumes.block(0, c + 1, n, options.addv_window).rowwise().mean();
    PositionBounds bounds;
    bounds.upper = (bounds_fraction / investment) * addv;
    bounds.lower = -bounds.upper;

    Eigen::VectorXd w = strategy(feed, bounds);
    if (w.size() != n || !w.allFinite())
      throw std::invalid_argument("strategy returned malformed weights on " +
                                  feed.trade_date());

    Eigen::VectorXd h = investment * w;
    bool any_position = false;
    double day_cost = 0.0;
    double day_gross = 0.0;
    double net_exposure = 0.0;
    double day_shares = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double cap = bounds_fraction * addv[i];
      report.max_bound_excess =
          std::max(report.max_bound_excess, std::abs(h[i]) - cap);
      h[i] = std::clamp(h[i], -cap, cap);
      if (h[i] != 0.0) any_position = true;
      day_gross += h[i] * tradeable(i, c);
      day_cost += 2.0 * costs.tau[i] * std::abs(h[i]);
      net_exposure += h[i];
      if (panel.open_prices)
        day_shares += 2.0 * std::abs(h[i]) / (*panel.open_prices)(i, c);
    }
    if (!any_position) ++report.zero_weight_days;

    report.dates.push_back(panel.dates[static_cast<std::size_t>(c)]);
    report.daily_gross[out] = day_gross;
    report.daily_costs[out] = day_cost;
    report.daily_pnl[out] = day_gross - day_cost;
    report.max_abs_net_exposure =
        std::max(report.max_abs_net_exposure, std::abs(net_exposure));
    report.total_shares += day_shares;
    if (report.positions) report.positions->col(out) = h;
  }

  report.total_gross = report.daily_gross.sum();
  report.total_costs = report.daily_costs.sum();
  report.total_net = report.daily_pnl.sum();
  report.roc = (report.total_net / investment) *
               (kTradingDaysPerYear / static_cast<double>(days));
  if (days >= 2) {
    const double sd = sample_sd(report.daily_pnl);
    if (sd > 0.0) {
      report.sr = report.daily_pnl.mean() / sd * std::sqrt(kTradingDaysPerYear);
      report.sr_defined = true;
    }
  }
  if (panel.open_prices && report.total_shares > 0.0) {
    report.cps = 100.0 * report.total_net / report.total_shares;
    report.cps_defined = true;
  }
  return report;
}

// --- the standard panel strategy -----------------------------------------

void StrategyConfig::validate() const {
  if (n_opt < 1) throw std::invalid_argument("stack depth must be >= 1");
  if (!std::isfinite(b_hat)) throw std::invalid_argument("b_hat must be finite");
  if (return_window < 1)
    throw std::invalid_argument("return window must be >= 1");
  if (risk_window < 2) throw std::invalid_argument("risk window must be >= 2");
}

class RiskModelCache {
 public:
  using Key = std::tuple<Eigen::Index, int, bool>;

  std::shared_ptr<const FactorRiskModel> get(const Key& key) {
    const std::lock_guard<std::mutex> lock(mutex_);
    const auto it = models_.find(key);
    return it == models_.end() ? nullptr : it->second;
  }

  void put(const Key& key, std::shared_ptr<const FactorRiskModel> model) {
    const std::lock_guard<std::mutex> lock(mutex_);
    models_.emplace(key, std::move(model));
  }

 private:
  std::mutex mutex_;
  std::map<Key, std::shared_ptr<const FactorRiskModel>> models_;
};

std::shared_ptr<RiskModelCache> make_risk_model_cache() {
  return std::make_shared<RiskModelCache>();
}

WeightStrategy make_panel_strategy(const StrategyConfig& config,
                                   const CostModel& costs,
                                   std::shared_ptr<RiskModelCache> cache) {
  config.validate();
  costs.validate();
  return [config, costs, cache](const DataFeed& feed,
                                const PositionBounds& bounds) {
    const RiskModelCache::Key key{feed.today_column(), config.risk_window,
                                  config.remove_market_mode};
    std::shared_ptr<const FactorRiskModel> model =
        cache ? cache->get(key) : nullptr;
    if (!model) {
      const StatisticalModel stat = build_statistical_model(
          feed.history(config.risk_window), config.remove_market_mode);
      model = std::make_shared<const FactorRiskModel>(stat.to_factor_model());
      if (cache) cache->put(key, model);
    }

    ExpectedReturns e = moving_average_returns(
        feed.history(config.return_window), config.return_window);
    if (config.apply_cost_haircut) e = effective_returns(e, costs);
    if ((e.values.array() == 0.0).all())
      return Eigen::VectorXd::Zero(feed.universe()).eval();  // stand aside

    MultiOptSpec spec;
    spec.n_opt = config.n_opt;
    spec.b_hat = config.b_hat;
    if (config.dollar_neutral)
      spec.constraints = ConstraintSet::dollar_neutral(feed.universe());
    spec.bounds = bounds;
    try {
      return multiply_optimized_weights(*model, e.values, spec).weights;
    } catch (const ConvergenceError&) {
      // The liquidity caps cannot absorb the whole budget, so no capped
      // book exists.  Hand back the uncapped one; the harness clips it.
      spec.bounds.reset();
      return multiply_optimized_weights(*model, e.values, spec).weights;
    }
  };
}

std::vector<SweepRow> run_nopt_sweep(const ReturnsPanel& panel,
                                     double investment, const CostModel& costs,
                                     double bounds_fraction, int n_opt_max,
                                     const StrategyConfig& base,
                                     const BacktestOptions& options) {
  if (n_opt_max < 1) throw std::invalid_argument("sweep needs n_opt_max >= 1");
  const auto cache = make_risk_model_cache();
  std::vector<SweepRow> rows;
  rows.reserve(static_cast<std::size_t>(n_opt_max));
  for (int k = 1; k <= n_opt_max; ++k) {
    StrategyConfig config = base;
    config.n_opt = k;
    SweepRow row;
    row.n_opt = k;
    row.report = run_intraday_backtest(
        panel, make_panel_strategy(config, costs, cache), investment, costs,
        bounds_fraction, options);
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- report output --------------------------------------------------------

namespace {

nlohmann::json report_json(const BacktestReport& report, bool include_daily) {
  nlohmann::json j{
      {"days", report.days()},
      {"investment", report.investment},
      {"bounds_fraction", report.bounds_fraction},
      {"total_net", report.total_net},
      {"total_gross", report.total_gross},
      {"total_costs", report.total_costs},
      {"roc", report.roc},
      {"sr_defined", report.sr_defined},
      {"cps_defined", report.cps_defined},
      {"synthetic_prices", report.synthetic_prices},
      {"total_shares", report.total_shares},
      {"zero_weight_days", report.zero_weight_days},
      {"max_abs_net_exposure", report.max_abs_net_exposure},
      {"max_bound_excess", report.max_bound_excess},
  };
  j["sr"] = report.sr_defined ? nlohmann::json(report.sr) : nullptr;
  j["cps"] = report.cps_defined ? nlohmann::json(report.cps) : nullptr;
  if (include_daily) {
    j["dates"] = report.dates;
    j["daily_pnl"] = std::vector<double>(
        report.daily_pnl.begin(), report.daily_pnl.end());
    j["daily_gross"] = std::vector<double>(
        report.daily_gross.begin(), report.daily_gross.end());
    j["daily_costs"] = std::vector<double>(
        report.daily_costs.begin(), report.daily_costs.end());
  }
  return j;
}

}  // namespace

std::string backtest_to_json(const BacktestReport& report, bool include_daily) {
  return report_json(report, include_daily).dump(2);
}

void write_daily_pnl_csv(const std::filesystem::path& path,
                         const BacktestReport& report,
                         const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& comment : header_comments) out << "# " << comment << '\n';
  out << "date,gross,costs,net\n";
  for (Eigen::Index d = 0; d < report.days(); ++d)
    out << report.dates[static_cast<std::size_t>(d)] << ','
        << report.daily_gross[d] << ',' << report.daily_costs[d] << ','
        << report.daily_pnl[d] << '\n';
  if (!out) throw std::ios_base::failure("failed writing " + path.string());
}

void write_sweep_summary_csv(const std::filesystem::path& path,
                             const std::vector<SweepRow>& rows,
                             const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& comment : header_comments) out << "# " << comment << '\n';
  out << "n_opt,roc,sr,cps,total_net\n";
  for (const auto& row : rows)
    out << row.n_opt << ',' << row.report.roc << ',' << row.report.sr << ','
        << row.report.cps << ',' << row.report.total_net << '\n';
  if (!out) throw std::ios_base::failure("failed writing " + path.string());
}

std::string sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j = report_json(row.report, false);
    j["n_opt"] = row.n_opt;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace meanrisk
