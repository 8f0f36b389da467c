#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace meanrisk {

/**
 * Daily returns/volumes panel.
 *
 * Rows are instruments, columns are trading days with column 0 the most
 * recent day (column s is s days in the past).  Volumes are average daily
 * dollar volumes.  Panels produced by the synthetic generator additionally
 * carry the open-to-close leg of each day's return and the open price, so
 * an intraday (establish-at-open, liquidate-at-close) strategy is well
 * posed; for externally loaded panels those fields are optional and the
 * close-to-close returns are used as the tradeable leg when absent.
 */
struct ReturnsPanel {
  Eigen::MatrixXd returns;   // N x T, close-to-close
  Eigen::MatrixXd volumes;   // N x T, dollars/day, strictly positive
  std::vector<std::string> tickers;  // size N
  std::vector<std::string> dates;    // size T, dates[0] = most recent

  std::optional<Eigen::MatrixXd> open_to_close;  // N x T
  std::optional<Eigen::MatrixXd> open_prices;    // N x T, dollars
  bool synthetic_prices = false;  // set by the generator; loaders leave false

  Eigen::Index n() const { return returns.rows(); }
  Eigen::Index t() const { return returns.cols(); }

  // The tradeable intraday return: open_to_close when present, otherwise
  // the full close-to-close return.
  const Eigen::MatrixXd& intraday_returns() const {
    return open_to_close ? *open_to_close : returns;
  }

  // Throws std::invalid_argument on shape mismatch, non-finite returns or
  // non-positive volumes.
  void validate() const;
};

struct ExpectedReturns {
  Eigen::VectorXd values;
  int horizon_days = 0;  // averaging window d
};

/**
 * Per-instrument return volatilities over a trailing window.
 *
 * Instruments whose in-window returns are constant (zero sample variance)
 * are flagged in `excluded`; their sigma entry is 0 and they must be
 * dropped before building risk models.
 */
struct VolatilityProfile {
  Eigen::VectorXd sigma;
  int window = 0;
  std::vector<Eigen::Index> excluded;

  // Aggregate volatility sigma*: N / sigma*^2 = sum_i 1/sigma_i^2 over
  // non-excluded instruments.
  double aggregate() const;
};

/**
 * Synthetic panel generator configuration.
 *
 * Returns follow a one-market-mode factor structure: every instrument
 * loads sqrt(market_rho) on a common factor, plus k_factors weaker style
 * factors and idiosyncratic noise, all scaled by a log-normal volatility
 * sigma_i = exp(sigma_lognormal_mu + sigma_lognormal_sd * z).  With
 * market_rho = 1 and k_factors = 0 the panel is exactly rank one (all
 * pairwise correlations are 1).
 */
struct GeneratorConfig {
  Eigen::Index n = 0;
  Eigen::Index t = 0;
  int k_factors = 0;
  double market_rho = 0.25;
  double sigma_lognormal_mu = -4.29;  // median ~ 1.37%/day
  double sigma_lognormal_sd = 0.7753; // mean  ~ 1.85%/day
  std::uint64_t seed = 0;

  // Optional knobs (documented defaults; all strictly positive scales).
  double factor_strength = 0.1;        // style-factor loading scale
  double volume_lognormal_mu = 16.1;   // ~ $10M/day median
  double volume_lognormal_sd = 1.0;
  double price_lognormal_mu = 3.912;   // ~ $50 median
  double price_lognormal_sd = 0.5;
  double overnight_fraction = 0.3;     // share of variance left overnight

  void validate() const;

  // Plain key-value file ("key value" or "key=value", '#' comments).
  // Unknown keys are rejected.
  static GeneratorConfig from_file(const std::filesystem::path& path);
};

/**
 * @brief Trailing moving-average expected returns.
 *
 * E_i = mean of returns over columns [s, s+d), i.e. the d days ending s
 * days in the past.  s = 0 uses the d most recent days.  Requires d >= 1
 * and s + d <= T (std::out_of_range otherwise).
 */
ExpectedReturns moving_average_returns(const ReturnsPanel& panel, int d,
                                       Eigen::Index s = 0);

/**
 * @brief Rolling sample volatility over the most recent `window` days.
 *
 * Sample standard deviation with T-1 denominator.  window >= 2 required;
 * window > T raises std::out_of_range.
 */
VolatilityProfile rolling_volatility(const ReturnsPanel& panel, int window);

/// Average daily dollar volume over the most recent `window` days.
Eigen::VectorXd rolling_addv(const ReturnsPanel& panel, int window);

/**
 * @brief Generate a synthetic returns/volumes panel.
 *
 * Deterministic for a fixed config (including seed).  The panel carries
 * open-to-close returns and open prices consistent with the close-to-close
 * returns: close[t] = open[t]*(1+r_oc[t]), open[t] = close[t-1]*(1+r_on[t]).
 */
ReturnsPanel synthesize_panel(const GeneratorConfig& config);

/// Convenience overload: n, t and seed override the config fields.
ReturnsPanel synthesize_panel(Eigen::Index n, Eigen::Index t,
                              const GeneratorConfig& config,
                              std::uint64_t seed);

// --- CSV I/O ------------------------------------------------------------
//
// Panel CSVs have a header row of dates (most recent first), one row per
// instrument with the ticker in the first column.  Lines starting with '#'
// are provenance/comment lines and are skipped on read.

void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::MatrixXd& values,
                      const std::vector<std::string>& tickers,
                      const std::vector<std::string>& dates,
                      const std::vector<std::string>& header_comments = {});

struct LabeledMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> tickers;
  std::vector<std::string> dates;
};

LabeledMatrix read_matrix_csv(const std::filesystem::path& path);

/// Write returns/volumes (and intraday/prices when present) CSVs into a
/// directory. Returns the list of files written.
std::vector<std::filesystem::path> write_panel_csv(
    const ReturnsPanel& panel, const std::filesystem::path& directory,
    const std::vector<std::string>& header_comments = {});

/// Load a panel from CSV files. Ticker/date labels must agree across files.
ReturnsPanel load_panel_csv(
    const std::filesystem::path& returns_path,
    const std::filesystem::path& volumes_path,
    const std::optional<std::filesystem::path>& open_to_close_path = {},
    const std::optional<std::filesystem::path>& open_prices_path = {});

}  // namespace meanrisk
