#include "meanrisk/market_data.hpp"

#include "meanrisk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace meanrisk {

namespace {

std::string zero_padded(Eigen::Index value, int width) {
  std::ostringstream out;
  out << 'd' << std::setw(width) << std::setfill('0') << value;
  return out.str();
}

}  // namespace

void ReturnsPanel::validate() const {
  const Eigen::Index N = returns.rows();
  const Eigen::Index T = returns.cols();
  if (N < 1 || T < 1)
    throw std::invalid_argument("panel must have at least one instrument and one day");
  if (volumes.rows() != N || volumes.cols() != T)
    throw std::invalid_argument("volumes shape does not match returns");
  if (static_cast<Eigen::Index>(tickers.size()) != N)
    throw std::invalid_argument("ticker count does not match instrument count");
  if (static_cast<Eigen::Index>(dates.size()) != T)
    throw std::invalid_argument("date count does not match day count");
  if (!returns.allFinite())
    throw std::invalid_argument("returns contain non-finite entries");
  if (!(volumes.array() > 0.0).all())
    throw std::invalid_argument("volumes must be strictly positive");
  if (open_to_close && (open_to_close->rows() != N || open_to_close->cols() != T))
    throw std::invalid_argument("open_to_close shape does not match returns");
  if (open_prices) {
    if (open_prices->rows() != N || open_prices->cols() != T)
      throw std::invalid_argument("open_prices shape does not match returns");
    if (!(open_prices->array() > 0.0).all())
      throw std::invalid_argument("open prices must be strictly positive");
  }
}

double VolatilityProfile::aggregate() const {
  double sum_inv = 0.0;
  Eigen::Index count = 0;
  std::vector<bool> skip(sigma.size(), false);
  for (Eigen::Index i : excluded) skip[static_cast<std::size_t>(i)] = true;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (skip[static_cast<std::size_t>(i)]) continue;
    sum_inv += 1.0 / (sigma[i] * sigma[i]);
    ++count;
  }
  if (count == 0)
    throw DegenerateError("aggregate volatility undefined: all instruments excluded");
  return std::sqrt(static_cast<double>(count) / sum_inv);
}

ExpectedReturns moving_average_returns(const ReturnsPanel& panel, int d,
                                       Eigen::Index s) {
  if (d < 1) throw std::invalid_argument("moving average window must be >= 1");
  if (s < 0) throw std::invalid_argument("start offset must be >= 0");
  if (s + d > panel.t())
    throw std::out_of_range("moving average window exceeds panel length");
  ExpectedReturns out;
  out.values = panel.returns.middleCols(s, d).rowwise().mean();
  out.horizon_days = d;
  return out;
}

VolatilityProfile rolling_volatility(const ReturnsPanel& panel, int window) {
  if (window < 2) throw std::invalid_argument("volatility window must be >= 2");
  if (window > panel.t())
    throw std::out_of_range("volatility window exceeds panel length");
  const Eigen::Index N = panel.n();
  VolatilityProfile out;
  out.window = window;
  out.sigma.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    // Two-pass sample SD for numerical robustness.
    const auto row = panel.returns.row(i).head(window);
    const double mean = row.mean();
    const double ss = (row.array() - mean).square().sum();
    const double sd = std::sqrt(ss / (window - 1));
    out.sigma[i] = sd;
    if (sd == 0.0) out.excluded.push_back(i);
  }
  return out;
}

Eigen::VectorXd rolling_addv(const ReturnsPanel& panel, int window) {
  if (window < 1) throw std::invalid_argument("ADDV window must be >= 1");
  if (window > panel.t())
    throw std::out_of_range("ADDV window exceeds panel length");
  return panel.volumes.leftCols(window).rowwise().mean();
}

void GeneratorConfig::validate() const {
  if (n < 1 || t < 1)
    throw std::invalid_argument("generator config requires n >= 1 and t >= 1");
  if (k_factors < 0) throw std::invalid_argument("k_factors must be >= 0");
  if (market_rho < 0.0 || market_rho > 1.0)
    throw std::invalid_argument("market_rho must lie in [0, 1]");
  if (sigma_lognormal_sd < 0.0 || volume_lognormal_sd < 0.0 ||
      price_lognormal_sd < 0.0)
    throw std::invalid_argument("log-normal spreads must be >= 0");
  if (factor_strength < 0.0)
    throw std::invalid_argument("factor_strength must be >= 0");
  if (overnight_fraction < 0.0 || overnight_fraction >= 1.0)
    throw std::invalid_argument("overnight_fraction must lie in [0, 1)");
}

GeneratorConfig GeneratorConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open generator config: " + path.string());
  GeneratorConfig cfg;
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), '=', ' ');
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key)) continue;
    if (!(ls >> value))
      throw std::invalid_argument("generator config key without value: " + key);
    kv[key] = value;
  }
  auto take = [&kv](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto as_double = [](const std::string& v, const char* key) {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size())
      throw std::invalid_argument(std::string("bad numeric value for ") + key);
    return d;
  };
  if (auto v = take("n")) cfg.n = static_cast<Eigen::Index>(std::stoll(*v));
  if (auto v = take("t")) cfg.t = static_cast<Eigen::Index>(std::stoll(*v));
  if (auto v = take("k_factors")) cfg.k_factors = std::stoi(*v);
  if (auto v = take("market_rho")) cfg.market_rho = as_double(*v, "market_rho");
  if (auto v = take("sigma_lognormal_mu"))
    cfg.sigma_lognormal_mu = as_double(*v, "sigma_lognormal_mu");
  if (auto v = take("sigma_lognormal_sd"))
    cfg.sigma_lognormal_sd = as_double(*v, "sigma_lognormal_sd");
  if (auto v = take("seed")) cfg.seed = std::stoull(*v);
  if (auto v = take("factor_strength"))
    cfg.factor_strength = as_double(*v, "factor_strength");
  if (auto v = take("volume_lognormal_mu"))
    cfg.volume_lognormal_mu = as_double(*v, "volume_lognormal_mu");
  if (auto v = take("volume_lognormal_sd"))
    cfg.volume_lognormal_sd = as_double(*v, "volume_lognormal_sd");
  if (auto v = take("price_lognormal_mu"))
    cfg.price_lognormal_mu = as_double(*v, "price_lognormal_mu");
  if (auto v = take("price_lognormal_sd"))
    cfg.price_lognormal_sd = as_double(*v, "price_lognormal_sd");
  if (auto v = take("overnight_fraction"))
    cfg.overnight_fraction = as_double(*v, "overnight_fraction");
  if (!kv.empty())
    throw std::invalid_argument("unknown generator config key: " + kv.begin()->first);
  cfg.validate();
  return cfg;
}

ReturnsPanel synthesize_panel(const GeneratorConfig& config) {
  config.validate();
  const Eigen::Index N = config.n;
  const Eigen::Index T = config.t;
  const int K = config.k_factors;

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Per-instrument volatility, volume base and initial price.
  Eigen::VectorXd sigma(N), vol_base(N), close_prev(N);
  for (Eigen::Index i = 0; i < N; ++i)
    sigma[i] = std::exp(config.sigma_lognormal_mu +
                        config.sigma_lognormal_sd * gauss(rng));
  for (Eigen::Index i = 0; i < N; ++i)
    vol_base[i] = std::exp(config.volume_lognormal_mu +
                           config.volume_lognormal_sd * gauss(rng));
  for (Eigen::Index i = 0; i < N; ++i)
    close_prev[i] = std::exp(config.price_lognormal_mu +
                             config.price_lognormal_sd * gauss(rng));

  // Factor loadings: uniform market loading sqrt(market_rho), weak style
  // factors, idiosyncratic remainder so each x_i has unit variance.
  const double market_loading = std::sqrt(config.market_rho);
  Eigen::MatrixXd style(N, std::max(K, 1));
  style.setZero();
  if (K > 0) {
    const double scale = config.factor_strength / std::sqrt(static_cast<double>(K));
    for (Eigen::Index i = 0; i < N; ++i)
      for (int k = 0; k < K; ++k) style(i, k) = scale * gauss(rng);
  }
  Eigen::VectorXd idio(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    double style2 = K > 0 ? style.row(i).head(K).squaredNorm() : 0.0;
    double rem = 1.0 - config.market_rho - style2;
    if (rem < 0.0) {
      // Rescale style loadings so the decomposition stays valid.
      const double target = 0.5 * (1.0 - config.market_rho);
      style.row(i).head(K) *= std::sqrt(target / style2);
      rem = 1.0 - config.market_rho - target;
    }
    idio[i] = std::sqrt(std::max(rem, 0.0));
  }

  const double q = config.overnight_fraction;
  const double oc_scale = std::sqrt(1.0 - q);
  const double on_scale = std::sqrt(q);

  // Generate chronologically, then reverse so column 0 is the most recent.
  Eigen::MatrixXd cc(N, T), oc(N, T), open(N, T), volume(N, T);
  for (Eigen::Index day = 0; day < T; ++day) {
    const double f_market = gauss(rng);
    Eigen::VectorXd f_style(std::max(K, 1));
    for (int k = 0; k < K; ++k) f_style[k] = gauss(rng);
    for (Eigen::Index i = 0; i < N; ++i) {
      double x = market_loading * f_market + idio[i] * gauss(rng);
      for (int k = 0; k < K; ++k) x += style(i, k) * f_style[k];
      const double r_oc = sigma[i] * oc_scale * x;
      const double r_on = sigma[i] * on_scale * (q > 0.0 ? gauss(rng) : 0.0);
      // Guard against total wipe-outs in fat draws.
      const double gross_on = std::max(1.0 + r_on, 1e-6);
      const double gross_oc = std::max(1.0 + r_oc, 1e-6);
      open(i, day) = close_prev[i] * gross_on;
      const double close = open(i, day) * gross_oc;
      cc(i, day) = close / close_prev[i] - 1.0;
      oc(i, day) = gross_oc - 1.0;
      close_prev[i] = close;
      volume(i, day) = vol_base[i] * std::exp(0.2 * gauss(rng));
    }
  }

  ReturnsPanel panel;
  panel.returns = cc.rowwise().reverse();
  panel.volumes = volume.rowwise().reverse();
  panel.open_to_close = oc.rowwise().reverse();
  panel.open_prices = open.rowwise().reverse();
  panel.synthetic_prices = true;
  panel.tickers.reserve(N);
  const int tick_width = std::max<int>(4, static_cast<int>(std::to_string(N).size()));
  for (Eigen::Index i = 0; i < N; ++i) {
    std::ostringstream name;
    name << 'S' << std::setw(tick_width) << std::setfill('0') << i + 1;
    panel.tickers.push_back(name.str());
  }
  panel.dates.reserve(T);
  const int date_width = std::max<int>(4, static_cast<int>(std::to_string(T).size()));
  for (Eigen::Index s = 0; s < T; ++s)
    panel.dates.push_back(zero_padded(T - s, date_width));  // dates[0] = newest
  panel.validate();
  return panel;
}

ReturnsPanel synthesize_panel(Eigen::Index n, Eigen::Index t,
                              const GeneratorConfig& config,
                              std::uint64_t seed) {
  GeneratorConfig cfg = config;
  cfg.n = n;
  cfg.t = t;
  cfg.seed = seed;
  return synthesize_panel(cfg);
}

// --- CSV I/O ------------------------------------------------------------

void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::MatrixXd& values,
                      const std::vector<std::string>& tickers,
                      const std::vector<std::string>& dates,
                      const std::vector<std::string>& header_comments) {
  if (values.rows() != static_cast<Eigen::Index>(tickers.size()) ||
      values.cols() != static_cast<Eigen::Index>(dates.size()))
    throw std::invalid_argument("matrix shape does not match labels");
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& comment : header_comments) out << "# " << comment << '\n';
  out << "ticker";
  for (const auto& d : dates) out << ',' << d;
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    out << tickers[static_cast<std::size_t>(i)];
    for (Eigen::Index s = 0; s < values.cols(); ++s) out << ',' << values(i, s);
    out << '\n';
  }
  if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

LabeledMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  LabeledMatrix out;
  std::string line;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      if (fields.size() < 2)
        throw std::invalid_argument("csv header needs a ticker column and at least one date: " + path.string());
      out.dates.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != out.dates.size() + 1)
      throw std::invalid_argument("csv row width mismatch in " + path.string());
    out.tickers.push_back(fields[0]);
    std::vector<double> row;
    row.reserve(fields.size() - 1);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(fields[j], &pos));
        if (pos != fields[j].size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw std::invalid_argument("bad numeric cell '" + fields[j] + "' in " + path.string());
      }
    }
    rows.push_back(std::move(row));
  }
  if (!have_header || rows.empty())
    throw std::invalid_argument("csv has no data rows: " + path.string());
  out.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(out.dates.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

std::vector<std::filesystem::path> write_panel_csv(
    const ReturnsPanel& panel, const std::filesystem::path& directory,
    const std::vector<std::string>& header_comments) {
  panel.validate();
  std::filesystem::create_directories(directory);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const char* name, const Eigen::MatrixXd& values) {
    const auto path = directory / name;
    write_matrix_csv(path, values, panel.tickers, panel.dates, header_comments);
    written.push_back(path);
  };
  emit("returns.csv", panel.returns);
  emit("volumes.csv", panel.volumes);
  if (panel.open_to_close) emit("open_to_close.csv", *panel.open_to_close);
  if (panel.open_prices) emit("open_prices.csv", *panel.open_prices);
  return written;
}

ReturnsPanel load_panel_csv(
    const std::filesystem::path& returns_path,
    const std::filesystem::path& volumes_path,
    const std::optional<std::filesystem::path>& open_to_close_path,
    const std::optional<std::filesystem::path>& open_prices_path) {
  LabeledMatrix returns = read_matrix_csv(returns_path);
  LabeledMatrix volumes = read_matrix_csv(volumes_path);
  auto check_labels = [&returns](const LabeledMatrix& other, const char* what) {
    if (other.tickers != returns.tickers)
      throw std::invalid_argument(std::string(what) + ": tickers do not match returns file");
    if (other.dates != returns.dates)
      throw std::invalid_argument(std::string(what) + ": dates do not match returns file");
  };
  check_labels(volumes, "volumes");
  ReturnsPanel panel;
  if (open_to_close_path) {
    LabeledMatrix oc = read_matrix_csv(*open_to_close_path);
    check_labels(oc, "open_to_close");
    panel.open_to_close = std::move(oc.values);
  }
  if (open_prices_path) {
    LabeledMatrix prices = read_matrix_csv(*open_prices_path);
    check_labels(prices, "open_prices");
    panel.open_prices = std::move(prices.values);
  }
  panel.returns = std::move(returns.values);
  panel.volumes = std::move(volumes.values);
  panel.tickers = std::move(returns.tickers);
  panel.dates = std::move(returns.dates);
  panel.validate();
  return panel;
}

}  // namespace meanrisk
