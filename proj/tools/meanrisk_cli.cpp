// Command-line front end: synthesize panels, run the optimizers, back-test
// strategies, and emit plot-ready density data.  Every output file carries a
// provenance header (config hash, seed, library version) and is byte-stable
// for a fixed configuration.
#include <CLI11.hpp>
#include <json.hpp>

#include "meanrisk/backtest.hpp"
#include "meanrisk/density.hpp"
#include "meanrisk/errors.hpp"
#include "meanrisk/long_only.hpp"
#include "meanrisk/long_short.hpp"
#include "meanrisk/market_data.hpp"
#include "meanrisk/ratio_optimizer.hpp"
#include "meanrisk/risk_model.hpp"
#include "meanrisk/version.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace meanrisk;
namespace fs = std::filesystem;

// --- panel plumbing -------------------------------------------------------

struct PanelSource {
  std::string input;  // returns-only CSV; volumes default to 1
  std::string returns_path;
  std::string volumes_path;
  std::string open_to_close_path;
  std::string open_prices_path;

  bool synth = false;
  std::string gen_config_path;
  GeneratorConfig gen;
  // Values actually set on the command line (so they can override a file).
  bool n_set = false, t_set = false, seed_set = false, k_set = false,
       rho_set = false;
};

void add_panel_options(CLI::App* cmd, PanelSource& src) {
  cmd->add_option("--input", src.input,
                  "Returns CSV only (volumes default to 1; enough for the "
                  "optimizers)");
  cmd->add_option("--returns", src.returns_path, "Returns CSV");
  cmd->add_option("--volumes", src.volumes_path, "Dollar-volume CSV");
  cmd->add_option("--open-to-close", src.open_to_close_path,
                  "Intraday-leg returns CSV (optional)");
  cmd->add_option("--open-prices", src.open_prices_path,
                  "Open-price CSV (optional)");
  cmd->add_flag("--synth", src.synth, "Generate a synthetic panel instead");
  cmd->add_option("--gen-config", src.gen_config_path,
                  "Generator key-value config file");
  cmd->add_option("--n", src.gen.n, "Synthetic universe size");
  cmd->add_option("--t", src.gen.t, "Synthetic panel length (days)");
  cmd->add_option("--seed", src.gen.seed, "Generator seed");
  cmd->add_option("--k-factors", src.gen.k_factors,
                  "Synthetic style-factor count");
  cmd->add_option("--market-rho", src.gen.market_rho,
                  "Synthetic market-mode correlation");
}

// Key-value options file for a subcommand.  Keys are the long option names
// without the leading dashes; command-line values always win; unknown and
// duplicate keys are rejected.
std::string trim_ws(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot read config file " + path);
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string text = trim_ws(line);
    if (text.empty() || text.front() == '#' || text.front() == ';') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected key=value");
    const std::string key = trim_ws(text.substr(0, eq));
    const std::string value = trim_ws(text.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": empty key");
    if (key == "config")
      throw std::invalid_argument(path + ": config files cannot nest");
    if (!seen.insert(key).second)
      throw std::invalid_argument(path + ": duplicate key '" + key + "'");
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw std::invalid_argument(path + ": unknown key '" + key + "' for " +
                                  cmd->get_name());
    if (opt->count() > 0) continue;  // set on the command line already
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw std::invalid_argument(path + ": key '" + key + "': " + e.what());
    }
  }
}

// Flags set on the command line override the generator config file.
void note_overrides(CLI::App* cmd, PanelSource& src) {
  src.n_set = cmd->count("--n") > 0;
  src.t_set = cmd->count("--t") > 0;
  src.seed_set = cmd->count("--seed") > 0;
  src.k_set = cmd->count("--k-factors") > 0;
  src.rho_set = cmd->count("--market-rho") > 0;
}

GeneratorConfig effective_generator(const PanelSource& src) {
  GeneratorConfig config = src.gen;
  if (!src.gen_config_path.empty()) {
    GeneratorConfig from_file = GeneratorConfig::from_file(src.gen_config_path);
    if (src.n_set) from_file.n = config.n;
    if (src.t_set) from_file.t = config.t;
    if (src.seed_set) from_file.seed = config.seed;
    if (src.k_set) from_file.k_factors = config.k_factors;
    if (src.rho_set) from_file.market_rho = config.market_rho;
    config = from_file;
  }
  return config;
}

ReturnsPanel load_panel(const PanelSource& src) {
  if (src.synth) {
    const GeneratorConfig config = effective_generator(src);
    config.validate();
    return synthesize_panel(config);
  }
  if (!src.input.empty()) {
    LabeledMatrix m = read_matrix_csv(src.input);
    ReturnsPanel panel;
    panel.returns = std::move(m.values);
    panel.volumes =
        Eigen::MatrixXd::Ones(panel.returns.rows(), panel.returns.cols());
    panel.tickers = std::move(m.tickers);
    panel.dates = std::move(m.dates);
    panel.validate();
    return panel;
  }
  if (!src.returns_path.empty() && !src.volumes_path.empty()) {
    std::optional<fs::path> oc, op;
    if (!src.open_to_close_path.empty()) oc = src.open_to_close_path;
    if (!src.open_prices_path.empty()) op = src.open_prices_path;
    ReturnsPanel panel = load_panel_csv(src.returns_path, src.volumes_path, oc, op);
    panel.validate();
    return panel;
  }
  throw std::invalid_argument(
      "no panel source: pass --synth, --input, or --returns with --volumes");
}

std::uint64_t source_seed(const PanelSource& src) {
  return src.synth ? effective_generator(src).seed : 0;
}

void describe_source(std::ostringstream& out, const PanelSource& src) {
  if (src.synth) {
    const GeneratorConfig g = effective_generator(src);
    out << "source=synth|n=" << g.n << "|t=" << g.t << "|seed=" << g.seed
        << "|k_factors=" << g.k_factors << "|market_rho=" << g.market_rho
        << "|overnight=" << g.overnight_fraction;
  } else if (!src.input.empty()) {
    out << "source=input|input=" << src.input;
  } else {
    out << "source=files|returns=" << src.returns_path
        << "|volumes=" << src.volumes_path
        << "|open_to_close=" << src.open_to_close_path
        << "|open_prices=" << src.open_prices_path;
  }
}

// --- provenance -----------------------------------------------------------

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;

  std::vector<std::string> comments() const {
    return {"config-hash " + config_hash, "seed " + std::to_string(seed),
            "version " + std::string(kVersion)};
  }
  nlohmann::json json() const {
    return {{"config_hash", config_hash},
            {"seed", seed},
            {"version", std::string(kVersion)}};
  }
};

Provenance make_provenance(const std::string& canonical, std::uint64_t seed) {
  return {hex64(fnv1a64(canonical)), seed};
}

fs::path prepare_out_dir(const std::string& out) {
  if (out.empty()) throw std::invalid_argument("--out directory is required");
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << body;
  if (!out) throw std::ios_base::failure("failed writing " + path.string());
}

void write_xy_csv(const fs::path& path, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& y,
                  const std::vector<std::string>& comments) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "x,density\n";
  for (Eigen::Index j = 0; j < x.size(); ++j)
    out << x[j] << ',' << y[j] << '\n';
  write_text(path, out.str());
}

void write_weights_csv(const fs::path& path,
                       const std::vector<std::string>& tickers,
                       const Eigen::VectorXd& weights,
                       const std::vector<std::string>& comments) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "ticker,weight\n";
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    out << tickers[static_cast<std::size_t>(i)] << ',' << weights[i] << '\n';
  write_text(path, out.str());
}

// --- synth ----------------------------------------------------------------

struct SynthArgs {
  PanelSource source;
  std::string config_path;
  std::string out;
};

int run_synth(const SynthArgs& args) {
  PanelSource src = args.source;
  src.synth = true;
  const GeneratorConfig config = effective_generator(src);
  const ReturnsPanel panel = synthesize_panel(config);

  std::ostringstream canon;
  canon << "cmd=synth|";
  describe_source(canon, src);
  const Provenance prov = make_provenance(canon.str(), config.seed);

  const fs::path dir = prepare_out_dir(args.out);
  const auto files = write_panel_csv(panel, dir, prov.comments());
  for (const auto& f : files) std::cout << f.string() << '\n';
  return 0;
}

// --- optimize -------------------------------------------------------------

struct OptimizeArgs {
  PanelSource source;
  std::string config_path;
  std::string ratio = "sharpe";
  double p = 0.5;
  double xi = 1.0;
  bool long_only = false;
  bool remove_market_mode = false;
  int window = 10;
  int k_override = 0;
  std::string out;
};

RatioSpec make_ratio_spec(const OptimizeArgs& args) {
  if (args.ratio == "sharpe") return RatioSpec::sharpe();
  if (args.ratio == "fano") return RatioSpec::fano();
  if (args.ratio == "power") return RatioSpec::power(args.p);
  if (args.ratio == "exp") return RatioSpec::exponential(args.xi);
  throw std::invalid_argument("unknown ratio '" + args.ratio +
                              "' (sharpe, fano, power, exp)");
}

nlohmann::json stats_json(const PortfolioStats& stats) {
  return {{"e", stats.e},         {"v", stats.v},
          {"sharpe", stats.sharpe}, {"fano", stats.fano},
          {"kappa", stats.kappa},   {"bubble", stats.bubble}};
}

int run_optimize(const OptimizeArgs& args) {
  const ReturnsPanel panel = load_panel(args.source);
  const ExpectedReturns e = moving_average_returns(panel, args.window);

  StatisticalModelOptions model_options;
  if (args.k_override > 0) model_options.k_override = args.k_override;
  const StatisticalModel stat =
      build_statistical_model(panel, args.remove_market_mode, model_options);
  const FactorRiskModel model(stat.to_factor_model());

  if (args.long_only && args.ratio != "sharpe" && args.ratio != "fano")
    throw std::invalid_argument(
        "long-only optimization supports the sharpe and fano ratios");

  std::ostringstream canon;
  canon << "cmd=optimize|";
  describe_source(canon, args.source);
  canon << "|ratio=" << args.ratio << "|p=" << args.p << "|xi=" << args.xi
        << "|long_only=" << args.long_only << "|window=" << args.window
        << "|remove_market_mode=" << args.remove_market_mode
        << "|k=" << args.k_override;
  const Provenance prov = make_provenance(canon.str(), source_seed(args.source));

  nlohmann::json doc;
  doc["provenance"] = prov.json();
  doc["ratio"] = args.ratio;
  doc["window"] = args.window;
  doc["model"] = {{"erank", stat.erank},
                  {"k", stat.k},
                  {"sample_rank", stat.sample_rank},
                  {"market_mode_removed", stat.market_mode_removed}};

  Eigen::VectorXd weights;
  if (args.long_only) {
    const LongOnlySolution sol = args.ratio == "fano"
                                     ? fano_long_only(model, e)
                                     : sharpe_long_only(model, e);
    weights = sol.weights;
    doc["solution"] = nlohmann::json::parse(long_only_to_json(sol));
  } else {
    const RatioSpec spec = make_ratio_spec(args);
    OptimizerSolution sol;
    if (args.ratio == "sharpe")
      sol = maximize_sharpe(model, e);
    else if (args.ratio == "fano")
      sol = maximize_fano(model, e);
    else
      sol = maximize_general(model, e, spec);
    weights = sol.weights;
    doc["solution"] = nlohmann::json::parse(solution_to_json(sol));
  }
  doc["stats"] = stats_json(evaluate_portfolio(weights, model, e.values));

  // Side-by-side Sharpe/Fano comparison under the same constraints.
  std::ostringstream table;
  table << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& c : prov.comments()) table << "# " << c << '\n';
  table << "ratio,e,v,sharpe,fano,kappa,active_count\n";
  for (const std::string& name : {std::string("sharpe"), std::string("fano")}) {
    Eigen::VectorXd w;
    Eigen::Index active = panel.n();
    if (args.long_only) {
      const LongOnlySolution sol = name == "fano" ? fano_long_only(model, e)
                                                  : sharpe_long_only(model, e);
      w = sol.weights;
      active = static_cast<Eigen::Index>(sol.active_set.included.size());
    } else {
      w = (name == "fano" ? maximize_fano(model, e) : maximize_sharpe(model, e))
              .weights;
    }
    const PortfolioStats stats = evaluate_portfolio(w, model, e.values);
    table << name << ',' << stats.e << ',' << stats.v << ',' << stats.sharpe
          << ',' << stats.fano << ',' << stats.kappa << ',' << active << '\n';
  }

  const fs::path dir = prepare_out_dir(args.out);
  write_weights_csv(dir / "weights.csv", panel.tickers, weights,
                    prov.comments());
  write_text(dir / "solution.json", doc.dump(2) + "\n");
  write_text(dir / "comparison.csv", table.str());
  std::cout << (dir / "weights.csv").string() << '\n'
            << (dir / "solution.json").string() << '\n'
            << (dir / "comparison.csv").string() << '\n';
  return 0;
}

// --- backtest -------------------------------------------------------------

struct BacktestArgs {
  PanelSource source;
  std::string config_path;
  double investment = 20e6;
  double bounds_fraction = 0.01;
  bool sweep = false;
  int sweep_max = 5;
  int n_opt = 1;
  double b_hat = 1.0;
  int return_window = 5;
  int risk_window = 126;
  int history_days = 0;  // 0: derived from the windows
  int addv_window = 21;
  int cost_window = 21;
  bool dollar_neutral = true;
  bool remove_market_mode = false;
  bool cost_haircut = false;
  std::string out;
};

int run_backtest(const BacktestArgs& args) {
  const auto started = std::chrono::steady_clock::now();
  const ReturnsPanel panel = load_panel(args.source);

  const VolatilityProfile vol = rolling_volatility(panel, args.cost_window);
  const Eigen::VectorXd addv = rolling_addv(panel, args.cost_window);
  const CostModel costs = calibrate_costs(vol, addv);

  StrategyConfig strat;
  strat.n_opt = args.n_opt;
  strat.b_hat = args.b_hat;
  strat.return_window = args.return_window;
  strat.risk_window = args.risk_window;
  strat.dollar_neutral = args.dollar_neutral;
  strat.remove_market_mode = args.remove_market_mode;
  strat.apply_cost_haircut = args.cost_haircut;

  BacktestOptions options;
  options.addv_window = args.addv_window;
  options.history_days =
      args.history_days > 0
          ? args.history_days
          : std::max(args.risk_window, args.return_window);

  std::ostringstream canon;
  canon << "cmd=backtest|";
  describe_source(canon, args.source);
  canon << "|investment=" << args.investment
        << "|bounds_fraction=" << args.bounds_fraction
        << "|sweep=" << args.sweep << "|sweep_max=" << args.sweep_max
        << "|n_opt=" << args.n_opt << "|b_hat=" << args.b_hat
        << "|return_window=" << args.return_window
        << "|risk_window=" << args.risk_window
        << "|history_days=" << options.history_days
        << "|addv_window=" << args.addv_window
        << "|cost_window=" << args.cost_window
        << "|dollar_neutral=" << args.dollar_neutral
        << "|remove_market_mode=" << args.remove_market_mode
        << "|cost_haircut=" << args.cost_haircut;
  const Provenance prov = make_provenance(canon.str(), source_seed(args.source));

  const fs::path dir = prepare_out_dir(args.out);
  if (args.sweep) {
    const std::vector<SweepRow> rows =
        run_nopt_sweep(panel, args.investment, costs, args.bounds_fraction,
                       args.sweep_max, strat, options);
    nlohmann::json doc;
    doc["provenance"] = prov.json();
    doc["rows"] = nlohmann::json::parse(sweep_to_json(rows));
    write_text(dir / "sweep.json", doc.dump(2) + "\n");
    write_sweep_summary_csv(dir / "sweep_summary.csv", rows, prov.comments());
    for (const auto& row : rows)
      write_daily_pnl_csv(
          dir / ("daily_nopt" + std::to_string(row.n_opt) + ".csv"),
          row.report, prov.comments());
    std::cout << (dir / "sweep_summary.csv").string() << '\n'
              << (dir / "sweep.json").string() << '\n';
  } else {
    const BacktestReport report = run_intraday_backtest(
        panel, make_panel_strategy(strat, costs), args.investment, costs,
        args.bounds_fraction, options);
    nlohmann::json doc;
    doc["provenance"] = prov.json();
    doc["report"] = nlohmann::json::parse(backtest_to_json(report));
    write_text(dir / "report.json", doc.dump(2) + "\n");
    write_daily_pnl_csv(dir / "daily_pnl.csv", report, prov.comments());
    std::cout << (dir / "report.json").string() << '\n'
              << (dir / "daily_pnl.csv").string() << '\n';
  }
  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  std::cerr << "elapsed " << elapsed << " s\n";  // timing stays off the files
  return 0;
}

// --- density --------------------------------------------------------------

struct DensityArgs {
  PanelSource source;
  std::string config_path;
  int window = 21;
  int points = 201;
  double bandwidth = 0.0;
  std::string out;
};

int run_density(const DensityArgs& args) {
  const ReturnsPanel panel = load_panel(args.source);
  const VolatilityProfile vol = rolling_volatility(panel, args.window);

  std::vector<double> kept;
  kept.reserve(static_cast<std::size_t>(vol.sigma.size()));
  std::size_t next_excluded = 0;
  for (Eigen::Index i = 0; i < vol.sigma.size(); ++i) {
    if (next_excluded < vol.excluded.size() &&
        vol.excluded[next_excluded] == i) {
      ++next_excluded;
      continue;
    }
    kept.push_back(vol.sigma[i]);
  }
  if (kept.empty())
    throw std::invalid_argument("no instruments with usable volatility");
  Eigen::VectorXd sigma =
      Eigen::Map<const Eigen::VectorXd>(kept.data(),
                                        static_cast<Eigen::Index>(kept.size()));

  const DensityEstimate linear =
      kernel_density(sigma, args.points, args.bandwidth);
  const DensityEstimate logged =
      kernel_density(sigma.array().log().matrix(), args.points, args.bandwidth);
  for (const auto& w : linear.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& w : logged.warnings) std::cerr << "warning: " << w << '\n';

  std::ostringstream canon;
  canon << "cmd=density|";
  describe_source(canon, args.source);
  canon << "|window=" << args.window << "|points=" << args.points
        << "|bandwidth=" << args.bandwidth;
  const Provenance prov = make_provenance(canon.str(), source_seed(args.source));

  const fs::path dir = prepare_out_dir(args.out);
  write_xy_csv(dir / "sigma_density.csv", linear.x, linear.density,
               prov.comments());
  write_xy_csv(dir / "log_sigma_density.csv", logged.x, logged.density,
               prov.comments());
  std::cout << (dir / "sigma_density.csv").string() << '\n'
            << (dir / "log_sigma_density.csv").string() << '\n';
  return 0;
}

// --- riskmodel ------------------------------------------------------------

struct RiskModelArgs {
  PanelSource source;
  std::string config_path;
  bool remove_market_mode = false;
  int k_override = 0;
  bool truncate_erank = false;
  std::string out;
};

int run_riskmodel(const RiskModelArgs& args) {
  const ReturnsPanel panel = load_panel(args.source);
  StatisticalModelOptions options;
  options.truncate_erank = args.truncate_erank;
  if (args.k_override > 0) options.k_override = args.k_override;
  const StatisticalModel stat =
      build_statistical_model(panel, args.remove_market_mode, options);

  std::ostringstream canon;
  canon << "cmd=riskmodel|";
  describe_source(canon, args.source);
  canon << "|remove_market_mode=" << args.remove_market_mode
        << "|k=" << args.k_override << "|truncate_erank=" << args.truncate_erank;
  const Provenance prov = make_provenance(canon.str(), source_seed(args.source));

  nlohmann::json doc;
  doc["provenance"] = prov.json();
  doc["n"] = stat.n();
  doc["erank"] = stat.erank;
  doc["k"] = stat.k;
  doc["sample_rank"] = stat.sample_rank;
  doc["market_eigenvalue"] = stat.market_eigenvalue;
  doc["market_mode_removed"] = stat.market_mode_removed;
  doc["warnings"] = stat.warnings;

  const fs::path dir = prepare_out_dir(args.out);
  save_factor_model(dir / "factor_model.txt", stat.to_factor_model());
  write_text(dir / "model.json", doc.dump(2) + "\n");
  std::cout << (dir / "factor_model.txt").string() << '\n'
            << (dir / "model.json").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-to-risk portfolio optimization and backtesting"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic panel");
  add_panel_options(synth, synth_args.source);
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--config", synth_args.config_path,
                  "Options file (command-line flags win)");

  OptimizeArgs opt_args;
  CLI::App* optimize =
      app.add_subcommand("optimize", "Run a single-period optimizer");
  add_panel_options(optimize, opt_args.source);
  optimize->add_option("--ratio", opt_args.ratio,
                       "Objective: sharpe, fano, power, exp");
  optimize->add_option("--p", opt_args.p, "Power-ratio exponent");
  optimize->add_option("--xi", opt_args.xi, "Exp-ratio rate");
  optimize->add_flag("--long-only", opt_args.long_only,
                     "Nonnegative weights via the relaxation");
  optimize->add_flag("--remove-market-mode", opt_args.remove_market_mode,
                     "Strip the market mode from the risk model");
  optimize->add_option("--window", opt_args.window,
                       "Moving-average window for expected returns");
  optimize->add_option("--k", opt_args.k_override,
                       "Override the statistical factor count");
  optimize->add_option("--out", opt_args.out, "Output directory")->required();
  optimize->add_option("--config", opt_args.config_path,
                  "Options file (command-line flags win)");

  BacktestArgs bt_args;
  CLI::App* backtest =
      app.add_subcommand("backtest", "Run the intraday protocol");
  add_panel_options(backtest, bt_args.source);
  backtest->add_option("--investment", bt_args.investment,
                       "Gross dollars deployed daily");
  backtest->add_option("--bounds-fraction", bt_args.bounds_fraction,
                       "Per-instrument cap as a fraction of ADDV");
  backtest->add_flag("--sweep", bt_args.sweep,
                     "Backtest every stack depth 1..sweep-max");
  backtest->add_option("--sweep-max", bt_args.sweep_max, "Sweep upper depth");
  backtest->add_option("--n-opt", bt_args.n_opt, "Stack depth (no sweep)");
  backtest->add_option("--b-hat", bt_args.b_hat, "Stack blend coefficient");
  backtest->add_option("--return-window", bt_args.return_window,
                       "Moving-average window for signals");
  backtest->add_option("--risk-window", bt_args.risk_window,
                       "Trailing window for the statistical risk model");
  backtest->add_option("--history-days", bt_args.history_days,
                       "Closed days guaranteed to the strategy (0: derive)");
  backtest->add_option("--addv-window", bt_args.addv_window,
                       "Rolling window for liquidity bounds");
  backtest->add_option("--cost-window", bt_args.cost_window,
                       "Window for cost calibration inputs");
  backtest->add_flag("--dollar-neutral,!--no-dollar-neutral",
                     bt_args.dollar_neutral, "Impose zero net exposure");
  backtest->add_flag("--remove-market-mode", bt_args.remove_market_mode,
                     "Strip the market mode from the risk model");
  backtest->add_flag("--cost-haircut", bt_args.cost_haircut,
                     "Shrink signals by their trading cost first");
  backtest->add_option("--out", bt_args.out, "Output directory")->required();
  backtest->add_option("--config", bt_args.config_path,
                  "Options file (command-line flags win)");

  DensityArgs den_args;
  CLI::App* density =
      app.add_subcommand("density", "Emit volatility density data");
  add_panel_options(density, den_args.source);
  density->add_option("--window", den_args.window, "Volatility window");
  density->add_option("--points", den_args.points, "Grid points");
  density->add_option("--bandwidth", den_args.bandwidth,
                      "Kernel bandwidth (0: rule of thumb)");
  density->add_option("--out", den_args.out, "Output directory")->required();
  density->add_option("--config", den_args.config_path,
                  "Options file (command-line flags win)");

  RiskModelArgs rm_args;
  CLI::App* riskmodel =
      app.add_subcommand("riskmodel", "Fit and save a statistical risk model");
  add_panel_options(riskmodel, rm_args.source);
  riskmodel->add_flag("--remove-market-mode", rm_args.remove_market_mode,
                      "Strip the market mode");
  riskmodel->add_option("--k", rm_args.k_override,
                        "Override the factor count");
  riskmodel->add_flag("--truncate-erank", rm_args.truncate_erank,
                      "Floor the effective rank instead of rounding");
  riskmodel->add_option("--out", rm_args.out, "Output directory")->required();
  riskmodel->add_option("--config", rm_args.config_path,
                  "Options file (command-line flags win)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (!synth_args.config_path.empty())
      apply_config_file(synth, synth_args.config_path);
    if (!opt_args.config_path.empty())
      apply_config_file(optimize, opt_args.config_path);
    if (!bt_args.config_path.empty())
      apply_config_file(backtest, bt_args.config_path);
    if (!den_args.config_path.empty())
      apply_config_file(density, den_args.config_path);
    if (!rm_args.config_path.empty())
      apply_config_file(riskmodel, rm_args.config_path);
    note_overrides(synth, synth_args.source);
    note_overrides(optimize, opt_args.source);
    note_overrides(backtest, bt_args.source);
    note_overrides(density, den_args.source);
    note_overrides(riskmodel, rm_args.source);
    if (*synth) return run_synth(synth_args);
    if (*optimize) return run_optimize(opt_args);
    if (*backtest) return run_backtest(bt_args);
    if (*density) return run_density(den_args);
    if (*riskmodel) return run_riskmodel(rm_args);
    std::cerr << "error: no command selected\n";
    return 1;
  } catch (const LookaheadError& e) {
    std::cerr << "lookahead violation: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const DegenerateError& e) {
    std::cerr << "degenerate problem: " << e.what() << '\n';
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "no convergence: " << e.what() << '\n';
    return 2;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible problem: " << e.what() << '\n';
    return 2;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
