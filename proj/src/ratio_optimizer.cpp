#include "meanrisk/ratio_optimizer.hpp"

#include "meanrisk/errors.hpp"
#include "meanrisk/market_data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace meanrisk {

namespace {

constexpr double kColinearRelTol = 1e-12;

// E and nu solved through the model once; everything else is scalar algebra.
struct Solved {
  Eigen::VectorXd inv_e;   // C^{-1} E
  Eigen::VectorXd inv_nu;  // C^{-1} nu
  ScalarInvariants s;
};

Solved solve_pair(const RiskModel& model, const Eigen::VectorXd& e) {
  if (e.size() != model.size())
    throw std::invalid_argument("expected returns length does not match model");
  if (!e.allFinite())
    throw std::invalid_argument("expected returns must be finite");
  if (e.norm() == 0.0)
    throw std::invalid_argument("expected returns must not be identically zero");
  Solved out;
  out.inv_e = model.solve(e);
  out.inv_nu = model.solve(Eigen::VectorXd::Ones(model.size()));
  out.s.alpha2 = e.dot(out.inv_e);
  out.s.beta2 = out.inv_nu.sum();
  out.s.gamma = out.inv_e.sum();
  if (!(out.s.alpha2 > 0.0) || !(out.s.beta2 > 0.0))
    throw NumericalError("covariance operator is not positive definite "
                         "(nonpositive quadratic form)");
  if (out.s.gamma * out.s.gamma > out.s.alpha2 * out.s.beta2 * (1.0 + 1e-10))
    throw NumericalError("Cauchy-Schwarz violated; covariance inverse is "
                         "numerically inconsistent");
  return out;
}

// A member of the two-parameter family with the budget built in:
// w = a C^{-1}E + b C^{-1}nu with b chosen so that sum(w) = 1 exactly.
struct Candidate {
  double v_root = 0.0;  // variance root that produced it
  double a = 0.0;
  double b = 0.0;
  Eigen::VectorXd w;
  double e_port = 0.0;
  double v_port = 0.0;
  double objective = -std::numeric_limits<double>::infinity();
  bool valid = false;
};

Candidate make_candidate(const Solved& sp, const Eigen::VectorXd& e,
                         const RatioSpec& spec, double v_root, double a) {
  Candidate c;
  c.v_root = v_root;
  c.a = a;
  c.b = (1.0 - a * sp.s.gamma) / sp.s.beta2;
  c.w = a * sp.inv_e + c.b * sp.inv_nu;
  c.e_port = e.dot(c.w);
  // V = w . C w with C w = a E + b nu, so V = a E_port + b exactly.
  c.v_port = c.a * c.e_port + c.b;
  if (!(c.v_port > 0.0) || !std::isfinite(c.v_port) || !std::isfinite(c.e_port))
    return c;
  const double fv = spec.f(c.v_port);
  if (!(fv > 0.0) || !std::isfinite(fv)) return c;
  c.objective = c.e_port / fv;
  c.valid = true;
  return c;
}

// Implied multiplier of the budget constraint: at a stationary point the
// gradient of G is a constant vector -mu * nu.
double implied_mu(const Eigen::VectorXd& e, const Eigen::VectorXd& cw,
                  double e_port, double v_port, const RatioSpec& spec) {
  const double fv = spec.f(v_port);
  const double fpv = spec.f_prime(v_port);
  const Eigen::VectorXd grad =
      e / fv - (2.0 * e_port * fpv / (fv * fv)) * cw;
  return -grad.mean();
}

OptimizerSolution finish_solution(const Eigen::VectorXd& e,
                                  const RatioSpec& spec, Candidate best,
                                  std::vector<RejectedRoot> rejected) {
  // Polish the budget: rescaling w, a and b together keeps the family
  // identity w = a C^{-1}E + b C^{-1}nu exact while pinning sum(w) = 1.
  const double total = best.w.sum();
  best.w /= total;
  best.a /= total;
  best.b /= total;
  best.e_port = e.dot(best.w);
  best.v_port = best.a * best.e_port + best.b;

  OptimizerSolution out;
  out.weights = std::move(best.w);
  out.a = best.a;
  out.b = best.b;
  out.e_port = best.e_port;
  out.v_port = best.v_port;
  out.sharpe = best.e_port / std::sqrt(best.v_port);
  out.fano = best.e_port / best.v_port;
  out.objective = best.e_port / spec.f(best.v_port);
  out.spec_label = spec.label;
  out.rejected_roots = std::move(rejected);
  const Eigen::VectorXd cw =
      best.a * e + Eigen::VectorXd::Constant(e.size(), best.b);
  out.mu = implied_mu(e, cw, out.e_port, out.v_port, spec);
  return out;
}

// Real roots of A x^2 + B x + C = 0, numerically robust form.  A ~ 0 falls
// back to the linear equation; a negative discriminant yields no roots.
std::vector<double> quadratic_roots(double a, double b, double c) {
  const double scale = std::max({std::abs(a), std::abs(b), std::abs(c)});
  if (scale == 0.0) return {};
  if (std::abs(a) <= 1e-14 * scale) {
    if (b == 0.0) return {};
    return {-c / b};
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return {};
  const double root = std::sqrt(disc);
  const double q = -0.5 * (b + std::copysign(root, b));
  std::vector<double> out;
  out.push_back(q / a);
  if (q != 0.0)
    out.push_back(c / q);
  else
    out.push_back(0.0);  // b == 0 and disc == 0: double root at 0
  return out;
}

// Brent root finder on a bracketing interval [lo, hi] (f(lo)*f(hi) <= 0).
template <typename F>
double brent(F&& f, double lo, double hi, double flo, double fhi,
             double rel_tol) {
  double a = lo, b = hi, fa = flo, fb = fhi;
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  double c = a, fc = fa, d = b - a, e = d;
  for (int iter = 0; iter < 200; ++iter) {
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) +
                       0.5 * rel_tol * std::abs(b);
    const double m = 0.5 * (c - b);
    if (std::abs(m) <= tol || fb == 0.0) return b;
    if (std::abs(e) < tol || std::abs(fa) <= std::abs(fb)) {
      d = m; e = m;  // bisection
    } else {
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        const double r1 = fa / fc, r2 = fb / fc;
        p = s * (2.0 * m * r1 * (r1 - r2) - (b - a) * (r2 - 1.0));
        q = (r1 - 1.0) * (r2 - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q; else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d; d = p / q;  // accept interpolation
      } else {
        d = m; e = m;      // fall back to bisection
      }
    }
    a = b; fa = fb;
    b += std::abs(d) > tol ? d : std::copysign(tol, m);
    fb = f(b);
    if ((fb > 0.0) == (fc > 0.0)) { c = a; fc = fa; e = d = b - a; }
  }
  return b;
}

void validate_number(double v, const char* what) {
  if (!std::isfinite(v))
    throw std::invalid_argument(std::string(what) + " must be finite");
}

}  // namespace

// --- RatioSpec ----------------------------------------------------------

RatioSpec RatioSpec::sharpe() {
  RatioSpec s;
  s.kind = RatioKind::Sharpe;
  s.p = 0.5;
  s.f = [](double v) { return std::sqrt(v); };
  s.f_prime = [](double v) { return 0.5 / std::sqrt(v); };
  s.label = "sharpe";
  return s;
}

RatioSpec RatioSpec::fano() {
  RatioSpec s;
  s.kind = RatioKind::Fano;
  s.p = 1.0;
  s.f = [](double v) { return v; };
  s.f_prime = [](double) { return 1.0; };
  s.label = "fano";
  return s;
}

RatioSpec RatioSpec::power(double p) {
  validate_number(p, "power exponent");
  if (!(p > 0.0))
    throw std::invalid_argument("power exponent must be positive");
  RatioSpec s;
  s.kind = RatioKind::Power;
  s.p = p;
  s.f = [p](double v) { return std::pow(v, p); };
  s.f_prime = [p](double v) { return p * std::pow(v, p - 1.0); };
  std::ostringstream label;
  label << "power(" << p << ")";
  s.label = label.str();
  return s;
}

RatioSpec RatioSpec::exponential(double xi) {
  validate_number(xi, "exponential rate");
  if (!(xi > 0.0))
    throw std::invalid_argument(
        "exponential rate must be positive (f' > 0 required)");
  RatioSpec s;
  s.kind = RatioKind::Exp;
  s.xi = xi;
  s.f = [xi](double v) { return std::exp(xi * v); };
  s.f_prime = [xi](double v) { return xi * std::exp(xi * v); };
  std::ostringstream label;
  label << "exp(" << xi << ")";
  s.label = label.str();
  return s;
}

RatioSpec RatioSpec::custom(std::function<double(double)> f,
                            std::function<double(double)> f_prime,
                            std::string label) {
  if (!f || !f_prime)
    throw std::invalid_argument("custom ratio needs both f and f'");
  RatioSpec s;
  s.kind = RatioKind::Custom;
  s.f = std::move(f);
  s.f_prime = std::move(f_prime);
  s.label = std::move(label);
  return s;
}

void RatioSpec::validate() const {
  if (!f || !f_prime)
    throw std::invalid_argument("ratio spec is missing f or f'");
  // Monotone positive risk measure, probed on a wide log grid.  Overflow to
  // +inf at large V (exp-type growth) is fine; NaN or a nonpositive value
  // is not.
  for (double v = 1e-8; v <= 1e8; v *= 10.0) {
    const double fv = f(v);
    const double fpv = f_prime(v);
    if (!(fv > 0.0)) {
      std::ostringstream msg;
      msg << "f(V) must be positive for V > 0; failed at V=" << v;
      throw std::invalid_argument(msg.str());
    }
    if (!(fpv > 0.0)) {
      std::ostringstream msg;
      msg << "f'(V) must be positive for V > 0; failed at V=" << v;
      throw std::invalid_argument(msg.str());
    }
    if (std::isinf(fv) || std::isinf(fpv)) break;
  }
}

// --- scalar invariants --------------------------------------------------

ScalarInvariants scalar_invariants(const RiskModel& model,
                                   const Eigen::VectorXd& e) {
  return solve_pair(model, e).s;
}

ScalarInvariants scalar_invariants(const RiskModel& model,
                                   const ExpectedReturns& e) {
  return scalar_invariants(model, e.values);
}

// --- closed forms -------------------------------------------------------

OptimizerSolution maximize_sharpe(const RiskModel& model,
                                  const Eigen::VectorXd& e) {
  const Solved sp = solve_pair(model, e);
  if (sp.s.gamma == 0.0)
    throw DegenerateError(
        "gamma = E . C^{-1} nu vanishes: the maximum-Sharpe direction "
        "cannot be normalized to unit budget");
  const RatioSpec spec = RatioSpec::sharpe();
  Candidate c = make_candidate(sp, e, spec, sp.s.alpha2 / (sp.s.gamma * sp.s.gamma),
                               1.0 / sp.s.gamma);
  return finish_solution(e, spec, std::move(c), {});
}

OptimizerSolution maximize_fano(const RiskModel& model,
                                const Eigen::VectorXd& e) {
  const Solved sp = solve_pair(model, e);
  const double alpha = sp.s.alpha();
  const double beta = sp.s.beta();
  const double lam = alpha * beta + sp.s.gamma;
  // Cauchy-Schwarz makes lam >= 0 with equality exactly when E is
  // anti-proportional to the budget direction, so test the boundary with a
  // relative tolerance rather than trusting the sign of rounding noise.
  if (lam <= kColinearRelTol * alpha * beta)
    throw InfeasibleError(
        "alpha beta + gamma vanishes (expected returns anti-proportional to "
        "the budget direction): no positive-expected-return maximizer of the "
        "mean-to-variance ratio exists");
  const RatioSpec spec = RatioSpec::fano();
  Candidate c = make_candidate(sp, e, spec, 2.0 * alpha / (beta * lam),
                               1.0 / lam);
  return finish_solution(e, spec, std::move(c), {});
}

// --- general f ----------------------------------------------------------

namespace {

std::vector<double> variance_roots(const Solved& sp, const RatioSpec& spec) {
  const double a2 = sp.s.alpha2, b2 = sp.s.beta2, g = sp.s.gamma;
  const double d = sp.s.discriminant();
  switch (spec.kind) {
    case RatioKind::Power: {
      // f/(2f') = V/(2p) turns the stationarity condition into
      // c^2 V^2 + (2c - g^2 b2 / d) V + (1 + g^2/d) = 0, c = b2 (1/(2p) - 1).
      const double c = b2 * (0.5 / spec.p - 1.0);
      return quadratic_roots(c * c, 2.0 * c - g * g * b2 / d, 1.0 + g * g / d);
    }
    case RatioKind::Exp: {
      // f/(2f') = 1/(2 xi), a constant:
      // b2^2 V^2 - (2k b2 + g^2 b2/d) V + (k^2 + g^2/d) = 0, k = 1 + b2/(2 xi).
      const double k = 1.0 + b2 / (2.0 * spec.xi);
      return quadratic_roots(b2 * b2, -(2.0 * k * b2 + g * g * b2 / d),
                             k * k + g * g / d);
    }
    default: {
      // Bracketed scan of q(V) = lhs - rhs on (1/beta2, cap): geometric
      // grid, then Brent on every sign change.
      auto q = [&](double v) {
        const double lhs = g * g * (v * b2 - 1.0) / d;
        const double t = 1.0 + b2 * (spec.half_ratio(v) - v);
        return lhs - t * t;
      };
      const double v_lo = (1.0 + 1e-9) / b2;
      const double v_cap = 1e6 * v_lo;
      const int grid = 600;
      const double step = std::pow(v_cap / v_lo, 1.0 / grid);
      std::vector<double> roots;
      double v_prev = v_lo;
      double q_prev = q(v_prev);
      const double a2_scale = std::max({std::abs(a2), std::abs(g * g / d), 1.0});
      if (std::abs(q_prev) <= 1e-14 * a2_scale) roots.push_back(v_prev);
      for (int i = 1; i <= grid; ++i) {
        const double v = v_lo * std::pow(step, i);
        const double qv = q(v);
        if (std::abs(qv) <= 1e-14 * a2_scale) {
          roots.push_back(v);
        } else if ((q_prev < 0.0 && qv > 0.0) || (q_prev > 0.0 && qv < 0.0)) {
          roots.push_back(brent(q, v_prev, v, q_prev, qv, 1e-12));
        }
        v_prev = v;
        q_prev = qv;
      }
      return roots;
    }
  }
}

}  // namespace

OptimizerSolution maximize_general(const RiskModel& model,
                                   const Eigen::VectorXd& e,
                                   const RatioSpec& spec) {
  spec.validate();
  if (spec.kind == RatioKind::Sharpe) return maximize_sharpe(model, e);
  if (spec.kind == RatioKind::Fano) return maximize_fano(model, e);

  const Solved sp = solve_pair(model, e);
  const double d = sp.s.discriminant();
  const double lam = sp.s.alpha() * sp.s.beta() + sp.s.gamma;
  if (lam <= kColinearRelTol * sp.s.alpha() * sp.s.beta())
    throw InfeasibleError(
        "alpha beta + gamma vanishes (expected returns anti-proportional to "
        "the budget direction): no positive-expected-return maximizer exists");

  if (d <= kColinearRelTol * sp.s.alpha2 * sp.s.beta2) {
    // E is (numerically) proportional to nu: the expected return is the
    // same for every budget-1 portfolio, so minimize the risk instead.
    Candidate c;
    c.a = 0.0;
    c.b = 1.0 / sp.s.beta2;
    c.w = sp.inv_nu / sp.s.beta2;
    c.e_port = e.dot(c.w);
    c.v_port = 1.0 / sp.s.beta2;
    c.objective = c.e_port / spec.f(c.v_port);
    c.valid = true;
    return finish_solution(e, spec, std::move(c), {});
  }

  const std::vector<double> roots = variance_roots(sp, spec);
  if (roots.empty()) {
    std::ostringstream msg;
    msg << "no admissible variance root for " << spec.label
        << " (alpha2=" << sp.s.alpha2 << ", beta2=" << sp.s.beta2
        << ", gamma=" << sp.s.gamma << "): ";
    msg << (spec.kind == RatioKind::Custom
                ? "no sign change in the scanned bracket"
                : "the quadratic has no real solution");
    throw ConvergenceError(msg.str());
  }

  std::vector<Candidate> candidates;
  std::vector<double> seen;
  for (double v : roots) {
    if (!std::isfinite(v)) continue;
    bool duplicate = false;
    for (double prior : seen)
      if (std::abs(v - prior) <= 1e-12 * std::max(std::abs(prior), 1.0))
        duplicate = true;
    if (duplicate) continue;
    seen.push_back(v);
    const double a2_num = v * sp.s.beta2 - 1.0;
    if (a2_num < -1e-10) continue;  // below the minimum-variance point
    const double a_mag = std::sqrt(std::max(a2_num, 0.0) / d);
    for (double sign : {1.0, -1.0}) {
      Candidate c = make_candidate(sp, e, spec, v, sign * a_mag);
      if (c.valid) candidates.push_back(std::move(c));
      if (a_mag == 0.0) break;  // +0 and -0 are the same candidate
    }
  }
  if (candidates.empty()) {
    std::ostringstream msg;
    msg << "all variance roots for " << spec.label
        << " were inadmissible (need V > 1/beta2 with f(V) > 0)";
    throw ConvergenceError(msg.str());
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].objective > candidates[best].objective) best = i;

  std::vector<RejectedRoot> rejected;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i == best) continue;
    rejected.push_back({candidates[i].v_root, candidates[i].a, candidates[i].b,
                        candidates[i].objective});
  }
  return finish_solution(e, spec, std::move(candidates[best]),
                         std::move(rejected));
}

// --- ExpectedReturns overloads ------------------------------------------

OptimizerSolution maximize_sharpe(const RiskModel& model, const ExpectedReturns& e) {
  return maximize_sharpe(model, e.values);
}
OptimizerSolution maximize_fano(const RiskModel& model, const ExpectedReturns& e) {
  return maximize_fano(model, e.values);
}
OptimizerSolution maximize_general(const RiskModel& model, const ExpectedReturns& e,
                                   const RatioSpec& spec) {
  return maximize_general(model, e.values, spec);
}

// --- evaluation ---------------------------------------------------------

PortfolioStats evaluate_portfolio(const Eigen::VectorXd& weights,
                                  const RiskModel& model,
                                  const Eigen::VectorXd& e) {
  if (weights.size() != model.size() || e.size() != model.size())
    throw std::invalid_argument("weights/returns length does not match model");
  PortfolioStats st;
  st.e = e.dot(weights);
  st.v = weights.dot(model.apply(weights));
  if (!(st.v > 0.0))
    throw DegenerateError("portfolio variance is zero; ratios are undefined");
  st.sharpe = st.e / std::sqrt(st.v);
  st.fano = st.e / st.v;
  st.kappa = 2.0 * st.fano;
  st.bubble = st.kappa < 1.0;
  return st;
}

std::string solution_to_json(const OptimizerSolution& solution, int indent) {
  nlohmann::json j;
  j["spec"] = solution.spec_label;
  j["weights"] = std::vector<double>(solution.weights.data(),
                                     solution.weights.data() + solution.weights.size());
  j["a"] = solution.a;
  j["b"] = solution.b;
  j["expected_return"] = solution.e_port;
  j["variance"] = solution.v_port;
  j["sharpe"] = solution.sharpe;
  j["fano"] = solution.fano;
  j["kappa"] = 2.0 * solution.fano;
  j["mu"] = solution.mu;
  j["objective"] = solution.objective;
  if (!solution.rejected_roots.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : solution.rejected_roots)
      arr.push_back({{"v", r.v}, {"a", r.a}, {"b", r.b}, {"objective", r.objective}});
    j["rejected_roots"] = arr;
  }
  return j.dump(indent);
}

}  // namespace meanrisk
