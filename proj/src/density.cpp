#include "meanrisk/density.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace meanrisk {

namespace {

double interquartile_range(std::vector<double> sorted) {
  // Linear-interpolation quantiles on the already-sorted copy.
  auto quantile = [&sorted](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  return quantile(0.75) - quantile(0.25);
}

}  // namespace

DensityEstimate kernel_density(const Eigen::VectorXd& samples, int points,
                               double bandwidth) {
  const Eigen::Index n = samples.size();
  if (n < 1) throw std::invalid_argument("empty sample");
  if (!samples.allFinite())
    throw std::invalid_argument("sample contains non-finite values");
  if (points < 2) throw std::invalid_argument("need at least two grid points");
  if (bandwidth < 0.0 || !std::isfinite(bandwidth))
    throw std::invalid_argument("bandwidth must be finite and >= 0");

  DensityEstimate est;
  if (bandwidth > 0.0) {
    est.bandwidth = bandwidth;
  } else if (n < 2) {
    est.degenerate = true;
  } else {
    const double mean = samples.mean();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = samples[i] - mean;
      acc += d * d;
    }
    const double sd = std::sqrt(acc / static_cast<double>(n - 1));
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = interquartile_range(std::move(sorted));
    double scale = sd;
    if (iqr > 0.0) scale = std::min(scale, iqr / 1.34);
    if (scale > 0.0)
      est.bandwidth =
          0.9 * scale * std::pow(static_cast<double>(n), -0.2);
    else
      est.degenerate = true;
  }
  if (est.degenerate) {
    // No spread to infer a bandwidth from; impose one tied to the sample
    // magnitude so the output is a narrow, integrable spike.
    const double magnitude = samples.cwiseAbs().maxCoeff();
    est.bandwidth = std::max(1e-3 * magnitude, 1e-9);
    est.warnings.push_back(
        "sample has no spread; density is a spike with an imposed bandwidth");
  }

  const double h = est.bandwidth;
  const double lo = samples.minCoeff() - 3.0 * h;
  const double hi = samples.maxCoeff() + 3.0 * h;
  est.x.resize(points);
  est.density.resize(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  const double norm =
      1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * M_PI));
  for (int j = 0; j < points; ++j) {
    const double x = lo + step * j;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = (x - samples[i]) / h;
      acc += std::exp(-0.5 * z * z);
    }
    est.x[j] = x;
    est.density[j] = norm * acc;
  }
  return est;
}

}  // namespace meanrisk
