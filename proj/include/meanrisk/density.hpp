#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace meanrisk {

/// Plot-ready kernel density estimate: density[j] estimates the probability
/// density of the sample at grid point x[j].
struct DensityEstimate {
  Eigen::VectorXd x;
  Eigen::VectorXd density;
  double bandwidth = 0.0;
  bool degenerate = false;  // sample had no spread; bandwidth was imposed
  std::vector<std::string> warnings;
};

/**
 * @brief Gaussian kernel density estimate over an even grid.
 *
 * The default bandwidth is Silverman's rule of thumb,
 * 0.9 * min(sd, IQR / 1.34) * n^(-1/5).  A sample with no spread (one
 * point, or all points equal) gets a small imposed bandwidth and a warning
 * instead of an error, so degenerate universes still produce a plottable
 * spike.  The grid spans [min - 3h, max + 3h].
 */
DensityEstimate kernel_density(const Eigen::VectorXd& samples, int points = 201,
                               double bandwidth = 0.0);

}  // namespace meanrisk
