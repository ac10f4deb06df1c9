#pragma once

#include <cstddef>
#include <span>
#include <utility>

namespace spamm::bench {

struct SlopeFit {
  double slope = 0.0;
  double stderr_slope = 0.0;  // 0 for two points
  double intercept = 0.0;
  std::size_t points = 0;
};

// Ordinary least squares of log10(y) on log10(x). Needs >= 2 points, all positive,
// with at least two distinct x.
SlopeFit fit_loglog_slope(std::span<const std::pair<double, double>> points);

}  // namespace spamm::bench
