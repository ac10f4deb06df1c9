#include "spamm/bench/slope.hpp"

#include <cmath>
#include <vector>

#include "spamm/error.hpp"

namespace spamm::bench {

SlopeFit fit_loglog_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw InputError("slope fit needs at least two points");
  std::vector<double> xs, ys;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) throw InputError("slope fit needs positive values");
    xs.push_back(std::log10(x));
    ys.push_back(std::log10(y));
  }
  const auto m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw InputError("slope fit needs two distinct x values");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.points = xs.size();
  if (xs.size() > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
      ssr += r * r;
    }
    fit.stderr_slope = std::sqrt(ssr / (m - 2.0) / sxx);
  }
  return fit;
}

}  // namespace spamm::bench
