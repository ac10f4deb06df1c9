#include "spamm/decay_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spamm/error.hpp"

namespace spamm {

Distance Distance::band() { return Distance{}; }

Distance Distance::ring(std::size_t period) {
  if (period == 0) throw InputError("ring period must be positive");
  Distance d;
  d.kind_ = Kind::kRing;
  d.period_ = period;
  return d;
}

Distance Distance::custom(Fn fn) {
  if (!fn) throw InputError("custom distance needs a callable");
  Distance d;
  d.kind_ = Kind::kCustom;
  d.fn_ = std::move(fn);
  return d;
}

double Distance::operator()(std::size_t i, std::size_t j) const {
  switch (kind_) {
    case Kind::kBand:
      return static_cast<double>(i > j ? i - j : j - i);
    case Kind::kRing: {
      const std::size_t a = i % period_;
      const std::size_t b = j % period_;
      const std::size_t d = a > b ? a - b : b - a;
      return static_cast<double>(std::min(d, period_ - d));
    }
    case Kind::kCustom:
      return fn_(i, j);
  }
  return 0.0;
}

void DecayModel::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw InputError("decay prefactor c must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("decay rate alpha must be positive");
  if (!(zero_cutoff >= 0.0)) throw InputError("zero cutoff must be nonnegative");
}

double DecayModel::bound(std::size_t i, std::size_t j) const {
  return c * std::exp(-alpha * distance(i, j));
}

double DecayModel::value(std::size_t i, std::size_t j) const {
  const double v = bound(i, j);
  return v < zero_cutoff ? 0.0 : v;
}

std::size_t DecayModel::cutoff_distance() const {
  if (zero_cutoff <= 0.0) return std::numeric_limits<std::size_t>::max();
  if (c < zero_cutoff) throw InputError("zero cutoff removes every element");
  auto kept = [&](std::size_t d) { return c * std::exp(-alpha * static_cast<double>(d)) >= zero_cutoff; };
  const double guess = std::floor(std::log(c / zero_cutoff) / alpha);
  std::size_t d = guess > 0.0 ? static_cast<std::size_t>(guess) : 0;
  while (d > 0 && !kept(d)) --d;
  while (kept(d + 1)) ++d;
  return d;
}

}  // namespace spamm
