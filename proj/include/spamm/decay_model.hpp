#pragma once

#include <cstddef>
#include <functional>

namespace spamm {

// Pseudo-metric on the index set {0, ..., n-1}.
class Distance {
 public:
  enum class Kind { kBand, kRing, kCustom };
  using Fn = std::function<double(std::size_t, std::size_t)>;

  // |i - j|
  static Distance band();
  // min(|i - j|, period - |i - j|); indices taken modulo period.
  static Distance ring(std::size_t period);
  static Distance custom(Fn fn);

  Kind kind() const noexcept { return kind_; }
  std::size_t period() const noexcept { return period_; }
  double operator()(std::size_t i, std::size_t j) const;

 private:
  Kind kind_ = Kind::kBand;
  std::size_t period_ = 0;
  Fn fn_;
};

struct DecayModel {
  double c = 1.0;
  double alpha = 0.005;
  Distance distance = Distance::band();
  double zero_cutoff = 1e-16;

  // Throws InputError on c <= 0, alpha <= 0 or negative cutoff.
  void validate() const;

  // c * exp(-alpha * d(i, j)).
  double bound(std::size_t i, std::size_t j) const;
  // bound() with values below zero_cutoff replaced by 0.
  double value(std::size_t i, std::size_t j) const;
  // Largest distance d with c * exp(-alpha * d) >= zero_cutoff, found by
  // evaluating the formula; SIZE_MAX when the cutoff is 0.
  std::size_t cutoff_distance() const;
};

}  // namespace spamm
