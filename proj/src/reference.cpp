#include "spamm/reference.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "spamm/error.hpp"

namespace spamm {

DenseMatrix dense_reference_product(const HierMatrix& a, const HierMatrix& b, std::size_t max_n) {
  if (a.n_logical() != b.n_logical()) throw InputError("operands differ in dimension");
  const std::size_t n = a.n_logical();
  if (n > max_n) throw SizeError("dense reference refused: n = " + std::to_string(n));
  const DenseMatrix da = a.to_dense();
  const DenseMatrix db = b.to_dense();
  DenseMatrix c(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = da(i, k);
      if (aik == 0.0) continue;
      auto bk = db.row(k);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

BandedSquare::BandedSquare(const DecayModel& model, std::size_t n)
    : c2_(model.c * model.c),
      alpha_(model.alpha),
      denom_(std::expm1(-2.0 * model.alpha)),
      n_(n),
      w_(std::min(model.cutoff_distance(), n)) {
  model.validate();
  if (model.distance.kind() != Distance::Kind::kBand)
    throw InputError("closed-form reference needs the band distance");
}

double BandedSquare::operator()(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  if (j - i > 2 * w_) return 0.0;
  const std::size_t lo = j > w_ ? j - w_ : 0;
  const std::size_t hi = std::min(n_ - 1, i + w_);
  if (lo > hi) return 0.0;
  auto series = [&](std::size_t len) { return std::expm1(-2.0 * alpha_ * static_cast<double>(len)) / denom_; };
  const double sij = static_cast<double>(i + j);
  double s = 0.0;
  // k <= i: exponent i + j - 2k
  if (lo <= i) {
    const std::size_t b = std::min(i, hi);
    s += std::exp(-alpha_ * (sij - 2.0 * static_cast<double>(b))) * series(b - lo + 1);
  }
  // i < k < j: exponent j - i
  {
    const std::size_t a = std::max(i + 1, lo);
    const std::size_t b = std::min(j == 0 ? 0 : j - 1, hi);
    if (j > i + 1 && a <= b)
      s += std::exp(-alpha_ * static_cast<double>(j - i)) * static_cast<double>(b - a + 1);
  }
  // k >= j, k > i: exponent 2k - i - j
  {
    const std::size_t a = std::max({j, i + 1, lo});
    if (a <= hi)
      s += std::exp(-alpha_ * (2.0 * static_cast<double>(a) - sij)) * series(hi - a + 1);
  }
  return c2_ * s;
}

ErrorMeasure measure_error(const HierMatrix& c, const ReferenceFn& reference) {
  const std::size_t n = c.n_logical();
  const std::size_t t = c.task_size();
  const std::size_t per_side = c.leaves_per_side();
  std::vector<double> buf(t * t);
  ErrorMeasure out;
  double sum_sq = 0.0;
  for (std::size_t lr = 0; lr < per_side; ++lr) {
    for (std::size_t lc = 0; lc < per_side; ++lc) {
      const LeafMatrix* leaf = c.leaf_at(lr, lc);
      if (leaf) leaf->to_dense(buf, t);
      double block_sq = 0.0;
      for (std::size_t i = 0; i < t && lr * t + i < n; ++i) {
        for (std::size_t j = 0; j < t && lc * t + j < n; ++j) {
          const double cv = leaf ? buf[i * t + j] : 0.0;
          const double e = std::abs(reference(lr * t + i, lc * t + j) - cv);
          block_sq += e * e;
          out.max_element = std::max(out.max_element, e);
        }
      }
      sum_sq += block_sq;
    }
  }
  out.frobenius = std::sqrt(sum_sq);
  return out;
}

ErrorMeasure measure_error(const HierMatrix& c, const DenseMatrix& reference) {
  if (reference.size() != c.n_logical()) throw InputError("reference has the wrong dimension");
  return measure_error(c, [&](std::size_t i, std::size_t j) { return reference(i, j); });
}

}  // namespace spamm
