#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "spamm/dense.hpp"
#include "spamm/hier_matrix.hpp"
#include "spamm/leaf_matrix.hpp"

namespace spamm::testing {

// Random square matrix with the given fraction of nonzero bs x bs blocks and
// values uniform in (-1, 1), multiplied by exp(-decay * |i - j|).
inline DenseMatrix random_dense(std::size_t n, std::size_t bs, double block_fill, double decay,
                                std::mt19937_64& rng) {
  DenseMatrix m(n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution keep(block_fill);
  const std::size_t nb = (n + bs - 1) / bs;
  for (std::size_t bi = 0; bi < nb; ++bi)
    for (std::size_t bj = 0; bj < nb; ++bj) {
      if (!keep(rng)) continue;
      for (std::size_t i = bi * bs; i < std::min(n, (bi + 1) * bs); ++i)
        for (std::size_t j = bj * bs; j < std::min(n, (bj + 1) * bs); ++j) {
          const double d = static_cast<double>(i > j ? i - j : j - i);
          m(i, j) = u(rng) * std::exp(-decay * d);
        }
    }
  return m;
}

inline DenseMatrix leaf_dense(const LeafMatrix& leaf) {
  DenseMatrix out(leaf.side());
  leaf.to_dense(out.values(), leaf.side());
  return out;
}

inline LeafMatrix leaf_from(const DenseMatrix& m, std::size_t bs) {
  return LeafMatrix::from_dense(m.values(), m.size(), m.size(), bs);
}

inline double frob_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.values().size(); ++t) {
    const double d = a.values()[t] - b.values()[t];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double frob(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

// Bitwise equality of every element (distinguishes nothing beyond ==, so 0.0 == -0.0).
inline bool same_values(const DenseMatrix& a, const DenseMatrix& b) {
  return a.size() == b.size() && a.values().size() == b.values().size() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

// Flat i-k-j product that skips zero a_ik.
inline DenseMatrix flat_product(const DenseMatrix& a, const DenseMatrix& b) {
  const std::size_t n = a.size();
  DenseMatrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double x = a(i, k);
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c(i, j) += x * b(k, j);
    }
  return c;
}

// Random leaf structure for predictor tests: each base block present with probability p.
inline LeafMatrix random_structure(std::size_t side, std::size_t bs, double p,
                                   std::mt19937_64& rng) {
  std::bernoulli_distribution keep(p);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<LeafMatrix::PlacedBlock> blocks;
  const std::size_t nb = side / bs;
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      if (!keep(rng)) continue;
      std::vector<double> v(bs * bs);
      const double scale = std::pow(10.0, -6.0 * u(rng));
      for (double& x : v) x = scale * u(rng);
      blocks.push_back({i, j, std::move(v)});
    }
  return LeafMatrix::from_blocks(side, bs, std::move(blocks));
}

}  // namespace spamm::testing
