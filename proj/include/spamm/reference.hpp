#pragma once

#include <cstddef>
#include <functional>

#include "spamm/decay_model.hpp"
#include "spamm/dense.hpp"
#include "spamm/hier_matrix.hpp"

namespace spamm {

inline constexpr std::size_t kDenseReferenceLimit = std::size_t{1} << 14;

// Plain dense product of the two matrices, independent of the tree multiply code.
// Throws SizeError when n exceeds max_n.
DenseMatrix dense_reference_product(const HierMatrix& a, const HierMatrix& b,
                                    std::size_t max_n = kDenseReferenceLimit);

// Elements of A*A for the band-distance model matrix A of order n, summed in
// closed form (three geometric series per element).
class BandedSquare {
 public:
  BandedSquare(const DecayModel& model, std::size_t n);
  double operator()(std::size_t i, std::size_t j) const;

 private:
  double c2_;
  double alpha_;
  double denom_;  // expm1(-2 alpha)
  std::size_t n_;
  std::size_t w_;
};

struct ErrorMeasure {
  double frobenius = 0.0;
  double max_element = 0.0;
};

using ReferenceFn = std::function<double(std::size_t, std::size_t)>;

// ||R - C||_F and max |R - C| over all n x n elements, with R given element-wise.
ErrorMeasure measure_error(const HierMatrix& c, const ReferenceFn& reference);
ErrorMeasure measure_error(const HierMatrix& c, const DenseMatrix& reference);

}  // namespace spamm
