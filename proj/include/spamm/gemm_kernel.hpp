#pragma once

#include <cstddef>
#include <span>

namespace spamm::kernel {

// Dense bs x bs base-block product, row-major.
//   overwrite == true :  c  = a * b
//   overwrite == false:  c += a * b
// This is the single "gemm" unit that all multiply paths count.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t bs, bool overwrite);

}  // namespace spamm::kernel
