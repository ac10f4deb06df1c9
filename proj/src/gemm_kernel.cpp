#include "spamm/gemm_kernel.hpp"

#include <cblas.h>

#include <cassert>
#include <mutex>

namespace spamm::kernel {

namespace {

// Block-level parallelism comes from the task engine; BLAS must stay serial.
void force_serial_blas() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t bs, bool overwrite) {
  assert(a.size() == bs * bs && b.size() == bs * bs && c.size() == bs * bs);
  force_serial_blas();
  const auto n = static_cast<blasint>(bs);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, n, n, 1.0, a.data(), n, b.data(), n,
              overwrite ? 0.0 : 1.0, c.data(), n);
}

}  // namespace spamm::kernel
