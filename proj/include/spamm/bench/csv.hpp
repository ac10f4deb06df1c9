#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "spamm/multiply.hpp"

namespace spamm::bench {

inline constexpr const char* kCsvHeader =
    "method,n,task_size,bs,tau,frob_error,max_elem_error,n_gemm,flops,bytes_sent_total,"
    "bytes_sent_max,wall_ms,seed";

struct ErrorRow {
  Method method = Method::kExact;
  std::size_t n = 0;
  std::size_t task_size = 0;
  std::size_t bs = 0;
  double tau = 0.0;
  double frob_error = 0.0;
  double max_elem_error = 0.0;
  std::uint64_t n_gemm = 0;
  double flops = 0.0;
  std::uint64_t bytes_sent_total = 0;
  std::uint64_t bytes_sent_max = 0;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;
};

std::string format_row(const ErrorRow& row);
void write_csv(std::ostream& out, const std::vector<ErrorRow>& rows);

}  // namespace spamm::bench
