#include "spamm/bench/csv.hpp"

#include <cstdio>

namespace spamm::bench {

std::string format_row(const ErrorRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.17g,%.17g,%.17g,%llu,%.17g,%llu,%llu,%.3f,%llu",
                std::string(to_string(r.method)).c_str(), r.n, r.task_size, r.bs, r.tau,
                r.frob_error, r.max_elem_error, static_cast<unsigned long long>(r.n_gemm), r.flops,
                static_cast<unsigned long long>(r.bytes_sent_total),
                static_cast<unsigned long long>(r.bytes_sent_max), r.wall_ms,
                static_cast<unsigned long long>(r.seed));
  return buf;
}

void write_csv(std::ostream& out, const std::vector<ErrorRow>& rows) {
  out << kCsvHeader << '\n';
  for (const ErrorRow& r : rows) out << format_row(r) << '\n';
}

}  // namespace spamm::bench
