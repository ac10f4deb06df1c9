#pragma once

#include <bit>
#include <cstddef>

namespace spamm::detail {

inline bool is_pow2(std::size_t x) noexcept { return std::has_single_bit(x); }

inline std::size_t log2_exact(std::size_t x) noexcept {
  return static_cast<std::size_t>(std::countr_zero(x));
}

}  // namespace spamm::detail
