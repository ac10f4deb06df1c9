#include "spamm/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "spamm/error.hpp"

namespace spamm {

namespace {

// Stateless 64-bit mix, used to give every (i, j) pair an independent scale.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double pair_scale(std::uint64_t seed, std::size_t i, std::size_t j) {
  const std::uint64_t lo = std::min(i, j);
  const std::uint64_t hi = std::max(i, j);
  const std::uint64_t h = mix64(mix64(seed ^ mix64(lo)) ^ hi);
  return 0.5 + 0.5 * (static_cast<double>(h >> 11) * 0x1.0p-53);
}

}  // namespace

HierMatrix gen_banded_decay(std::size_t n, const DecayModel& model, Geometry geometry,
                            const BandedOptions& options) {
  if (n < 1) throw InputError("matrix dimension must be at least 1");
  model.validate();
  geometry.validate();

  HierMatrix::ElementSource src;
  if (options.randomize) {
    src.value = [&model, seed = options.seed](std::size_t i, std::size_t j) {
      const double v = model.bound(i, j) * pair_scale(seed, i, j);
      return v < model.zero_cutoff ? 0.0 : v;
    };
  } else {
    src.value = [&model](std::size_t i, std::size_t j) { return model.value(i, j); };
  }

  if (model.distance.kind() == Distance::Kind::kBand) {
    const std::size_t w = model.cutoff_distance();
    src.may_be_nonzero = [w](std::size_t r0, std::size_t c0, std::size_t side) {
      std::size_t gap = 0;
      if (c0 > r0 + side - 1) gap = c0 - (r0 + side - 1);
      if (r0 > c0 + side - 1) gap = r0 - (c0 + side - 1);
      return gap <= w;
    };
    if (!options.randomize) {
      const std::size_t t = geometry.task_size;
      src.share_key = [n, t](std::size_t lr, std::size_t lc) -> std::optional<std::int64_t> {
        if ((lr + 1) * t > n || (lc + 1) * t > n) return std::nullopt;
        return static_cast<std::int64_t>(lc) - static_cast<std::int64_t>(lr);
      };
    }
  }
  return HierMatrix::build_from_source(n, geometry, src);
}

LeafMatrix gen_random_blocksparse(std::size_t n, std::size_t bs, double fill, std::uint64_t seed) {
  if (!(fill >= 0.0 && fill <= 1.0)) throw InputError("fill must lie in [0, 1]");
  if (bs == 0 || n % bs != 0) throw InputError("block size must divide n");
  const std::size_t nb = n / bs;
  const auto count = static_cast<std::size_t>(std::llround(fill * static_cast<double>(nb * nb)));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> all(nb * nb);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), count, rng);

  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<LeafMatrix::PlacedBlock> blocks;
  blocks.reserve(count);
  for (std::size_t pos : chosen) {
    std::vector<double> values(bs * bs);
    for (double& v : values) {
      do v = dist(rng);
      while (v == 0.0);
    }
    blocks.push_back({pos / nb, pos % nb, std::move(values)});
  }
  return LeafMatrix::from_blocks(n, bs, std::move(blocks));
}

}  // namespace spamm
