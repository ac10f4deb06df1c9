#pragma once

#include <cstddef>
#include <cstdint>

#include "spamm/decay_model.hpp"
#include "spamm/hier_matrix.hpp"
#include "spamm/leaf_matrix.hpp"

namespace spamm {

struct BandedOptions {
  // Scale each element by a factor in [0.5, 1], symmetric in (i, j) and fixed by seed.
  bool randomize = false;
  std::uint64_t seed = 1;
};

// a_ij = c * exp(-alpha * d(i, j)), elements below the cutoff dropped.
// Leaves of a band-distance matrix that are equal by construction share storage.
HierMatrix gen_banded_decay(std::size_t n, const DecayModel& model, Geometry geometry,
                            const BandedOptions& options = {});

// Exactly round(fill * (n/bs)^2) distinct blocks with entries uniform in (-1, 1).
LeafMatrix gen_random_blocksparse(std::size_t n, std::size_t bs, double fill, std::uint64_t seed);

}  // namespace spamm
