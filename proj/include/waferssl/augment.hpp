#pragma once

#include <cstdint>

#include "waferssl/dataset.hpp"

namespace waferssl {

// Stochastic input perturbations applied independently to the student and
// teacher copies of a record.
struct AugmentPolicy {
    bool rotate_90s = true;      // uniform choice among 0/90/180/270 (0/180 for non-square)
    bool flip = true;            // independent horizontal / vertical coin flips
    double die_noise_rate = 0.0; // per-die pass<->fail flip probability, in [0, 0.3]

    void validate() const;
};

// Rotation, then flips, then die noise, each drawn deterministically from
// seed. Background dies are never modified; the label and dimensions are
// preserved.
WaferMap augment(const WaferMap& wafer, const AugmentPolicy& policy, std::uint64_t seed);

}  // namespace waferssl
