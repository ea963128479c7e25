#pragma once

#include <cstdint>
#include <random>

#include "etsync/types.hpp"

namespace etsync::rng {

// splitmix64 finalizer: cheap, well-mixed hash used to derive independent
// substream seeds from (master seed, entity tag). Toggling event parameters
// must never perturb noise realizations, so every noise source owns its own
// stream keyed by a stable tag.
inline uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t substream_seed(uint64_t master, uint64_t tag) {
    return mix(mix(master) ^ mix(tag + 0x100000001b3ULL));
}

class Stream {
  public:
    explicit Stream(uint64_t seed) : engine_(seed) {}

    Real gaussian() { return normal_(engine_); }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<Real> normal_{0.0L, 1.0L};
};

}  // namespace etsync::rng
