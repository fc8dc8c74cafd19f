#pragma once

#include <cmath>
#include <cstdint>

#include "desync/model.hpp"

namespace desync::detail {

// Noise draws must be identical between the event engine and the
// fixed-timestep oracle, so the derivation lives here.

inline std::uint64_t noise_rng_init(std::uint64_t run_seed, const NoiseSpec& ns, int rank) {
  return mix_seed(run_seed ^ (ns.seed * 0x9e3779b97f4a7c15ULL), /*stream=*/1,
                  (std::uint64_t)rank);
}

// Multiplicative work factor for one compute phase; mean 1 + intensity.
inline double draw_noise_factor(std::uint64_t& state, const NoiseSpec& ns) {
  if (ns.kind == NoiseKind::None || ns.intensity <= 0) return 1.0;
  double u = (double)(splitmix64(state) >> 11) * 0x1.0p-53;
  switch (ns.kind) {
    case NoiseKind::Uniform: return 1.0 + 2.0 * ns.intensity * u;
    case NoiseKind::Exponential: return 1.0 - ns.intensity * std::log1p(-u);
    default: return 1.0;
  }
}

}  // namespace desync::detail
