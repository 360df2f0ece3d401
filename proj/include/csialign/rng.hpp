#ifndef CSIALIGN_RNG_HPP
#define CSIALIGN_RNG_HPP

#include <cstdint>
#include <random>

namespace csialign::detail {

/// Engine keyed by (seed, stream). Streams are independent, so per-sample
/// draws can be generated in any order.
inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace csialign::detail

#endif  // CSIALIGN_RNG_HPP
