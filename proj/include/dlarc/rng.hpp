#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dlarc {

using Rng = std::mt19937_64;

/// Mixes a master seed with a stream name into an independent seed.
/// Named streams let one component change its random draws without
/// perturbing any other component.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

inline Rng make_stream(std::uint64_t master, std::string_view stream) {
  return Rng(derive_seed(master, stream));
}

}  // namespace dlarc
