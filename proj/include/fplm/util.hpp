#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace fplm {

using Rng = std::mt19937_64;

/// SplitMix64 mix of (seed, stream); independent streams for chains and replications.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(derive_seed(seed, stream)); }

/// Runs body(0..count-1) on up to `threads` workers. Each index must write to
/// its own output slot; results do not depend on the thread count.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace fplm
