#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace seedbench {

/// Engine used everywhere randomness is consumed. All draws flow from seeds
/// produced by derive_seed / mix_seed, never from global state.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for one experiment-grid cell and purpose. Purpose must be one of
/// "train", "draw", "eval" or "restart-<k>" (see restart_purpose).
/// Fields are hashed length-prefixed, so ("ab","c") and ("a","bc") differ.
std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view dataset,
                          std::string_view method, std::uint64_t n,
                          std::uint64_t rep, std::string_view purpose);

std::string restart_purpose(int k);

/// Child seed of `seed` for a tagged sub-stream (ensemble member, MC sample,
/// restart index, ...).
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag,
                       std::uint64_t index) noexcept;

}  // namespace seedbench
