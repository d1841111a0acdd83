#pragma once
// Seed derivation. Every random stream in the project is a pure function of
// one root seed and a path of stream labels.

#include <cstdint>
#include <random>
#include <string_view>

#include "codemix/numerics/tensor.hpp"

namespace codemix {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
std::uint64_t mix_seed(std::uint64_t x);

// Child seed for a labelled stream under a parent seed.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

// Uniform(-r, r) with r = 1/sqrt(fan_in).
Tensor uniform_init(const Shape& shape, std::size_t fan_in, Rng& rng);

// Standard-normal entries. Box-Muller from the raw generator so the values do
// not depend on the standard library's distribution implementation.
double standard_normal(Rng& rng);
double uniform01(Rng& rng);
// Integer in [lo, hi].
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);

}  // namespace codemix
