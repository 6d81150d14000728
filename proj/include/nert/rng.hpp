#pragma once

#include <cstdint>
#include <random>

namespace nert {

using Rng = std::mt19937_64;

/// Tags keeping independent consumers of one user seed on disjoint streams.
enum class Stream : std::uint32_t {
    Field = 1,
    Basis = 2,
    Frame = 3,
    Weights = 4,
    Alpha = 5,
    Sampling = 6,
};

/// Deterministic sub-stream derived from (seed, stream, index).
inline Rng make_rng(std::uint64_t seed, Stream stream = Stream::Field, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

/// Derived 64-bit seed, for APIs that take a seed rather than an engine.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    Rng rng = make_rng(seed, stream, index);
    return rng();
}

}  // namespace nert
