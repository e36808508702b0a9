#pragma once

#include <cstdint>

#include "spectragen/numerics/dense_array.hpp"

namespace spectragen {

/**
 * Counter-based random source.
 *
 * Draw `i` of a stream is a pure function of `(seed, stream, i)`: a SplitMix64
 * finalizer applied to a keyed counter. Any position can therefore be
 * reproduced with `seek`, independent of how work is split over threads.
 */
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t position() const { return counter_; }
    void seek(std::uint64_t position) { counter_ = position; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n); n > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal via Box-Muller; consumes exactly two counters.
    double gaussian();

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

DenseArray gaussian_sample(RandomSource& rng, Shape shape);
DenseArray uniform_sample(RandomSource& rng, Shape shape, double lo, double hi);

}  // namespace spectragen
