#include "spectragen/numerics/random.hpp"

#include <cmath>
#include <numbers>

namespace spectragen {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

RandomSource::RandomSource(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(splitmix_finalize(seed ^ splitmix_finalize(stream + kGolden))) {}

std::uint64_t RandomSource::next_u64() {
    return splitmix_finalize(key_ + (++counter_) * kGolden);
}

double RandomSource::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomSource::uniform_index(std::uint64_t n) {
    // Rejection on the top of the range keeps the result unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double RandomSource::gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

DenseArray gaussian_sample(RandomSource& rng, Shape shape) {
    DenseArray out(std::move(shape));
    for (double& v : out.data()) v = rng.gaussian();
    return out;
}

DenseArray uniform_sample(RandomSource& rng, Shape shape, double lo, double hi) {
    DenseArray out(std::move(shape));
    for (double& v : out.data()) v = lo + (hi - lo) * rng.uniform();
    return out;
}

}  // namespace spectragen
