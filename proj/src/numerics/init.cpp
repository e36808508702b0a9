#include "spectragen/numerics/init.hpp"

#include <cmath>

namespace spectragen {

DenseArray xavier_uniform(RandomSource& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_sample(rng, std::move(shape), -bound, bound);
}

DenseArray conv_kernel_init(RandomSource& rng, std::size_t c_out, std::size_t c_in, std::size_t k) {
    return xavier_uniform(rng, {c_out, c_in, k, k}, c_in * k * k, c_out * k * k);
}

}  // namespace spectragen
