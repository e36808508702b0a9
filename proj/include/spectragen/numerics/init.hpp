#pragma once

#include "spectragen/numerics/dense_array.hpp"
#include "spectragen/numerics/random.hpp"

namespace spectragen {

/// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
DenseArray xavier_uniform(RandomSource& rng, Shape shape, std::size_t fan_in, std::size_t fan_out);

/// Conv kernel [C_out, C_in, k, k] with Xavier scaling.
DenseArray conv_kernel_init(RandomSource& rng, std::size_t c_out, std::size_t c_in, std::size_t k);

}  // namespace spectragen
