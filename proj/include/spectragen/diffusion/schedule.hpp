#pragma once

#include <cstddef>
#include <vector>

#include "spectragen/numerics/dense_array.hpp"

namespace spectragen::diffusion {

/**
 * Linear-beta variance schedule. Index 0 is the clean state:
 * alpha[0] = alpha_bar[0] = 1, and steps run 1..T.
 */
struct NoiseSchedule {
    std::size_t steps = 0;  // T
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
};

NoiseSchedule make_schedule(std::size_t steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

bool operator==(const NoiseSchedule& a, const NoiseSchedule& b);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
DenseArray forward_noise(const DenseArray& z0, std::size_t t, const DenseArray& eps, const NoiseSchedule& schedule);

/// Deterministic DDIM update from t to t_prev < t using predicted noise.
DenseArray ddim_step(const DenseArray& z_t, const DenseArray& eps_hat, std::size_t t, std::size_t t_prev,
                     const NoiseSchedule& schedule);

/// Evenly spaced timesteps i*T/S for i = 1..S, ascending.
std::vector<std::size_t> timestep_subsequence(std::size_t total_steps, std::size_t count);

}  // namespace spectragen::diffusion
