#pragma once

#include <vector>

#include "spectragen/diffusion/codec.hpp"
#include "spectragen/diffusion/denoiser.hpp"
#include "spectragen/diffusion/schedule.hpp"

namespace spectragen::diffusion {

/// Mean squared error between `eps` and the noise predicted for z_t.
Var diffusion_loss(const NoisePredictor& model, const DenseArray& z0, std::size_t t, const DenseArray& eps,
                   const ConditionStack& conditions, const NoiseSchedule& schedule);

struct TrainingExample {
    DenseArray latent;
    ConditionStack conditions;
};

struct DiffusionTrainConfig {
    std::size_t steps = 2000;
    std::size_t batch = 1;  // examples accumulated per update
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

/// Per-step batch losses. Throws NumericalError on a non-finite loss.
std::vector<double> train_diffusion(Denoiser& model, const NoiseSchedule& schedule,
                                    const std::vector<TrainingExample>& examples, const DiffusionTrainConfig& config);

/// Fixed (example, t, eps) draws for comparing the loss before and after training.
struct EvaluationDraw {
    std::size_t example;
    std::size_t t;
    DenseArray eps;
};
std::vector<EvaluationDraw> evaluation_draws(const std::vector<TrainingExample>& examples,
                                             const NoiseSchedule& schedule, std::size_t count, std::uint64_t seed);
double evaluate_loss(const NoisePredictor& model, const NoiseSchedule& schedule,
                     const std::vector<TrainingExample>& examples, const std::vector<EvaluationDraw>& draws);

/**
 * DDIM sampling over `steps` evenly spaced timesteps, starting from
 * z_T ~ N(0, I) drawn from RandomSource(seed); returns the latent.
 */
DenseArray sample_latent(const NoisePredictor& model, const NoiseSchedule& schedule, std::size_t steps,
                         const ConditionStack& conditions, const Shape& latent_shape, std::uint64_t seed);

/// sample_latent followed by codec decoding.
DenseArray sample(const NoisePredictor& model, const NoiseSchedule& schedule, std::size_t steps,
                  const ConditionStack& conditions, const LatentCodec& codec, const Shape& image_shape,
                  std::uint64_t seed);

}  // namespace spectragen::diffusion
