#include "spectragen/diffusion/training.hpp"

#include <cmath>

#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/ops.hpp"
#include "spectragen/numerics/optimizer.hpp"
#include "spectragen/numerics/random.hpp"

namespace spectragen::diffusion {

Var diffusion_loss(const NoisePredictor& model, const DenseArray& z0, std::size_t t, const DenseArray& eps,
                   const ConditionStack& conditions, const NoiseSchedule& schedule) {
    const auto z_t = forward_noise(z0, t, eps, schedule);
    return mse_loss(model.predict(Var(z_t), t, conditions), Var(eps));
}

std::vector<double> train_diffusion(Denoiser& model, const NoiseSchedule& schedule,
                                    const std::vector<TrainingExample>& examples, const DiffusionTrainConfig& config) {
    if (examples.empty()) throw DataError("train_diffusion: no training examples");
    if (config.batch == 0) throw DataError("train_diffusion: batch must be positive");
    if (!(model.config().schedule() == schedule)) {
        throw DataError("train_diffusion: schedule differs from the one in the model config");
    }
    Adam adam(model.parameters(), AdamConfig{.learning_rate = config.learning_rate});
    RandomSource rng(config.seed, 0x64696666ULL);
    std::vector<double> losses;
    losses.reserve(config.steps);
    for (std::size_t step = 0; step < config.steps; ++step) {
        double total = 0.0;
        for (std::size_t b = 0; b < config.batch; ++b) {
            const auto& ex = examples[rng.uniform_index(examples.size())];
            const std::size_t t = 1 + rng.uniform_index(schedule.steps);
            const auto eps = gaussian_sample(rng, ex.latent.shape());
            auto loss = scale(diffusion_loss(model, ex.latent, t, eps, ex.conditions, schedule),
                              1.0 / static_cast<double>(config.batch));
            total += loss.value().item();
            backward(loss);
        }
        if (!std::isfinite(total)) throw NumericalError("train_diffusion: non-finite loss at step " + std::to_string(step));
        losses.push_back(total);
        adam.step();
    }
    return losses;
}

std::vector<EvaluationDraw> evaluation_draws(const std::vector<TrainingExample>& examples,
                                             const NoiseSchedule& schedule, std::size_t count, std::uint64_t seed) {
    if (examples.empty()) throw DataError("evaluation_draws: no examples");
    RandomSource rng(seed, 0x6576616cULL);
    std::vector<EvaluationDraw> draws;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t e = rng.uniform_index(examples.size());
        const std::size_t t = 1 + rng.uniform_index(schedule.steps);
        draws.push_back({e, t, gaussian_sample(rng, examples[e].latent.shape())});
    }
    return draws;
}

double evaluate_loss(const NoisePredictor& model, const NoiseSchedule& schedule,
                     const std::vector<TrainingExample>& examples, const std::vector<EvaluationDraw>& draws) {
    NoGradGuard guard;
    double total = 0.0;
    for (const auto& d : draws) {
        const auto& ex = examples.at(d.example);
        total += diffusion_loss(model, ex.latent, d.t, d.eps, ex.conditions, schedule).value().item();
    }
    return draws.empty() ? 0.0 : total / static_cast<double>(draws.size());
}

DenseArray sample_latent(const NoisePredictor& model, const NoiseSchedule& schedule, std::size_t steps,
                         const ConditionStack& conditions, const Shape& latent_shape, std::uint64_t seed) {
    const auto seq = timestep_subsequence(schedule.steps, steps);
    RandomSource rng(seed);
    DenseArray z = gaussian_sample(rng, latent_shape);
    NoGradGuard guard;
    for (std::size_t i = seq.size(); i-- > 0;) {
        const std::size_t t = seq[i], t_prev = i > 0 ? seq[i - 1] : 0;
        const auto eps = model.predict(Var(z), t, conditions).value();
        z = ddim_step(z, eps, t, t_prev, schedule);
        if (!z.all_finite()) throw NumericalError("sampling diverged at t = " + std::to_string(t));
    }
    return z;
}

DenseArray sample(const NoisePredictor& model, const NoiseSchedule& schedule, std::size_t steps,
                  const ConditionStack& conditions, const LatentCodec& codec, const Shape& image_shape,
                  std::uint64_t seed) {
    return codec.decode(sample_latent(model, schedule, steps, conditions, codec.latent_shape(image_shape), seed));
}

}  // namespace spectragen::diffusion
