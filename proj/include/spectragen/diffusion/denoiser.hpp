#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "spectragen/diffusion/conditions.hpp"
#include "spectragen/diffusion/schedule.hpp"
#include "spectragen/numerics/autograd.hpp"

namespace spectragen::diffusion {

/// Anything that predicts the noise in z_t.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual Var predict(const Var& z_t, std::size_t t, const ConditionStack& conditions) const = 0;
};

struct ConditionSlot {
    ConditionTag tag;
    std::size_t channels;
};

struct DenoiserConfig {
    std::size_t latent_channels = 4;
    std::size_t base_channels = 16;
    std::size_t time_dim = 16;          // sinusoidal embedding width, even
    std::size_t feature_channels = 8;   // condition feature extractor width
    std::vector<ConditionSlot> slots;   // fixed order of accepted spatial conditions
    std::size_t global_dim = 0;         // 0 disables the global embedding
    // Schedule the model is trained under. With `preconditioned` set the
    // network is read around a clean-signal estimate with data scale
    // `sigma_data`:
    //   x0_hat = c_skip z / sqrt(abar) + c_out F(c_in z / sqrt(abar), t)
    //   eps_hat = (z - sqrt(abar) x0_hat) / sqrt(1 - abar)
    // Otherwise F(z, t) is the noise estimate itself.
    std::size_t schedule_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    bool preconditioned = false;
    double sigma_data = 0.5;
    std::uint64_t seed = 0;

    NoiseSchedule schedule() const;

    void validate() const;
    nlohmann::json to_json() const;
    static DenoiserConfig from_json(const nlohmann::json& j);
};

/// sin/cos features of t at geometrically spaced frequencies.
DenseArray timestep_embedding(std::size_t t, std::size_t dim);

/**
 * Three-level convolutional encoder-decoder with skip connections.
 *
 * Latent extents must be divisible by 4. Each level adds a learned
 * projection of the time embedding as a channel bias. Spatial conditions
 * run through a small convolutional extractor whose per-level outputs pass
 * zero-initialized 1x1 convolutions and are added to the encoder features;
 * the global embedding enters through a zero-initialized linear map added
 * to the time embedding.
 */
class Denoiser final : public NoisePredictor {
public:
    explicit Denoiser(DenoiserConfig config);

    Var predict(const Var& z_t, std::size_t t, const ConditionStack& conditions) const override;

    const DenoiserConfig& config() const { return config_; }
    std::vector<Parameter>& parameters() { return params_.all(); }
    const std::vector<Parameter>& parameters() const { return params_.all(); }
    /// The zero-initialized layers gating every condition path.
    std::vector<Parameter> zero_parameters() const;

private:
    struct Conv {
        Parameter w, b;
    };
    Var conv(const Conv& c, const Var& x, std::size_t padding) const;
    std::vector<Var> condition_features(const ConditionStack& conditions, std::size_t h, std::size_t w) const;

    DenoiserConfig config_;
    NoiseSchedule schedule_;
    ParameterSet params_;
    std::vector<Parameter> time_w_, time_b_;  // per level
    Parameter global_w_;
    Conv enc1_, enc2_, enc3_, mid_, dec2_, dec1_, out_;
    Conv feat1_, feat2_, feat3_;
    std::vector<Conv> zero_;  // per level
};

void save_denoiser(const Denoiser& model, const std::filesystem::path& path, const std::string& kind = "denoiser");
Denoiser load_denoiser(const std::filesystem::path& path, std::string* kind = nullptr);

}  // namespace spectragen::diffusion
