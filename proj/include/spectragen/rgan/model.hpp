#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spectragen/hsi/cube.hpp"
#include "spectragen/numerics/autograd.hpp"
#include "spectragen/rgan/attention.hpp"

namespace spectragen::rgan {

struct RganConfig {
    std::size_t bands = 8;  // HSI bands B
    std::size_t scale = 2;  // 2 or 4
    AttentionConfig attention;
    std::size_t layers = 2;      // guided attention layers
    std::size_t ffd_hidden = 16;
    std::size_t spec_hidden = 4;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static RganConfig from_json(const nlohmann::json& j);
};

struct SpecWeights {
    Parameter fc1_w, fc1_b, fc2_w, fc2_b;  // squeeze MLP producing channel gates
    Parameter value_w, value_b;           // 1x1 projection that the gates scale
};

struct FfdWeights {
    Parameter norm_gamma, norm_beta;
    Parameter fc1_w, fc1_b, fc2_w, fc2_b;
};

/// One guided attention layer: SAL, CAL, SpecAL and FFD for both streams.
struct GalWeights {
    RcaWeights sal_hsi, sal_rgb, cal;
    SpecWeights spec_hsi, spec_rgb;
    FfdWeights ffd_hsi, ffd_rgb;
};

Var spectral_attention(const Var& x, const SpecWeights& w);
Var feed_forward(const Var& x, const FfdWeights& w);

/**
 * SAL -> CAL -> SpecAL -> FFD with a residual around each sub-layer.
 * In CAL the HSI stream queries the RGB stream: its update carries
 * RGB-derived values, and symmetrically for the RGB stream.
 */
std::pair<Var, Var> gal_forward(const Var& hsi, const Var& rgb, const GalWeights& w, const AttentionConfig& config,
                                const AttentionObserver* observer = nullptr);

class RganModel {
public:
    explicit RganModel(RganConfig config);

    const RganConfig& config() const { return config_; }
    std::vector<Parameter>& parameters() { return params_.all(); }
    const std::vector<Parameter>& parameters() const { return params_.all(); }
    const std::vector<GalWeights>& layers() const { return layers_; }

    /**
     * `lr` is [B, h, w]; `rgb` is [3, h*scale, w*scale]; returns the
     * unclamped [B, h*scale, w*scale] prediction. HR extents must be
     * divisible by both window shapes.
     */
    Var forward(const Var& lr, const Var& rgb, const AttentionObserver* observer = nullptr) const;

private:
    RganConfig config_;
    ParameterSet params_;
    Parameter hsi_embed_w_, hsi_embed_b_, rgb_embed_w_, rgb_embed_b_;
    std::vector<GalWeights> layers_;
    Parameter out_w_, out_b_;
};

/**
 * Inference: pads reflectively to window multiples, runs the model, crops
 * and clamps to [0, 1]. `hr_rgb` is a 3-band cube at `scale` times the LR extents.
 */
hsi::HsiCube rgan_forward(const hsi::HsiCube& lr_hsi, const hsi::HsiCube& hr_rgb, const RganModel& model);

struct RganTrainingPair {
    hsi::HsiCube lr;
    hsi::HsiCube hr_rgb;
    hsi::HsiCube target;
};

/// Builds a pair from an HR cube: area-downsampled input, RGB bands of the HR cube as guide.
RganTrainingPair make_training_pair(const hsi::HsiCube& hr, std::size_t scale);

/// Linear warmup to `learning_rate`, then cosine decay to `final_fraction` of it.
struct RganTrainConfig {
    std::size_t steps = 200;
    double learning_rate = 5e-3;
    double beta2 = 0.99;
    std::size_t warmup_steps = 20;
    double final_fraction = 0.3;
    std::uint64_t seed = 0;

    double rate_at(std::size_t step) const;
};

struct LossTrace {
    std::vector<double> losses;
};

/// Minimizes mean absolute error with Adam. Throws NumericalError on a non-finite loss.
LossTrace train_rgan(RganModel& model, const std::vector<RganTrainingPair>& pairs, const RganTrainConfig& config);

void save_rgan(const RganModel& model, const std::filesystem::path& path);
RganModel load_rgan(const std::filesystem::path& path);

}  // namespace spectragen::rgan
