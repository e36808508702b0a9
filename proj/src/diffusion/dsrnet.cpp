#include "spectragen/diffusion/dsrnet.hpp"

#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/ops.hpp"

namespace spectragen::diffusion {

namespace {

DenseArray combine(const DenseArray& a, const DenseArray& b, double sign) {
    if (a.shape() != b.shape()) throw ShapeError("DSRNet residual shape mismatch");
    DenseArray out = a;
    auto o = out.data();
    auto d = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += sign * d[i];
    return out;
}

}  // namespace

DenoiserConfig dsrnet_config(std::size_t base_channels, std::uint64_t seed) {
    DenoiserConfig c;
    c.latent_channels = 12;  // 3 RGB channels folded 2x2
    c.base_channels = base_channels;
    c.slots = {{ConditionTag::lowres, 3}};
    c.preconditioned = true;
    c.sigma_data = 0.02;  // residuals against the bilinear upsample are small
    c.seed = seed;
    return c;
}

DenseArray lowres_condition(const DenseArray& lr_rgb, std::size_t scale) {
    if (lr_rgb.rank() != 3 || lr_rgb.extent(0) != 3) throw ShapeError("DSRNet expects a 3-band image");
    if (scale != 2 && scale != 4) throw ShapeError("DSRNet scale must be 2 or 4");
    return bilinear_resize(lr_rgb, lr_rgb.extent(1) * scale, lr_rgb.extent(2) * scale);
}

std::vector<TrainingExample> dsrnet_examples(const std::vector<DenseArray>& hr_rgb, std::size_t scale,
                                             const LatentCodec& codec) {
    std::vector<TrainingExample> out;
    for (const auto& hr : hr_rgb) {
        auto up = lowres_condition(area_downsample(hr, scale), scale);
        TrainingExample ex{codec.encode(combine(hr, up, -1.0)), {}};
        ex.conditions.add(ConditionTag::lowres, std::move(up));
        out.push_back(std::move(ex));
    }
    return out;
}

DenseArray dsrnet_super_resolve(const DenseArray& lr_rgb, const NoisePredictor& model, const NoiseSchedule& schedule,
                                std::size_t steps, std::uint64_t seed, std::size_t scale, const LatentCodec& codec) {
    ConditionStack conditions;
    auto up = lowres_condition(lr_rgb, scale);
    conditions.add(ConditionTag::lowres, up);
    return combine(up, sample(model, schedule, steps, conditions, codec, up.shape(), seed), 1.0);
}

}  // namespace spectragen::diffusion
