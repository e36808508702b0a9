#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "spectragen/diffusion/codec.hpp"
#include "spectragen/diffusion/denoiser.hpp"
#include "spectragen/diffusion/schedule.hpp"
#include "spectragen/hsi/cube.hpp"
#include "spectragen/hsi/processing.hpp"
#include "spectragen/rgan/model.hpp"

namespace spectragen::diffusion {

struct SourceCube {
    std::string id;
    hsi::HsiCube cube;
};

struct AugmentConfig {
    std::size_t scale = 2;
    std::size_t patch_size = 256;
    std::size_t stride = 0;      // 0: half the patch size
    std::size_t sample_steps = 10;
    std::uint64_t seed = 0;
};

struct AugmentedPatch {
    std::string source;
    hsi::PatchOrigin origin;
    hsi::HsiCube cube;
};

struct AugmentResult {
    std::vector<AugmentedPatch> patches;
    nlohmann::json manifest;  // {config, sources, patches: [{index, source, y, x}]}
};

/**
 * Two-stage super-resolution then cropping: the RGB bands of every cube are
 * super-resolved by DSRNet, the full cube follows with RGAN guided by them,
 * and the result is cut into patches. Cube i samples with seed + i.
 */
AugmentResult augment_two_stage(const std::vector<SourceCube>& cubes, const NoisePredictor& dsrnet,
                                const LatentCodec& dsr_codec, const NoiseSchedule& schedule,
                                const rgan::RganModel& rgan_model, const AugmentConfig& config);

}  // namespace spectragen::diffusion
