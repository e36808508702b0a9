#include "spectragen/diffusion/augment.hpp"

#include <algorithm>

#include "spectragen/diffusion/dsrnet.hpp"
#include "spectragen/numerics/error.hpp"

namespace spectragen::diffusion {

AugmentResult augment_two_stage(const std::vector<SourceCube>& cubes, const NoisePredictor& dsrnet,
                                const LatentCodec& dsr_codec, const NoiseSchedule& schedule,
                                const rgan::RganModel& rgan_model, const AugmentConfig& config) {
    if (cubes.empty()) throw DataError("augment: no input cubes");
    if (rgan_model.config().scale != config.scale) {
        throw DataError("augment: RGAN model was built for scale " + std::to_string(rgan_model.config().scale) +
                        ", requested " + std::to_string(config.scale));
    }
    const std::size_t stride = config.stride == 0 ? config.patch_size / 2 : config.stride;

    AugmentResult result;
    result.manifest["config"] = {{"scale", config.scale},
                                 {"patch_size", config.patch_size},
                                 {"stride", stride},
                                 {"sample_steps", config.sample_steps},
                                 {"seed", config.seed}};
    result.manifest["sources"] = nlohmann::json::array();
    result.manifest["patches"] = nlohmann::json::array();

    for (std::size_t i = 0; i < cubes.size(); ++i) {
        const auto& src = cubes[i];
        if (src.cube.bands() != rgan_model.config().bands) {
            throw DataError("augment: cube '" + src.id + "' has " + std::to_string(src.cube.bands()) +
                            " bands, RGAN model expects " + std::to_string(rgan_model.config().bands));
        }
        const auto rgb = hsi::extract_rgb(src.cube);
        auto hr_rgb = dsrnet_super_resolve(rgb.cube.values(), dsrnet, schedule, config.sample_steps, config.seed + i,
                                           config.scale, dsr_codec);
        for (double& v : hr_rgb.data()) v = std::clamp(v, 0.0, 1.0);
        const hsi::HsiCube guide(rgb.cube.wavelengths(), std::move(hr_rgb));
        const auto hr = rgan::rgan_forward(src.cube, guide, rgan_model);
        auto set = hsi::crop_patches(hr, config.patch_size, stride);

        result.manifest["sources"].push_back({{"id", src.id},
                                              {"height", src.cube.height()},
                                              {"width", src.cube.width()},
                                              {"bands", src.cube.bands()},
                                              {"sr_height", hr.height()},
                                              {"sr_width", hr.width()},
                                              {"rgb_bands", rgb.source_bands},
                                              {"seed", config.seed + i},
                                              {"patches", set.patches.size()}});
        for (std::size_t p = 0; p < set.patches.size(); ++p) {
            const auto origin = set.grid.origins[p];
            result.manifest["patches"].push_back({{"index", result.patches.size()},
                                                  {"source", src.id},
                                                  {"y", origin.y},
                                                  {"x", origin.x}});
            result.patches.push_back({src.id, origin, std::move(set.patches[p])});
        }
    }
    return result;
}

}  // namespace spectragen::diffusion
