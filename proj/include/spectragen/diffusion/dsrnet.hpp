#pragma once

#include "spectragen/diffusion/codec.hpp"
#include "spectragen/diffusion/denoiser.hpp"
#include "spectragen/diffusion/schedule.hpp"
#include "spectragen/diffusion/training.hpp"

namespace spectragen::diffusion {

/// Denoiser over space-to-depth RGB latents conditioned on a 3-channel `lowres` map.
DenoiserConfig dsrnet_config(std::size_t base_channels = 16, std::uint64_t seed = 0);

/// Bilinear upsampling to scale x extents; the condition handed to DSRNet.
DenseArray lowres_condition(const DenseArray& lr_rgb, std::size_t scale);

/// Builds training examples from HR RGB images [3, H, W] downsampled by `scale`.
/// The latent is the encoded residual against the bilinear upsample.
std::vector<TrainingExample> dsrnet_examples(const std::vector<DenseArray>& hr_rgb, std::size_t scale,
                                             const LatentCodec& codec);

/// Bilinear upsample plus a sampled residual.
DenseArray dsrnet_super_resolve(const DenseArray& lr_rgb, const NoisePredictor& model, const NoiseSchedule& schedule,
                                std::size_t steps, std::uint64_t seed, std::size_t scale, const LatentCodec& codec);

}  // namespace spectragen::diffusion
