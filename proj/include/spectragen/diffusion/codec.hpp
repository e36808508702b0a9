#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "spectragen/numerics/autograd.hpp"

namespace spectragen::diffusion {

enum class CodecKind { identity, space_to_depth, tiny_ae };

std::string to_string(CodecKind kind);
CodecKind codec_kind_from_string(const std::string& name);

/// Maps images [C, H, W] to latents and back. Stands in for a pretrained VAE.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual CodecKind kind() const = 0;
    virtual Shape latent_shape(const Shape& image_shape) const = 0;
    virtual DenseArray encode(const DenseArray& image) const = 0;
    virtual DenseArray decode(const DenseArray& latent) const = 0;
};

class IdentityCodec final : public LatentCodec {
public:
    CodecKind kind() const override { return CodecKind::identity; }
    Shape latent_shape(const Shape& image_shape) const override { return image_shape; }
    DenseArray encode(const DenseArray& image) const override { return image; }
    DenseArray decode(const DenseArray& latent) const override { return latent; }
};

/// Lossless folding of factor x factor blocks into channels.
class SpaceToDepthCodec final : public LatentCodec {
public:
    explicit SpaceToDepthCodec(std::size_t factor = 2);
    CodecKind kind() const override { return CodecKind::space_to_depth; }
    std::size_t factor() const { return factor_; }
    Shape latent_shape(const Shape& image_shape) const override;
    DenseArray encode(const DenseArray& image) const override;
    DenseArray decode(const DenseArray& latent) const override;

private:
    std::size_t factor_;
};

/**
 * Space-to-depth followed by a learned 1x1 projection to `latent_channels`,
 * decoded by a second 1x1 projection and depth-to-space. Lossy unless
 * latent_channels >= image_channels * factor^2.
 */
class TinyAutoencoder final : public LatentCodec {
public:
    TinyAutoencoder(std::size_t image_channels, std::size_t latent_channels, std::size_t factor = 2,
                    std::uint64_t seed = 0);

    CodecKind kind() const override { return CodecKind::tiny_ae; }
    Shape latent_shape(const Shape& image_shape) const override;
    DenseArray encode(const DenseArray& image) const override;
    DenseArray decode(const DenseArray& latent) const override;

    Var encode(const Var& image) const;
    Var decode(const Var& latent) const;

    std::size_t image_channels() const { return image_channels_; }
    std::size_t latent_channels() const { return latent_channels_; }
    std::size_t factor() const { return factor_; }
    std::vector<Parameter>& parameters() { return params_.all(); }
    const std::vector<Parameter>& parameters() const { return params_.all(); }

private:
    std::size_t image_channels_, latent_channels_, factor_;
    ParameterSet params_;
    Parameter enc_w_, enc_b_, dec_w_, dec_b_;
};

/// Reconstruction MSE per step; returns the loss trace.
std::vector<double> train_autoencoder(TinyAutoencoder& codec, const std::vector<DenseArray>& images,
                                      std::size_t steps, double learning_rate, std::uint64_t seed);

void save_codec(const TinyAutoencoder& codec, const std::filesystem::path& path);
std::unique_ptr<TinyAutoencoder> load_codec(const std::filesystem::path& path);

/// `identity` or `space_to_depth` (factor 2); tiny_ae codecs come from checkpoints.
std::unique_ptr<LatentCodec> make_codec(CodecKind kind, std::size_t factor = 2);

}  // namespace spectragen::diffusion
