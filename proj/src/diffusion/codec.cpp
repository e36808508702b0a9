#include "spectragen/diffusion/codec.hpp"

#include "spectragen/numerics/checkpoint.hpp"
#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/init.hpp"
#include "spectragen/numerics/ops.hpp"
#include "spectragen/numerics/optimizer.hpp"

namespace spectragen::diffusion {

std::string to_string(CodecKind kind) {
    switch (kind) {
    case CodecKind::identity: return "identity";
    case CodecKind::space_to_depth: return "space_to_depth";
    case CodecKind::tiny_ae: return "tiny_ae";
    }
    return "unknown";
}

CodecKind codec_kind_from_string(const std::string& name) {
    if (name == "identity") return CodecKind::identity;
    if (name == "space_to_depth") return CodecKind::space_to_depth;
    if (name == "tiny_ae") return CodecKind::tiny_ae;
    throw DataError("unknown codec '" + name + "' (expected identity, space_to_depth or tiny_ae)");
}

SpaceToDepthCodec::SpaceToDepthCodec(std::size_t factor) : factor_(factor) {
    if (factor == 0) throw ShapeError("space_to_depth factor must be positive");
}

Shape SpaceToDepthCodec::latent_shape(const Shape& s) const {
    if (s.size() != 3 || s[1] % factor_ || s[2] % factor_) {
        throw ShapeError("space_to_depth: image " + shape_string(s) + " not divisible by " + std::to_string(factor_));
    }
    return {s[0] * factor_ * factor_, s[1] / factor_, s[2] / factor_};
}

DenseArray SpaceToDepthCodec::encode(const DenseArray& image) const { return space_to_depth(image, factor_); }
DenseArray SpaceToDepthCodec::decode(const DenseArray& latent) const { return depth_to_space(latent, factor_); }

TinyAutoencoder::TinyAutoencoder(std::size_t image_channels, std::size_t latent_channels, std::size_t factor,
                                 std::uint64_t seed)
    : image_channels_(image_channels), latent_channels_(latent_channels), factor_(factor) {
    if (image_channels == 0 || latent_channels == 0 || factor == 0) {
        throw ShapeError("tiny autoencoder extents must be positive");
    }
    RandomSource rng(seed, 0x6165ULL);
    const std::size_t folded = image_channels * factor * factor;
    enc_w_ = params_.add("encoder.w", conv_kernel_init(rng, latent_channels, folded, 1));
    enc_b_ = params_.add("encoder.b", DenseArray({latent_channels}));
    dec_w_ = params_.add("decoder.w", conv_kernel_init(rng, folded, latent_channels, 1));
    dec_b_ = params_.add("decoder.b", DenseArray({folded}));
}

Shape TinyAutoencoder::latent_shape(const Shape& s) const {
    if (s.size() != 3 || s[0] != image_channels_ || s[1] % factor_ || s[2] % factor_) {
        throw ShapeError("tiny autoencoder: unsupported image shape " + shape_string(s));
    }
    return {latent_channels_, s[1] / factor_, s[2] / factor_};
}

Var TinyAutoencoder::encode(const Var& image) const {
    latent_shape(image.shape());
    return conv2d(space_to_depth(image, factor_), enc_w_.var(), enc_b_.var(), 0);
}

Var TinyAutoencoder::decode(const Var& latent) const {
    if (latent.value().rank() != 3 || latent.extent(0) != latent_channels_) {
        throw ShapeError("tiny autoencoder: unsupported latent shape " + shape_string(latent.shape()));
    }
    return depth_to_space(conv2d(latent, dec_w_.var(), dec_b_.var(), 0), factor_);
}

DenseArray TinyAutoencoder::encode(const DenseArray& image) const {
    NoGradGuard guard;
    return encode(Var(image)).value();
}

DenseArray TinyAutoencoder::decode(const DenseArray& latent) const {
    NoGradGuard guard;
    return decode(Var(latent)).value();
}

std::vector<double> train_autoencoder(TinyAutoencoder& codec, const std::vector<DenseArray>& images,
                                      std::size_t steps, double learning_rate, std::uint64_t seed) {
    if (images.empty()) throw DataError("train_autoencoder: no images");
    Adam adam(codec.parameters(), AdamConfig{.learning_rate = learning_rate});
    RandomSource rng(seed, 0x616574ULL);
    std::vector<double> losses;
    for (std::size_t step = 0; step < steps; ++step) {
        const Var x(images[rng.uniform_index(images.size())]);
        auto loss = mse_loss(codec.decode(codec.encode(x)), x);
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw NumericalError("train_autoencoder: non-finite loss");
        losses.push_back(value);
        backward(loss);
        adam.step();
    }
    return losses;
}

void save_codec(const TinyAutoencoder& codec, const std::filesystem::path& path) {
    nlohmann::json config = {{"image_channels", codec.image_channels()},
                             {"latent_channels", codec.latent_channels()},
                             {"factor", codec.factor()}};
    save_checkpoint(path, "tiny_ae", config, codec.parameters());
}

std::unique_ptr<TinyAutoencoder> load_codec(const std::filesystem::path& path) {
    const auto data = read_checkpoint(path);
    if (data.kind != "tiny_ae") throw DataError(path.string() + " is not a tiny_ae checkpoint");
    auto codec = std::make_unique<TinyAutoencoder>(data.config.at("image_channels").get<std::size_t>(),
                                                   data.config.at("latent_channels").get<std::size_t>(),
                                                   data.config.at("factor").get<std::size_t>());
    load_parameters(data, codec->parameters());
    return codec;
}

std::unique_ptr<LatentCodec> make_codec(CodecKind kind, std::size_t factor) {
    switch (kind) {
    case CodecKind::identity: return std::make_unique<IdentityCodec>();
    case CodecKind::space_to_depth: return std::make_unique<SpaceToDepthCodec>(factor);
    case CodecKind::tiny_ae: break;
    }
    throw DataError("tiny_ae codecs are loaded from a checkpoint");
}

}  // namespace spectragen::diffusion
