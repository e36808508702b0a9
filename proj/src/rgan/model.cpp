#include "spectragen/rgan/model.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "spectragen/hsi/processing.hpp"
#include "spectragen/numerics/checkpoint.hpp"
#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/init.hpp"
#include "spectragen/numerics/ops.hpp"
#include "spectragen/numerics/optimizer.hpp"

namespace spectragen::rgan {

namespace {

nlohmann::json window_json(WindowShape w) { return {w.height, w.width}; }

WindowShape window_from_json(const nlohmann::json& j) {
    return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()};
}

SpecWeights make_spec(ParameterSet& ps, const std::string& prefix, std::size_t c, std::size_t hidden,
                      RandomSource& rng) {
    return {ps.add(prefix + ".fc1_w", xavier_uniform(rng, {hidden, c}, c, hidden)),
            ps.add(prefix + ".fc1_b", DenseArray({hidden})),
            ps.add(prefix + ".fc2_w", xavier_uniform(rng, {c, hidden}, hidden, c)),
            ps.add(prefix + ".fc2_b", DenseArray({c})),
            ps.add(prefix + ".value_w", conv_kernel_init(rng, c, c, 1)),
            ps.add(prefix + ".value_b", DenseArray({c}))};
}

FfdWeights make_ffd(ParameterSet& ps, const std::string& prefix, std::size_t c, std::size_t hidden,
                    RandomSource& rng) {
    return {ps.add(prefix + ".norm_gamma", DenseArray({c}, 1.0)),
            ps.add(prefix + ".norm_beta", DenseArray({c})),
            ps.add(prefix + ".fc1_w", xavier_uniform(rng, {hidden, c}, c, hidden)),
            ps.add(prefix + ".fc1_b", DenseArray({hidden})),
            ps.add(prefix + ".fc2_w", xavier_uniform(rng, {c, hidden}, hidden, c)),
            ps.add(prefix + ".fc2_b", DenseArray({c}))};
}

std::size_t lcm_all(std::initializer_list<std::size_t> values) {
    std::size_t out = 1;
    for (auto v : values) out = std::lcm(out, v);
    return out;
}

std::size_t round_up(std::size_t value, std::size_t multiple) { return (value + multiple - 1) / multiple * multiple; }

// Reflect padding one mirror at a time, so the pad may exceed the extent.
DenseArray pad_to(const DenseArray& in, std::size_t height, std::size_t width) {
    DenseArray out = in;
    while (out.extent(1) < height || out.extent(2) < width) {
        const std::size_t pb = std::min(height - out.extent(1), out.extent(1) - 1);
        const std::size_t pr = std::min(width - out.extent(2), out.extent(2) - 1);
        if (pb == 0 && pr == 0) {
            throw ShapeError("cannot reflect-pad a single-pixel extent");
        }
        out = reflect_pad(out, pb, pr);
    }
    return out;
}

}  // namespace

void RganConfig::validate() const {
    if (bands == 0) throw ShapeError("rgan: bands must be positive");
    if (scale != 2 && scale != 4) throw ShapeError("rgan: scale must be 2 or 4");
    if (layers == 0) throw ShapeError("rgan: at least one guided attention layer is required");
    if (ffd_hidden == 0 || spec_hidden == 0) throw ShapeError("rgan: hidden widths must be positive");
    attention.validate();
}

nlohmann::json RganConfig::to_json() const {
    return {{"bands", bands},
            {"scale", scale},
            {"channels", attention.channels},
            {"heads", attention.heads},
            {"window_h", window_json(attention.window_h)},
            {"window_v", window_json(attention.window_v)},
            {"qkv_kernel", attention.qkv_kernel},
            {"layers", layers},
            {"ffd_hidden", ffd_hidden},
            {"spec_hidden", spec_hidden},
            {"seed", seed}};
}

RganConfig RganConfig::from_json(const nlohmann::json& j) {
    RganConfig c;
    c.bands = j.at("bands").get<std::size_t>();
    c.scale = j.at("scale").get<std::size_t>();
    c.attention.channels = j.at("channels").get<std::size_t>();
    c.attention.heads = j.at("heads").get<std::size_t>();
    c.attention.window_h = window_from_json(j.at("window_h"));
    c.attention.window_v = window_from_json(j.at("window_v"));
    c.attention.qkv_kernel = j.at("qkv_kernel").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.ffd_hidden = j.at("ffd_hidden").get<std::size_t>();
    c.spec_hidden = j.at("spec_hidden").get<std::size_t>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
}

Var spectral_attention(const Var& x, const SpecWeights& w) {
    auto squeezed = spatial_mean(x);
    auto hidden = relu(linear(squeezed, w.fc1_w.var(), w.fc1_b.var()));
    auto gates = sigmoid(linear(hidden, w.fc2_w.var(), w.fc2_b.var()));
    auto values = conv2d(x, w.value_w.var(), w.value_b.var(), 0);
    return scale_channels(values, gates);
}

Var feed_forward(const Var& x, const FfdWeights& w) {
    auto tokens = layer_norm(to_channels_last(x), w.norm_gamma.var(), w.norm_beta.var());
    auto hidden = relu(linear(tokens, w.fc1_w.var(), w.fc1_b.var()));
    return to_channels_first(linear(hidden, w.fc2_w.var(), w.fc2_b.var()));
}

std::pair<Var, Var> gal_forward(const Var& hsi, const Var& rgb, const GalWeights& w, const AttentionConfig& config,
                                const AttentionObserver* observer) {
    auto h = add(hsi, rca_forward(hsi, hsi, config, w.sal_hsi, observer).first);
    auto r = add(rgb, rca_forward(rgb, rgb, config, w.sal_rgb, observer).first);
    auto [to_hsi, to_rgb] = rca_forward(r, h, config, w.cal, observer);
    h = add(h, to_hsi);
    r = add(r, to_rgb);
    h = add(h, spectral_attention(h, w.spec_hsi));
    r = add(r, spectral_attention(r, w.spec_rgb));
    h = add(h, feed_forward(h, w.ffd_hsi));
    r = add(r, feed_forward(r, w.ffd_rgb));
    return {h, r};
}

RganModel::RganModel(RganConfig config) : config_(std::move(config)) {
    config_.validate();
    RandomSource rng(config_.seed, 0x7267616eULL);
    const std::size_t c = config_.attention.channels, b = config_.bands;
    hsi_embed_w_ = params_.add("hsi_embed.w", conv_kernel_init(rng, c, b, 3));
    hsi_embed_b_ = params_.add("hsi_embed.b", DenseArray({c}));
    rgb_embed_w_ = params_.add("rgb_embed.w", conv_kernel_init(rng, c, 3, 3));
    rgb_embed_b_ = params_.add("rgb_embed.b", DenseArray({c}));
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::string p = "gal" + std::to_string(l);
        GalWeights g;
        g.sal_hsi = make_rca_weights(params_, p + ".sal_hsi", config_.attention, rng);
        g.sal_rgb = make_rca_weights(params_, p + ".sal_rgb", config_.attention, rng);
        g.cal = make_rca_weights(params_, p + ".cal", config_.attention, rng);
        g.spec_hsi = make_spec(params_, p + ".spec_hsi", c, config_.spec_hidden, rng);
        g.spec_rgb = make_spec(params_, p + ".spec_rgb", c, config_.spec_hidden, rng);
        g.ffd_hsi = make_ffd(params_, p + ".ffd_hsi", c, config_.ffd_hidden, rng);
        g.ffd_rgb = make_ffd(params_, p + ".ffd_rgb", c, config_.ffd_hidden, rng);
        layers_.push_back(std::move(g));
    }
    out_w_ = params_.add("out.w", DenseArray({b, c, 3, 3}));
    out_b_ = params_.add("out.b", DenseArray({b}));
}

Var RganModel::forward(const Var& lr, const Var& rgb, const AttentionObserver* observer) const {
    const auto& lv = lr.value();
    const auto& rv = rgb.value();
    if (lv.rank() != 3 || lv.extent(0) != config_.bands) {
        throw ShapeError("rgan: expected LR input with " + std::to_string(config_.bands) + " bands, got " +
                         shape_string(lv.shape()));
    }
    const std::size_t height = lv.extent(1) * config_.scale, width = lv.extent(2) * config_.scale;
    if (rv.shape() != Shape{3, height, width}) {
        throw ShapeError("rgan: expected RGB guide " + shape_string({3, height, width}) + ", got " +
                         shape_string(rv.shape()));
    }
    auto upsampled = bilinear_resize(lr, height, width);
    auto h = conv2d(upsampled, hsi_embed_w_.var(), hsi_embed_b_.var(), 1);
    auto r = conv2d(rgb, rgb_embed_w_.var(), rgb_embed_b_.var(), 1);
    for (const auto& layer : layers_) std::tie(h, r) = gal_forward(h, r, layer, config_.attention, observer);
    return add(upsampled, conv2d(h, out_w_.var(), out_b_.var(), 1));
}

hsi::HsiCube rgan_forward(const hsi::HsiCube& lr_hsi, const hsi::HsiCube& hr_rgb, const RganModel& model) {
    const auto& cfg = model.config();
    const std::size_t s = cfg.scale;
    if (hr_rgb.bands() != 3) throw ShapeError("rgan_forward: guide must have 3 bands");
    if (hr_rgb.height() != lr_hsi.height() * s || hr_rgb.width() != lr_hsi.width() * s) {
        throw ShapeError("rgan_forward: guide extents must be scale x LR extents");
    }
    const auto& a = cfg.attention;
    const std::size_t ly = lcm_all({a.window_h.height, a.window_v.height});
    const std::size_t lx = lcm_all({a.window_h.width, a.window_v.width});
    const std::size_t my = ly / std::gcd(ly, s), mx = lx / std::gcd(lx, s);
    const std::size_t ph = round_up(lr_hsi.height(), my), pw = round_up(lr_hsi.width(), mx);

    NoGradGuard guard;
    Var lr(pad_to(lr_hsi.values(), ph, pw));
    Var rgb(pad_to(hr_rgb.values(), ph * s, pw * s));
    auto out = crop(model.forward(lr, rgb).value(), 0, 0, hr_rgb.height(), hr_rgb.width());
    if (!out.all_finite()) throw NumericalError("rgan_forward: non-finite output");
    for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
    return hsi::HsiCube(lr_hsi.wavelengths(), std::move(out));
}

RganTrainingPair make_training_pair(const hsi::HsiCube& hr, std::size_t scale) {
    auto lr = area_downsample(hr.values(), scale);
    return {hsi::HsiCube(hr.wavelengths(), std::move(lr)), hsi::extract_rgb(hr).cube, hr};
}

double RganTrainConfig::rate_at(std::size_t step) const {
    if (step < warmup_steps) return learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const std::size_t span = steps > warmup_steps ? steps - warmup_steps : 1;
    const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
    return learning_rate * (final_fraction + (1.0 - final_fraction) * cosine);
}

LossTrace train_rgan(RganModel& model, const std::vector<RganTrainingPair>& pairs, const RganTrainConfig& config) {
    if (pairs.empty()) throw DataError("train_rgan: no training pairs");
    Adam adam(model.parameters(), AdamConfig{.learning_rate = config.learning_rate, .beta2 = config.beta2});
    RandomSource rng(config.seed, 0x747261696eULL);
    LossTrace trace;
    trace.losses.reserve(config.steps);
    for (std::size_t step = 0; step < config.steps; ++step) {
        const auto& pair = pairs.size() == 1 ? pairs.front() : pairs[rng.uniform_index(pairs.size())];
        auto prediction = model.forward(Var(pair.lr.values()), Var(pair.hr_rgb.values()));
        auto loss = l1_loss(prediction, Var(pair.target.values()));
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw NumericalError("train_rgan: non-finite loss at step " + std::to_string(step));
        trace.losses.push_back(value);
        backward(loss);
        adam.set_learning_rate(config.rate_at(step));
        adam.step();
    }
    return trace;
}

void save_rgan(const RganModel& model, const std::filesystem::path& path) {
    save_checkpoint(path, "rgan", model.config().to_json(), model.parameters());
}

RganModel load_rgan(const std::filesystem::path& path) {
    const auto data = read_checkpoint(path);
    if (data.kind != "rgan") throw DataError("checkpoint " + path.string() + " holds a '" + data.kind + "' model");
    RganModel model(RganConfig::from_json(data.config));
    load_parameters(data, model.parameters());
    return model;
}

}  // namespace spectragen::rgan
