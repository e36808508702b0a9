#include "spectragen/diffusion/denoiser.hpp"

#include <cmath>

#include "spectragen/numerics/checkpoint.hpp"
#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/init.hpp"
#include "spectragen/numerics/ops.hpp"

namespace spectragen::diffusion {

void DenoiserConfig::validate() const {
    if (latent_channels == 0 || base_channels == 0 || feature_channels == 0) {
        throw ShapeError("denoiser channel counts must be positive");
    }
    if (!(sigma_data > 0.0)) throw ShapeError("sigma_data must be positive");
    if (time_dim == 0 || time_dim % 2) throw ShapeError("time embedding width must be a positive even number");
    if (slots.size() > ConditionStack::kMaxMaps) throw ShapeError("at most 6 condition slots are supported");
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].channels == 0) throw ShapeError("condition slot '" + to_string(slots[i].tag) + "' has no channels");
        for (std::size_t j = 0; j < i; ++j)
            if (slots[j].tag == slots[i].tag) throw ShapeError("duplicate condition slot '" + to_string(slots[i].tag) + "'");
    }
}

nlohmann::json DenoiserConfig::to_json() const {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& slot : slots) s.push_back({{"tag", to_string(slot.tag)}, {"channels", slot.channels}});
    return {{"latent_channels", latent_channels}, {"base_channels", base_channels}, {"time_dim", time_dim},
            {"feature_channels", feature_channels}, {"slots", s}, {"global_dim", global_dim},
            {"schedule", {{"steps", schedule_steps}, {"beta_start", beta_start}, {"beta_end", beta_end}}},
            {"preconditioned", preconditioned}, {"sigma_data", sigma_data},
            {"seed", seed}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.latent_channels = j.at("latent_channels").get<std::size_t>();
    c.base_channels = j.at("base_channels").get<std::size_t>();
    c.time_dim = j.at("time_dim").get<std::size_t>();
    c.feature_channels = j.at("feature_channels").get<std::size_t>();
    for (const auto& s : j.at("slots")) {
        c.slots.push_back({condition_tag_from_string(s.at("tag").get<std::string>()), s.at("channels").get<std::size_t>()});
    }
    c.global_dim = j.value("global_dim", std::size_t{0});
    if (j.contains("schedule")) {
        const auto& sch = j.at("schedule");
        c.schedule_steps = sch.at("steps").get<std::size_t>();
        c.beta_start = sch.at("beta_start").get<double>();
        c.beta_end = sch.at("beta_end").get<double>();
    }
    c.preconditioned = j.value("preconditioned", false);
    c.sigma_data = j.value("sigma_data", 0.5);
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
}

NoiseSchedule DenoiserConfig::schedule() const { return make_schedule(schedule_steps, beta_start, beta_end); }

DenseArray timestep_embedding(std::size_t t, std::size_t dim) {
    DenseArray out({dim});
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
        out[2 * k] = std::sin(static_cast<double>(t) * freq);
        out[2 * k + 1] = std::cos(static_cast<double>(t) * freq);
    }
    return out;
}

Denoiser::Denoiser(DenoiserConfig config) : config_(std::move(config)) {
    config_.validate();
    schedule_ = config_.schedule();
    RandomSource rng(config_.seed, 0x64656eULL);
    const std::size_t c1 = config_.base_channels, c2 = 2 * c1, c3 = 2 * c1, e = config_.time_dim;
    const std::size_t lc = config_.latent_channels, f = config_.feature_channels;
    const std::size_t level_channels[3] = {c1, c2, c3};

    auto make_conv = [&](const std::string& name, std::size_t co, std::size_t ci, std::size_t k, bool zero) {
        return Conv{params_.add(name + ".w", zero ? DenseArray({co, ci, k, k}) : conv_kernel_init(rng, co, ci, k)),
                    params_.add(name + ".b", DenseArray({co}))};
    };
    for (std::size_t l = 0; l < 3; ++l) {
        const std::size_t c = level_channels[l];
        time_w_.push_back(params_.add("time" + std::to_string(l) + ".w", xavier_uniform(rng, {c, e}, e, c)));
        time_b_.push_back(params_.add("time" + std::to_string(l) + ".b", DenseArray({c})));
    }
    if (config_.global_dim > 0) global_w_ = params_.add("global.w", DenseArray({e, config_.global_dim}));
    enc1_ = make_conv("enc1", c1, lc, 3, false);
    enc2_ = make_conv("enc2", c2, c1, 3, false);
    enc3_ = make_conv("enc3", c3, c2, 3, false);
    mid_ = make_conv("mid", c3, c3, 3, false);
    dec2_ = make_conv("dec2", c2, c3 + c2, 3, false);
    dec1_ = make_conv("dec1", c1, c2 + c1, 3, false);
    out_ = make_conv("out", lc, c1, 3, false);
    if (!config_.slots.empty()) {
        std::size_t cond_channels = 0;
        for (const auto& s : config_.slots) cond_channels += s.channels;
        feat1_ = make_conv("cond.feat1", f, cond_channels, 3, false);
        feat2_ = make_conv("cond.feat2", f, f, 3, false);
        feat3_ = make_conv("cond.feat3", f, f, 3, false);
        for (std::size_t l = 0; l < 3; ++l) {
            zero_.push_back(make_conv("cond.zero" + std::to_string(l), level_channels[l], f, 1, true));
        }
    }
}

std::vector<Parameter> Denoiser::zero_parameters() const {
    std::vector<Parameter> out;
    for (const auto& z : zero_) {
        out.push_back(z.w);
        out.push_back(z.b);
    }
    if (config_.global_dim > 0) out.push_back(global_w_);
    return out;
}

Var Denoiser::conv(const Conv& c, const Var& x, std::size_t padding) const {
    return conv2d(x, c.w.var(), c.b.var(), padding);
}

std::vector<Var> Denoiser::condition_features(const ConditionStack& conditions, std::size_t h, std::size_t w) const {
    if (conditions.maps().empty()) return {};
    for (const auto& m : conditions.maps()) {
        bool accepted = false;
        for (const auto& s : config_.slots) {
            if (s.tag != m.tag) continue;
            accepted = true;
            if (m.values.extent(0) != s.channels) {
                throw DataError("condition '" + to_string(m.tag) + "' has " + std::to_string(m.values.extent(0)) +
                                " channels, model expects " + std::to_string(s.channels));
            }
        }
        if (!accepted) throw DataError("condition '" + to_string(m.tag) + "' is not accepted by this model");
    }
    std::vector<Var> parts;
    for (const auto& s : config_.slots) {
        const auto* m = conditions.find(s.tag);
        if (!m) {
            parts.emplace_back(DenseArray({s.channels, h, w}));
        } else if (m->values.extent(1) == h && m->values.extent(2) == w) {
            parts.emplace_back(m->values);
        } else {
            parts.emplace_back(bilinear_resize(m->values, h, w));
        }
    }
    auto x = parts.size() == 1 ? parts.front() : concat_channels(parts);
    auto f1 = silu(conv(feat1_, x, 1));
    auto f2 = silu(conv(feat2_, area_downsample(f1, 2), 1));
    auto f3 = silu(conv(feat3_, area_downsample(f2, 2), 1));
    return {conv(zero_[0], f1, 0), conv(zero_[1], f2, 0), conv(zero_[2], f3, 0)};
}

Var Denoiser::predict(const Var& z_t, std::size_t t, const ConditionStack& conditions) const {
    const auto& zs = z_t.shape();
    if (zs.size() != 3 || zs[0] != config_.latent_channels) {
        throw ShapeError("denoiser expects a latent with " + std::to_string(config_.latent_channels) +
                         " channels, got " + shape_string(zs));
    }
    const std::size_t h = zs[1], w = zs[2];
    if (t == 0 || t > schedule_.steps) throw ShapeError("timestep " + std::to_string(t) + " beyond the model's schedule");
    if (h % 4 || w % 4 || h == 0 || w == 0) throw ShapeError("denoiser latent extents must be divisible by 4");

    Var emb(timestep_embedding(t, config_.time_dim));
    if (const auto& g = conditions.global()) {
        if (config_.global_dim == 0) throw DataError("this model takes no global embedding");
        if (g->size() != config_.global_dim) {
            throw DataError("global embedding has " + std::to_string(g->size()) + " values, model expects " +
                            std::to_string(config_.global_dim));
        }
        emb = add(emb, linear(Var(DenseArray({g->size()}, *g)), global_w_.var(), std::nullopt));
    }
    std::vector<Var> tb;
    for (std::size_t l = 0; l < 3; ++l) tb.push_back(linear(emb, time_w_[l].var(), time_b_[l].var()));
    const auto cond = condition_features(conditions, h, w);

    const double ab = schedule_.alpha_bar[t], sd = config_.sigma_data;
    const double se2 = (1.0 - ab) / ab, q = se2 + sd * sd;
    const double c_skip = sd * sd / q, c_out = std::sqrt(se2) * sd / std::sqrt(q), c_in = 1.0 / std::sqrt(q);
    const bool pre = config_.preconditioned;
    auto e1 = silu(add_channel_bias(conv(enc1_, pre ? scale(z_t, c_in / std::sqrt(ab)) : z_t, 1), tb[0]));
    if (!cond.empty()) e1 = add(e1, cond[0]);
    auto e2 = silu(add_channel_bias(conv(enc2_, area_downsample(e1, 2), 1), tb[1]));
    if (!cond.empty()) e2 = add(e2, cond[1]);
    auto e3 = silu(add_channel_bias(conv(enc3_, area_downsample(e2, 2), 1), tb[2]));
    if (!cond.empty()) e3 = add(e3, cond[2]);
    auto m = silu(add_channel_bias(conv(mid_, e3, 1), tb[2]));
    auto d2 = silu(add_channel_bias(conv(dec2_, concat_channels({bilinear_resize(m, h / 2, w / 2), e2}), 1), tb[1]));
    auto d1 = silu(add_channel_bias(conv(dec1_, concat_channels({bilinear_resize(d2, h, w), e1}), 1), tb[0]));
    if (!pre) return conv(out_, d1, 1);
    const auto x0 = add(scale(z_t, c_skip / std::sqrt(ab)), scale(conv(out_, d1, 1), c_out));
    return scale(sub(z_t, scale(x0, std::sqrt(ab))), 1.0 / std::sqrt(1.0 - ab));
}

void save_denoiser(const Denoiser& model, const std::filesystem::path& path, const std::string& kind) {
    save_checkpoint(path, kind, model.config().to_json(), model.parameters());
}

Denoiser load_denoiser(const std::filesystem::path& path, std::string* kind) {
    const auto data = read_checkpoint(path);
    if (data.kind != "denoiser" && data.kind != "dsrnet") {
        throw DataError(path.string() + " holds a '" + data.kind + "' model, not a denoiser");
    }
    Denoiser model(DenoiserConfig::from_json(data.config));
    load_parameters(data, model.parameters());
    if (kind) *kind = data.kind;
    return model;
}

}  // namespace spectragen::diffusion
