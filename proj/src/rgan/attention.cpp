#include "spectragen/rgan/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/init.hpp"
#include "spectragen/numerics/ops.hpp"

namespace spectragen::rgan {

namespace {

struct AttentionGeometry {
    std::size_t channels, height, width, tokens, windows, heads, head_dim;
    std::vector<std::size_t> pixels;
};

AttentionGeometry attention_geometry(const DenseArray& q, const DenseArray& k, const DenseArray& v,
                                     const DenseArray& pos, WindowShape window, std::size_t heads) {
    if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
        throw ShapeError("window_attention: Q, K, V must share one [C, H, W] shape");
    }
    AttentionGeometry g{q.extent(0), q.extent(1), q.extent(2), window.tokens(), 0, heads, 0, {}};
    if (heads == 0 || g.channels % heads) throw ShapeError("window_attention: channels not divisible by heads");
    g.head_dim = g.channels / heads;
    g.pixels = window_token_pixels(g.height, g.width, window);
    g.windows = g.pixels.size() / g.tokens;
    if (pos.shape() != Shape{heads, g.tokens, g.tokens}) {
        throw ShapeError("window_attention: position bias must be " + shape_string({heads, g.tokens, g.tokens}) +
                         ", got " + shape_string(pos.shape()));
    }
    return g;
}

// Copies one window into a token-major [n, C] buffer.
void gather(const DenseArray& src, const AttentionGeometry& g, std::size_t win, std::vector<double>& dst) {
    const std::size_t plane = g.height * g.width;
    for (std::size_t t = 0; t < g.tokens; ++t) {
        const std::size_t p = g.pixels[win * g.tokens + t];
        for (std::size_t c = 0; c < g.channels; ++c) dst[t * g.channels + c] = src[c * plane + p];
    }
}

void scatter_add(const std::vector<double>& src, const AttentionGeometry& g, std::size_t win, DenseArray& dst) {
    const std::size_t plane = g.height * g.width;
    for (std::size_t t = 0; t < g.tokens; ++t) {
        const std::size_t p = g.pixels[win * g.tokens + t];
        for (std::size_t c = 0; c < g.channels; ++c) dst[c * plane + p] += src[t * g.channels + c];
    }
}

}  // namespace

Var window_attention(const Var& query, const Var& key, const Var& value, const Var& position_bias,
                     WindowShape window, std::size_t heads, const AttentionObserver* observer) {
    const auto g = attention_geometry(query.value(), key.value(), value.value(), position_bias.value(), window, heads);
    const std::size_t n = g.tokens, ch = g.channels, d = g.head_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    auto weights = std::make_shared<std::vector<double>>(g.windows * heads * n * n);
    DenseArray out(query.shape());
    std::vector<double> q(n * ch), k(n * ch), v(n * ch), o(n * ch);
    const DenseArray& pos = position_bias.value();

    for (std::size_t win = 0; win < g.windows; ++win) {
        gather(query.value(), g, win, q);
        gather(key.value(), g, win, k);
        gather(value.value(), g, win, v);
        std::fill(o.begin(), o.end(), 0.0);
        for (std::size_t h = 0; h < heads; ++h) {
            double* a = weights->data() + (win * heads + h) * n * n;
            const std::size_t c0 = h * d;
            for (std::size_t i = 0; i < n; ++i) {
                double* row = a + i * n;
                double mx = -INFINITY;
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t c = c0; c < c0 + d; ++c) s += q[i * ch + c] * k[j * ch + c];
                    row[j] = s * inv_sqrt_d + pos[(h * n + i) * n + j];
                    mx = std::max(mx, row[j]);
                }
                double total = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    total += row[j];
                }
                for (std::size_t j = 0; j < n; ++j) row[j] /= total;
                for (std::size_t j = 0; j < n; ++j) {
                    const double w = row[j];
                    for (std::size_t c = c0; c < c0 + d; ++c) o[i * ch + c] += w * v[j * ch + c];
                }
            }
            if (observer && *observer) (*observer)(win, h, std::span<const double>(a, n * n), n);
        }
        scatter_add(o, g, win, out);
    }

    return make_result(std::move(out), {query, key, value, position_bias},
                       [g, weights, inv_sqrt_d](Node& self) {
        Node& qn = *self.inputs[0];
        Node& kn = *self.inputs[1];
        Node& vn = *self.inputs[2];
        Node& pn = *self.inputs[3];
        for (Node* nd : {&qn, &kn, &vn, &pn}) {
            if (nd->requires_grad) nd->ensure_grad();
        }
        const std::size_t n = g.tokens, ch = g.channels, d = g.head_dim;
        std::vector<double> q(n * ch), k(n * ch), v(n * ch), go(n * ch);
        std::vector<double> dq(n * ch), dk(n * ch), dv(n * ch), ds(n * n);
        for (std::size_t win = 0; win < g.windows; ++win) {
            gather(qn.value, g, win, q);
            gather(kn.value, g, win, k);
            gather(vn.value, g, win, v);
            gather(self.grad, g, win, go);
            std::fill(dq.begin(), dq.end(), 0.0);
            std::fill(dk.begin(), dk.end(), 0.0);
            std::fill(dv.begin(), dv.end(), 0.0);
            for (std::size_t h = 0; h < g.heads; ++h) {
                const double* a = weights->data() + (win * g.heads + h) * n * n;
                const std::size_t c0 = h * d;
                for (std::size_t i = 0; i < n; ++i) {
                    double row_dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        double da = 0.0;
                        for (std::size_t c = c0; c < c0 + d; ++c) {
                            da += go[i * ch + c] * v[j * ch + c];
                            dv[j * ch + c] += a[i * n + j] * go[i * ch + c];
                        }
                        ds[i * n + j] = da;
                        row_dot += da * a[i * n + j];
                    }
                    for (std::size_t j = 0; j < n; ++j) ds[i * n + j] = a[i * n + j] * (ds[i * n + j] - row_dot);
                }
                if (pn.requires_grad) {
                    double* gp = pn.grad.data().data() + h * n * n;
                    for (std::size_t i = 0; i < n * n; ++i) gp[i] += ds[i];
                }
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double s = ds[i * n + j] * inv_sqrt_d;
                        if (s == 0.0) continue;
                        for (std::size_t c = c0; c < c0 + d; ++c) {
                            dq[i * ch + c] += s * k[j * ch + c];
                            dk[j * ch + c] += s * q[i * ch + c];
                        }
                    }
                }
            }
            if (qn.requires_grad) scatter_add(dq, g, win, qn.grad);
            if (kn.requires_grad) scatter_add(dk, g, win, kn.grad);
            if (vn.requires_grad) scatter_add(dv, g, win, vn.grad);
        }
    });
}

void AttentionConfig::validate() const {
    if (channels == 0 || channels % 2) throw ShapeError("attention channels must be even");
    if (heads == 0 || channels % (2 * heads)) throw ShapeError("attention channels must be divisible by 2*heads");
    if (qkv_kernel % 2 == 0) throw ShapeError("qkv kernel size must be odd");
    if (window_h.height == 0 || window_h.width == 0 || window_v.height == 0 || window_v.width == 0) {
        throw ShapeError("window extents must be positive");
    }
}

RcaWeights make_rca_weights(ParameterSet& params, const std::string& prefix, const AttentionConfig& config,
                            RandomSource& rng) {
    config.validate();
    const std::size_t c = config.channels, k = config.qkv_kernel;
    const std::size_t nh = config.window_h.tokens(), nv = config.window_v.tokens();
    RcaWeights w;
    w.qkv_kernel = params.add(prefix + ".qkv_w", conv_kernel_init(rng, 3 * c, c, k));
    w.qkv_bias = params.add(prefix + ".qkv_b", DenseArray({3 * c}));
    w.pos_h = params.add(prefix + ".pos_h", DenseArray({config.heads, nh, nh}));
    w.pos_v = params.add(prefix + ".pos_v", DenseArray({config.heads, nv, nv}));
    return w;
}

QkvFeatures project_qkv(const Var& features, const RcaWeights& weights, const AttentionConfig& config) {
    const std::size_t c = config.channels;
    if (features.value().rank() != 3 || features.extent(0) != c) {
        throw ShapeError("project_qkv: expected " + std::to_string(c) + " channels, got " +
                         shape_string(features.shape()));
    }
    if (c % 2) throw ShapeError("project_qkv: channel count must be even");
    auto qkv = conv2d(features, weights.qkv_kernel.var(), weights.qkv_bias.var(), (config.qkv_kernel - 1) / 2);
    return {slice_channels(qkv, 0, c), slice_channels(qkv, c, c), slice_channels(qkv, 2 * c, c)};
}

std::pair<Var, Var> spectral_split(const Var& features) {
    const std::size_t c = features.extent(0);
    if (c % 2) throw ShapeError("spectral_split: channel count must be even");
    return {slice_channels(features, 0, c / 2), slice_channels(features, c / 2, c / 2)};
}

std::pair<Var, Var> rca_forward(const Var& z1, const Var& z2, const AttentionConfig& config,
                                const RcaWeights& weights, const AttentionObserver* observer) {
    config.validate();
    if (z1.shape() != z2.shape()) throw ShapeError("rca_forward: inputs must share a shape");
    check_divisible(z1.extent(1), z1.extent(2), config.window_h);
    check_divisible(z1.extent(1), z1.extent(2), config.window_v);

    const auto f1 = project_qkv(z1, weights, config);
    const auto f2 = project_qkv(z2, weights, config);
    const auto [q1h, q1v] = spectral_split(f1.query);
    const auto [k1h, k1v] = spectral_split(f1.key);
    const auto [v1h, v1v] = spectral_split(f1.value);
    const auto [q2h, q2v] = spectral_split(f2.query);
    const auto [k2h, k2v] = spectral_split(f2.key);
    const auto [v2h, v2v] = spectral_split(f2.value);

    const std::size_t heads = config.heads;
    auto out1 = concat_channels({window_attention(q2h, k1h, v1h, weights.pos_h.var(), config.window_h, heads, observer),
                                 window_attention(q2v, k1v, v1v, weights.pos_v.var(), config.window_v, heads, observer)});
    auto out2 = concat_channels({window_attention(q1h, k2h, v2h, weights.pos_h.var(), config.window_h, heads, observer),
                                 window_attention(q1v, k2v, v2v, weights.pos_v.var(), config.window_v, heads, observer)});
    return {out1, out2};
}

}  // namespace spectragen::rgan
