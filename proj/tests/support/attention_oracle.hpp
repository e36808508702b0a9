#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "spectragen/numerics/ops.hpp"
#include "spectragen/rgan/attention.hpp"

namespace spectragen::testing {

// Explicit per-window attention: every window's token list is enumerated
// directly and the full n x n logit matrix is formed before the softmax.
inline DenseArray dense_branch(const DenseArray& q, const DenseArray& k, const DenseArray& v, const DenseArray& pos,
                        std::size_t c0, std::size_t width_c, rgan::WindowShape win, std::size_t heads) {
    const std::size_t h = q.extent(1), w = q.extent(2), d = width_c / heads, n = win.tokens();
    DenseArray out({width_c, h, w});
    for (std::size_t wy = 0; wy < h / win.height; ++wy)
        for (std::size_t wx = 0; wx < w / win.width; ++wx) {
            std::vector<std::pair<std::size_t, std::size_t>> tok;
            for (std::size_t ty = 0; ty < win.height; ++ty)
                for (std::size_t tx = 0; tx < win.width; ++tx)
                    tok.emplace_back(wy * win.height + ty, wx * win.width + tx);
            for (std::size_t hd = 0; hd < heads; ++hd) {
                std::vector<std::vector<double>> a(n, std::vector<double>(n));
                for (std::size_t i = 0; i < n; ++i) {
                    double z = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < d; ++c) {
                            const std::size_t ch = c0 + hd * d + c;
                            s += q.at(ch, tok[i].first, tok[i].second) * k.at(ch, tok[j].first, tok[j].second);
                        }
                        a[i][j] = std::exp(s / std::sqrt(static_cast<double>(d)) + pos[(hd * n + i) * n + j]);
                        z += a[i][j];
                    }
                    for (std::size_t c = 0; c < d; ++c) {
                        double acc = 0.0;
                        const std::size_t ch = c0 + hd * d + c;
                        for (std::size_t j = 0; j < n; ++j) acc += a[i][j] / z * v.at(ch, tok[j].first, tok[j].second);
                        out.at(hd * d + c, tok[i].first, tok[i].second) = acc;
                    }
                }
            }
        }
    return out;
}

inline std::pair<DenseArray, DenseArray> dense_rca(const DenseArray& z1, const DenseArray& z2, const rgan::RcaWeights& w,
                                            const rgan::AttentionConfig& cfg) {
    const std::size_t c = cfg.channels, half = c / 2;
    const std::size_t pad = (cfg.qkv_kernel - 1) / 2;
    const auto p1 = conv2d(z1, w.qkv_kernel.value(), w.qkv_bias.value(), pad);
    const auto p2 = conv2d(z2, w.qkv_kernel.value(), w.qkv_bias.value(), pad);
    auto chans = [&](const DenseArray& p, std::size_t begin) {
        DenseArray out({c, p.extent(1), p.extent(2)});
        const std::size_t plane = p.extent(1) * p.extent(2);
        for (std::size_t i = 0; i < c * plane; ++i) out[i] = p[begin * plane + i];
        return out;
    };
    const auto q1 = chans(p1, 0), k1 = chans(p1, c), v1 = chans(p1, 2 * c);
    const auto q2 = chans(p2, 0), k2 = chans(p2, c), v2 = chans(p2, 2 * c);
    auto join = [&](const DenseArray& a, const DenseArray& b) {
        DenseArray out({c, a.extent(1), a.extent(2)});
        std::copy(a.storage().begin(), a.storage().end(), out.data().begin());
        std::copy(b.storage().begin(), b.storage().end(), out.data().begin() + a.size());
        return out;
    };
    const auto& ph = w.pos_h.value();
    const auto& pv = w.pos_v.value();
    auto out1 = join(dense_branch(q2, k1, v1, ph, 0, half, cfg.window_h, cfg.heads),
                     dense_branch(q2, k1, v1, pv, half, half, cfg.window_v, cfg.heads));
    auto out2 = join(dense_branch(q1, k2, v2, ph, 0, half, cfg.window_h, cfg.heads),
                     dense_branch(q1, k2, v2, pv, half, half, cfg.window_v, cfg.heads));
    return {out1, out2};
}

}  // namespace spectragen::testing
