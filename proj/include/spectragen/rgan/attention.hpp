#pragma once

#include <functional>
#include <span>
#include <utility>

#include <string>

#include "spectragen/numerics/autograd.hpp"
#include "spectragen/numerics/random.hpp"
#include "spectragen/rgan/windows.hpp"

namespace spectragen::rgan {

/**
 * Receives every attention matrix computed by `window_attention`:
 * `weights` is the row-major n x n softmax output for one window and head.
 */
using AttentionObserver =
    std::function<void(std::size_t window, std::size_t head, std::span<const double> weights, std::size_t tokens)>;

/**
 * Multi-head attention restricted to non-overlapping windows.
 *
 * For every window and head, tokens attend with
 * softmax(Q K^T / sqrt(d) + P[head]) V, where d = channels / heads. Inputs are
 * [channels, H, W]; `position_bias` is [heads, n, n] with n = window tokens,
 * shared by all windows.
 */
Var window_attention(const Var& query, const Var& key, const Var& value, const Var& position_bias,
                     WindowShape window, std::size_t heads, const AttentionObserver* observer = nullptr);

struct AttentionConfig {
    std::size_t channels = 8;  // C, even
    std::size_t heads = 1;     // C must be divisible by 2 * heads
    WindowShape window_h{2, 8};  // horizontal: width > height
    WindowShape window_v{8, 2};  // vertical: height > width
    std::size_t qkv_kernel = 1;

    std::size_t head_dim() const { return channels / (2 * heads); }
    void validate() const;
};

/// Parameters of one rectangular cross-attention block.
struct RcaWeights {
    Parameter qkv_kernel;  // [3C, C, k, k]
    Parameter qkv_bias;    // [3C]
    Parameter pos_h;       // [heads, n_h, n_h]
    Parameter pos_v;       // [heads, n_v, n_v]
};

RcaWeights make_rca_weights(ParameterSet& params, const std::string& prefix, const AttentionConfig& config,
                            RandomSource& rng);

struct QkvFeatures {
    Var query, key, value;
};

/// One convolution to 3C channels, split into Q, K, V.
QkvFeatures project_qkv(const Var& features, const RcaWeights& weights, const AttentionConfig& config);

/// Splits [C, H, W] into the two channel halves used by the horizontal and vertical branches.
std::pair<Var, Var> spectral_split(const Var& features);

/**
 * Rectangular cross-attention between two feature maps of equal shape.
 *
 * First output: queries from `z2` against keys/values of `z1`; second output
 * the mirror image. Channel half 1 runs in horizontal windows, half 2 in
 * vertical windows, and the halves are concatenated back.
 */
std::pair<Var, Var> rca_forward(const Var& z1, const Var& z2, const AttentionConfig& config,
                                const RcaWeights& weights, const AttentionObserver* observer = nullptr);

}  // namespace spectragen::rgan
