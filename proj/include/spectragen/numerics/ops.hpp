#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "spectragen/numerics/autograd.hpp"
#include "spectragen/numerics/dense_array.hpp"

namespace spectragen {

// ---------------------------------------------------------------------------
// Plain array kernels. Images are [C, H, W].
// ---------------------------------------------------------------------------

/// Cross-correlation (no kernel flip). `padding` is 0 or (k-1)/2, zero fill.
DenseArray conv2d(const DenseArray& input, const DenseArray& kernel, std::size_t padding);
DenseArray conv2d(const DenseArray& input, const DenseArray& kernel, const DenseArray& bias,
                  std::size_t padding);

/// Affine map over the last axis: weight is [D_out, D_in], bias [D_out].
DenseArray linear(const DenseArray& input, const DenseArray& weight, const DenseArray& bias);

/// Max-subtracted softmax along `axis`.
DenseArray softmax(const DenseArray& input, std::size_t axis);

/// Half-pixel-centred bilinear resampling with edge clamping.
DenseArray bilinear_resize(const DenseArray& input, std::size_t out_h, std::size_t out_w);

/// Mean over non-overlapping factor x factor blocks; extents must divide.
DenseArray area_downsample(const DenseArray& input, std::size_t factor);

/// Mirror padding without edge repetition (0 1 2 | 1 0 style).
DenseArray reflect_pad(const DenseArray& input, std::size_t bottom, std::size_t right);
DenseArray crop(const DenseArray& input, std::size_t y0, std::size_t x0, std::size_t h,
                std::size_t w);

// ---------------------------------------------------------------------------
// Differentiable ops on graph variables.
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);
Var mean(const Var& a);
Var mse_loss(const Var& prediction, const Var& target);
Var l1_loss(const Var& prediction, const Var& target);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var silu(const Var& a);  // x * sigmoid(x)
Var softmax(const Var& a, std::size_t axis);

Var linear(const Var& input, const Var& weight, const std::optional<Var>& bias);
/// Normalizes over the last axis with learnable scale and shift.
Var layer_norm(const Var& input, const Var& gamma, const Var& beta, double eps = 1e-5);

Var conv2d(const Var& input, const Var& kernel, const std::optional<Var>& bias, std::size_t padding);
Var bilinear_resize(const Var& input, std::size_t out_h, std::size_t out_w);
Var area_downsample(const Var& input, std::size_t factor);

Var reshape(const Var& a, Shape shape);
Var slice_channels(const Var& a, std::size_t begin, std::size_t count);
Var concat_channels(const std::vector<Var>& parts);
Var to_channels_last(const Var& a);   // [C,H,W] -> [H,W,C]
Var to_channels_first(const Var& a);  // [H,W,C] -> [C,H,W]

Var spatial_mean(const Var& a);                     // [C,H,W] -> [C]
Var scale_channels(const Var& a, const Var& gains);  // [C,H,W] * [C]
Var add_channel_bias(const Var& a, const Var& bias); // [C,H,W] + [C]

Var space_to_depth(const Var& a, std::size_t factor);  // [C,H,W] -> [C*f*f, H/f, W/f]
Var depth_to_space(const Var& a, std::size_t factor);
DenseArray space_to_depth(const DenseArray& a, std::size_t factor);
DenseArray depth_to_space(const DenseArray& a, std::size_t factor);

}  // namespace spectragen
