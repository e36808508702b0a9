#pragma once

#include <cstddef>
#include <vector>

#include "spectragen/numerics/dense_array.hpp"

namespace spectragen::rgan {

/// Rectangular window extent in pixels.
struct WindowShape {
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t tokens() const { return height * width; }
    friend bool operator==(const WindowShape&, const WindowShape&) = default;
};

/// Feature map cut into non-overlapping windows: `windows` is [n_windows, h*w, C].
struct WindowedFeatures {
    DenseArray windows;
    WindowShape window;
    std::size_t map_height = 0;
    std::size_t map_width = 0;
};

/// Throws ShapeError unless both extents are divisible by the window.
void check_divisible(std::size_t height, std::size_t width, WindowShape window);

/// Pixel offset (y * W + x) of every token, windows row-major, tokens row-major.
std::vector<std::size_t> window_token_pixels(std::size_t height, std::size_t width, WindowShape window);

WindowedFeatures partition_windows(const DenseArray& features, WindowShape window);
DenseArray reverse_windows(const WindowedFeatures& windowed);

}  // namespace spectragen::rgan
