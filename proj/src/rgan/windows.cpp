#include "spectragen/rgan/windows.hpp"

#include "spectragen/numerics/error.hpp"

namespace spectragen::rgan {

void check_divisible(std::size_t height, std::size_t width, WindowShape window) {
    if (window.height == 0 || window.width == 0 || height % window.height || width % window.width) {
        throw ShapeError("feature map " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by window " + std::to_string(window.height) + "x" +
                         std::to_string(window.width));
    }
}

std::vector<std::size_t> window_token_pixels(std::size_t height, std::size_t width, WindowShape window) {
    check_divisible(height, width, window);
    std::vector<std::size_t> pixels;
    pixels.reserve(height * width);
    for (std::size_t wy = 0; wy < height / window.height; ++wy) {
        for (std::size_t wx = 0; wx < width / window.width; ++wx) {
            for (std::size_t ty = 0; ty < window.height; ++ty) {
                for (std::size_t tx = 0; tx < window.width; ++tx) {
                    pixels.push_back((wy * window.height + ty) * width + wx * window.width + tx);
                }
            }
        }
    }
    return pixels;
}

WindowedFeatures partition_windows(const DenseArray& features, WindowShape window) {
    if (features.rank() != 3) throw ShapeError("partition_windows expects [C, H, W]");
    const std::size_t c = features.extent(0), h = features.extent(1), w = features.extent(2);
    const auto pixels = window_token_pixels(h, w, window);
    const std::size_t n = window.tokens();
    const std::size_t n_windows = pixels.size() / n;
    WindowedFeatures out{DenseArray({n_windows, n, c}), window, h, w};
    for (std::size_t t = 0; t < pixels.size(); ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) out.windows[t * c + ch] = features[ch * h * w + pixels[t]];
    }
    return out;
}

DenseArray reverse_windows(const WindowedFeatures& windowed) {
    const std::size_t c = windowed.windows.extent(2);
    const std::size_t h = windowed.map_height, w = windowed.map_width;
    const auto pixels = window_token_pixels(h, w, windowed.window);
    if (pixels.size() * c != windowed.windows.size()) throw ShapeError("reverse_windows: inconsistent window data");
    DenseArray out({c, h, w});
    for (std::size_t t = 0; t < pixels.size(); ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) out[ch * h * w + pixels[t]] = windowed.windows[t * c + ch];
    }
    return out;
}

}  // namespace spectragen::rgan
