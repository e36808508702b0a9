#include "spectragen/cli/preview.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "spectragen/hsi/processing.hpp"
#include "spectragen/numerics/error.hpp"

namespace spectragen::cli {

std::string ppm_preview(const hsi::HsiCube& cube) {
    const auto rgb = hsi::extract_rgb(cube);
    const std::size_t h = cube.height(), w = cube.width();
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + 3 * h * w);
    for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t band = rgb.source_bands[c];
        double lo = cube.at(band, 0, 0), hi = lo;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                lo = std::min(lo, cube.at(band, y, x));
                hi = std::max(hi, cube.at(band, y, x));
            }
        const double span = hi - lo;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double v = span > 0.0 ? (cube.at(band, y, x) - lo) / span : 0.0;
                out[header + 3 * (y * w + x) + c] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v)));
            }
    }
    return out;
}

void write_ppm_preview(const hsi::HsiCube& cube, const std::filesystem::path& path) {
    const auto data = ppm_preview(cube);
    std::ofstream out(path, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace spectragen::cli
