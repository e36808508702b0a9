#include "spectragen/hsi/processing.hpp"

#include <algorithm>
#include <cmath>

#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/ops.hpp"
#include "spectragen/numerics/random.hpp"

namespace spectragen::hsi {

std::vector<double> uniform_grid(double first_nm, double last_nm, std::size_t count) {
    if (count == 0) throw DataError("wavelength grid needs at least one band");
    if (count == 1) return {first_nm};
    std::vector<double> grid(count);
    const double step = (last_nm - first_nm) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) grid[i] = first_nm + step * static_cast<double>(i);
    grid.back() = last_nm;
    return grid;
}

std::vector<double> default_wavelength_grid() { return uniform_grid(400.0, 1000.0, 48); }

HsiCube align_wavelengths(const HsiCube& cube, const std::vector<double>& target_nm) {
    validate_wavelengths(target_nm);
    if (target_nm.empty()) throw DataError("empty target grid");
    const auto& src = cube.wavelengths();
    if (target_nm.front() < src.front() || target_nm.back() > src.back()) {
        throw DataError("target grid [" + std::to_string(target_nm.front()) + ", " + std::to_string(target_nm.back()) +
                        "] nm leaves the source range [" + std::to_string(src.front()) + ", " +
                        std::to_string(src.back()) + "] nm");
    }
    const std::size_t h = cube.height(), w = cube.width(), plane = h * w;
    DenseArray out({target_nm.size(), h, w});
    const auto& in = cube.values();
    for (std::size_t t = 0; t < target_nm.size(); ++t) {
        const double lambda = target_nm[t];
        // Segment [lo, lo + 1] with src[lo] <= lambda.
        std::size_t lo = static_cast<std::size_t>(std::upper_bound(src.begin(), src.end(), lambda) - src.begin()) - 1;
        double frac = 0.0;
        std::size_t hi = lo;
        if (lo + 1 < src.size() && src[lo] != lambda) {
            hi = lo + 1;
            frac = (lambda - src[lo]) / (src[hi] - src[lo]);
        }
        const double* a = in.data().data() + lo * plane;
        const double* b = in.data().data() + hi * plane;
        double* o = out.data().data() + t * plane;
        for (std::size_t p = 0; p < plane; ++p) o[p] = (1.0 - frac) * a[p] + frac * b[p];
    }
    return HsiCube(target_nm, std::move(out));
}

AlignResult align_to_covered_grid(const HsiCube& cube, const std::vector<double>& target_nm) {
    const auto& src = cube.wavelengths();
    std::vector<double> covered;
    for (double lambda : target_nm) {
        if (lambda >= src.front() && lambda <= src.back()) covered.push_back(lambda);
    }
    if (covered.empty()) throw DataError("source wavelengths do not overlap the target grid");
    const bool partial = covered.size() != target_nm.size();
    return {align_wavelengths(cube, covered), partial};
}

PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t size, std::size_t stride) {
    if (size == 0 || stride == 0) throw DataError("patch size and stride must be positive");
    if (size > height || size > width) {
        throw DataError("patch size " + std::to_string(size) + " exceeds extent " + std::to_string(height) + "x" +
                        std::to_string(width));
    }
    PatchGrid grid;
    grid.patch_size = size;
    grid.stride = stride;
    grid.rows = (height - size) / stride + 1;
    grid.cols = (width - size) / stride + 1;
    grid.origins.reserve(grid.rows * grid.cols);
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) grid.origins.push_back({r * stride, c * stride});
    }
    return grid;
}

HsiCube crop_cube(const HsiCube& cube, std::size_t y, std::size_t x, std::size_t height, std::size_t width) {
    return HsiCube(cube.wavelengths(), crop(cube.values(), y, x, height, width));
}

PatchSet crop_patches(const HsiCube& cube, std::size_t size, std::size_t stride) {
    PatchSet set;
    set.grid = make_patch_grid(cube.height(), cube.width(), size, stride);
    set.patches.reserve(set.grid.origins.size());
    for (const auto& o : set.grid.origins) set.patches.push_back(crop_cube(cube, o.y, o.x, size, size));
    return set;
}

std::size_t nearest_band(const std::vector<double>& wavelengths_nm, double target_nm) {
    if (wavelengths_nm.empty()) throw DataError("no bands to choose from");
    std::size_t best = 0;
    double best_dist = std::abs(wavelengths_nm[0] - target_nm);
    for (std::size_t i = 1; i < wavelengths_nm.size(); ++i) {
        const double d = std::abs(wavelengths_nm[i] - target_nm);
        if (d < best_dist) {
            best = i;
            best_dist = d;
        }
    }
    return best;
}

RgbBands extract_rgb(const HsiCube& cube) {
    const auto& wl = cube.wavelengths();
    if (wl.front() > kRgbTargetsNm[2] || wl.back() < kRgbTargetsNm[0]) {
        throw DataError("wavelength range [" + std::to_string(wl.front()) + ", " + std::to_string(wl.back()) +
                        "] nm does not cover 450-650 nm");
    }
    RgbBands rgb;
    for (std::size_t i = 0; i < 3; ++i) rgb.source_bands[i] = nearest_band(wl, kRgbTargetsNm[i]);
    const auto [r, g, b] = rgb.source_bands;
    if (r == g || g == b) throw DataError("band spacing too coarse: R, G and B map to the same band");

    const std::size_t plane = cube.height() * cube.width();
    DenseArray values({3, cube.height(), cube.width()});
    const std::array<std::size_t, 3> ascending = {b, g, r};
    for (std::size_t i = 0; i < 3; ++i) {
        std::copy_n(cube.values().data().begin() + static_cast<std::ptrdiff_t>(ascending[i] * plane), plane,
                    values.data().begin() + static_cast<std::ptrdiff_t>(i * plane));
    }
    rgb.cube = HsiCube({wl[b], wl[g], wl[r]}, std::move(values));
    return rgb;
}

HsiCube degrade(const HsiCube& cube, const DegradationSpec& spec) {
    switch (spec.kind) {
    case DegradationKind::gaussian_noise: {
        if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) throw DataError("noise sigma must be >= 0");
        if (spec.sigma == 0.0) return cube;
        RandomSource rng(spec.seed);
        DenseArray noisy = cube.values();
        for (double& v : noisy.data()) {
            v += spec.sigma * rng.gaussian();
            if (spec.clamp) v = std::clamp(v, 0.0, 1.0);
        }
        return HsiCube(cube.wavelengths(), std::move(noisy));
    }
    case DegradationKind::downsample:
        if (spec.factor != 2 && spec.factor != 4) throw DataError("downsample factor must be 2 or 4");
        if (cube.height() % spec.factor || cube.width() % spec.factor) {
            throw DataError("downsample factor " + std::to_string(spec.factor) + " does not divide " +
                            std::to_string(cube.height()) + "x" + std::to_string(cube.width()));
        }
        return HsiCube(cube.wavelengths(), area_downsample(cube.values(), spec.factor));
    }
    throw DataError("unknown degradation kind");
}

}  // namespace spectragen::hsi
