#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "spectragen/hsi/cube.hpp"

namespace spectragen::hsi {

/// `count` equally spaced wavelengths from `first_nm` to `last_nm` inclusive.
std::vector<double> uniform_grid(double first_nm, double last_nm, std::size_t count);

/// The 48-band 400-1000 nm grid used for every dataset.
std::vector<double> default_wavelength_grid();

/// Per-pixel piecewise-linear resampling. Throws if `target_nm` leaves the source range.
HsiCube align_wavelengths(const HsiCube& cube, const std::vector<double>& target_nm);

struct AlignResult {
    HsiCube cube;
    // True when the source did not span the whole target grid and only the
    // covered sub-grid was produced.
    bool partial = false;
};

/// Aligns onto `target_nm`, dropping grid points outside the source range.
AlignResult align_to_covered_grid(const HsiCube& cube, const std::vector<double>& target_nm);

struct PatchOrigin {
    std::size_t y = 0;
    std::size_t x = 0;
};

struct PatchGrid {
    std::size_t patch_size = 0;
    std::size_t stride = 0;
    std::size_t rows = 0;  // patches along height
    std::size_t cols = 0;  // patches along width
    std::vector<PatchOrigin> origins;  // row-major
};

/// Grid with floor((extent - size) / stride) + 1 patches per axis, no padding.
PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t size, std::size_t stride);

struct PatchSet {
    PatchGrid grid;
    std::vector<HsiCube> patches;
};

PatchSet crop_patches(const HsiCube& cube, std::size_t size, std::size_t stride);

/// Copies the window at (y, x) of the given size.
HsiCube crop_cube(const HsiCube& cube, std::size_t y, std::size_t x, std::size_t height, std::size_t width);

inline constexpr std::array<double, 3> kRgbTargetsNm = {650.0, 550.0, 450.0};

/**
 * RGB bands as a 3-band cube in ascending wavelength order (blue, green,
 * red). `source_bands` holds the chosen source indices in R, G, B order.
 */
struct RgbBands {
    HsiCube cube;
    std::array<std::size_t, 3> source_bands{};
};

/// Index of the band nearest to `target_nm`; ties go to the lower index.
std::size_t nearest_band(const std::vector<double>& wavelengths_nm, double target_nm);

RgbBands extract_rgb(const HsiCube& cube);

enum class DegradationKind { gaussian_noise, downsample };

struct DegradationSpec {
    DegradationKind kind = DegradationKind::gaussian_noise;
    double sigma = 0.0;
    std::size_t factor = 2;
    std::uint64_t seed = 0;
    // Clamp noisy values to [0, 1].
    bool clamp = true;
};

HsiCube degrade(const HsiCube& cube, const DegradationSpec& spec);

}  // namespace spectragen::hsi
