#pragma once

// Synthetic cubes shared by unit and acceptance tests.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "spectragen/hsi/cube.hpp"
#include "spectragen/hsi/processing.hpp"
#include "spectragen/numerics/random.hpp"

namespace spectragen::testing {

/// Random cube whose values are exactly representable as 32-bit floats.
inline hsi::HsiCube random_cube(std::size_t h, std::size_t w, std::vector<double> wavelengths, std::uint64_t seed) {
    RandomSource rng(seed);
    DenseArray v({wavelengths.size(), h, w});
    for (double& x : v.data()) x = static_cast<double>(static_cast<float>(rng.uniform()));
    return hsi::HsiCube(std::move(wavelengths), std::move(v));
}

/**
 * Linear mixture of three smooth endmember spectra with spatially varying
 * abundances: soft blobs plus a couple of oriented edges so the cube has
 * structure at several scales.
 */
inline hsi::HsiCube mixture_cube(std::size_t h, std::size_t w, const std::vector<double>& wavelengths,
                                 std::uint64_t seed, double detail = 1.0) {
    RandomSource rng(seed);
    const std::size_t n_blobs = 6;
    struct Blob {
        double cy, cx, r, e;
    };
    std::vector<Blob> blobs;
    for (std::size_t i = 0; i < n_blobs; ++i) {
        blobs.push_back({rng.uniform() * static_cast<double>(h), rng.uniform() * static_cast<double>(w),
                         (0.15 + 0.25 * rng.uniform()) * static_cast<double>(std::min(h, w)),
                         static_cast<double>(rng.uniform_index(3))});
    }
    const double angle = rng.uniform() * std::numbers::pi;
    const double freq = 2.0 * std::numbers::pi / (0.35 * static_cast<double>(std::min(h, w)));

    auto endmember = [](std::size_t e, double lambda) {
        const double t = (lambda - 400.0) / 600.0;
        switch (e) {
        case 0: return 0.15 + 0.55 * t;                                           // soil-like ramp
        case 1: return 0.08 + 0.5 / (1.0 + std::exp(-(lambda - 710.0) / 15.0));  // vegetation red edge
        default: return 0.35 + 0.1 * std::sin(6.0 * t);                           // bright cover
        }
    };

    DenseArray v({wavelengths.size(), h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double ab[3] = {0.2, 0.2, 0.2};
            for (const auto& b : blobs) {
                const double dy = static_cast<double>(y) - b.cy, dx = static_cast<double>(x) - b.cx;
                ab[static_cast<std::size_t>(b.e)] += std::exp(-(dy * dy + dx * dx) / (2.0 * b.r * b.r));
            }
            const double s = static_cast<double>(y) * std::sin(angle) + static_cast<double>(x) * std::cos(angle);
            ab[0] += 0.4 * detail * (std::sin(freq * s) > 0.0 ? 1.0 : 0.0);
            ab[1] += 0.3 * detail * std::cos(2.3 * freq * static_cast<double>(y));
            for (double& a : ab) a = std::max(a, 0.0);
            const double total = ab[0] + ab[1] + ab[2];
            for (std::size_t k = 0; k < wavelengths.size(); ++k) {
                double r = 0.0;
                for (std::size_t e = 0; e < 3; ++e) r += ab[e] / total * endmember(e, wavelengths[k]);
                v.at(k, y, x) = std::clamp(r, 0.0, 1.0);
            }
        }
    }
    return hsi::HsiCube(wavelengths, std::move(v));
}

/**
 * Three-endmember mixture whose abundances carry texture at a few pixels'
 * period, so bilinear upsampling of a downsampled copy loses real detail
 * while the full-resolution RGB bands still determine every spectrum.
 */
inline hsi::HsiCube textured_cube(std::size_t h, std::size_t w, const std::vector<double>& wavelengths,
                                  std::uint64_t seed) {
    RandomSource rng(seed);
    const double angle = 0.3 + 0.4 * rng.uniform();
    const double period = 3.0 + rng.uniform();
    const double cell = 3.0 + 2.0 * rng.uniform();
    DenseArray v({wavelengths.size(), h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double fy = static_cast<double>(y), fx = static_cast<double>(x);
            const double s = fy * std::sin(angle) + fx * std::cos(angle);
            const double stripe = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * s / period);
            const bool check = (static_cast<long>(fy / cell) + static_cast<long>(fx / cell)) % 2 == 0;
            const double ab[3] = {0.1 + stripe, 0.1 + (check ? 0.8 : 0.0), 0.3 + 0.3 * std::cos(fx / 9.0 + fy / 13.0)};
            const double total = ab[0] + ab[1] + ab[2];
            for (std::size_t k = 0; k < wavelengths.size(); ++k) {
                const double t = (wavelengths[k] - 400.0) / 600.0;
                const double e[3] = {0.15 + 0.55 * t, 0.08 + 0.5 / (1.0 + std::exp(-(wavelengths[k] - 600.0) / 25.0)),
                                     0.45 + 0.1 * std::sin(6.0 * t)};
                v.at(k, y, x) = (ab[0] * e[0] + ab[1] * e[1] + ab[2] * e[2]) / total;
            }
        }
    }
    return hsi::HsiCube(wavelengths, std::move(v));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("spectragen_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace spectragen::testing
