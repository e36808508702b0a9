#pragma once

#include <span>

#include "spectragen/hsi/cube.hpp"
#include "spectragen/numerics/dense_array.hpp"

namespace spectragen::metrics {

/// Spectral angle in radians; throws DataError for a zero vector.
double sam(std::span<const double> a, std::span<const double> b);

/// Mean spectral angle over pixels of two [B, H, W] arrays.
double mean_sam(const DenseArray& x, const DenseArray& ref);
double mean_sam(const hsi::HsiCube& x, const hsi::HsiCube& ref);

/// 10 log10(peak^2 / MSE), 100 dB when MSE < 1e-10.
double psnr(const DenseArray& x, const DenseArray& ref, double peak = 1.0);
double psnr(const hsi::HsiCube& x, const hsi::HsiCube& ref, double peak = 1.0);

/**
 * Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03) over valid
 * window positions, averaged over bands. Bands must be at least 11x11.
 */
double ssim(const DenseArray& x, const DenseArray& ref, double peak = 1.0);
double ssim(const hsi::HsiCube& x, const hsi::HsiCube& ref, double peak = 1.0);

}  // namespace spectragen::metrics
