#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spectragen/hsi/cube.hpp"

namespace spectragen::metrics {

enum class SetSource { real, generated };

std::string to_string(SetSource source);

/// n x B reflectance profiles, row-major.
class SpectralSet {
public:
    SpectralSet() = default;
    /// Throws DataError for B < 2 or a size mismatch, NumericalError for non-finite values.
    SpectralSet(std::size_t rows, std::size_t bands, std::vector<double> values, SetSource source = SetSource::real);

    std::size_t rows() const { return rows_; }
    std::size_t bands() const { return bands_; }
    SetSource source() const { return source_; }
    void set_source(SetSource s) { source_ = s; }
    const std::vector<double>& values() const { return values_; }
    const double* row(std::size_t i) const { return values_.data() + i * bands_; }

    /// Rows in the given order.
    SpectralSet select(const std::vector<std::size_t>& indices) const;

private:
    std::size_t rows_ = 0;
    std::size_t bands_ = 0;
    std::vector<double> values_;
    SetSource source_ = SetSource::real;
};

/// One row per pixel, pixels in row-major order.
SpectralSet spectral_set_from_cube(const hsi::HsiCube& cube, SetSource source = SetSource::real);

/**
 * Reads `.hsc` cubes and ENVI headers (`.hdr`) as pixels-as-rows; any other
 * path is a raw n x B f32le matrix described by `<path>.json`:
 * `{"rows": n, "bands": B, "dtype": "f32le"}`.
 */
SpectralSet load_spectral_set(const std::filesystem::path& path, SetSource source = SetSource::real);

/// Writes the raw matrix and its JSON sidecar.
void save_spectral_set(const SpectralSet& set, const std::filesystem::path& path);

}  // namespace spectragen::metrics
