#pragma once

#include <cstddef>
#include <vector>

#include "spectragen/numerics/dense_array.hpp"

namespace spectragen::hsi {

/**
 * Reflectance cube, band-sequential: `values()` is `[bands, height, width]`.
 *
 * Wavelengths are in nanometres, one per band, strictly increasing. Values
 * are finite; reflectance is nominally in [0, 1] but that is not enforced
 * (unclamped noise degradations are allowed).
 */
class HsiCube {
public:
    HsiCube() = default;
    HsiCube(std::vector<double> wavelengths_nm, DenseArray values);

    std::size_t height() const { return values_.extent(1); }
    std::size_t width() const { return values_.extent(2); }
    std::size_t bands() const { return wavelengths_.size(); }
    const std::vector<double>& wavelengths() const { return wavelengths_; }
    const DenseArray& values() const { return values_; }

    double at(std::size_t band, std::size_t y, std::size_t x) const { return values_.at(band, y, x); }
    std::vector<double> spectrum(std::size_t y, std::size_t x) const;

private:
    std::vector<double> wavelengths_;
    DenseArray values_;
};

/// Throws DataError unless the wavelengths are strictly increasing and finite.
void validate_wavelengths(const std::vector<double>& wavelengths_nm);

}  // namespace spectragen::hsi
