#include "spectragen/hsi/cube.hpp"

#include <cmath>

#include "spectragen/numerics/error.hpp"

namespace spectragen::hsi {

void validate_wavelengths(const std::vector<double>& wavelengths_nm) {
    for (std::size_t i = 0; i < wavelengths_nm.size(); ++i) {
        if (!std::isfinite(wavelengths_nm[i])) throw DataError("wavelength " + std::to_string(i) + " is not finite");
        if (i > 0 && !(wavelengths_nm[i] > wavelengths_nm[i - 1])) {
            throw DataError("wavelengths must be strictly increasing (band " + std::to_string(i) + ")");
        }
    }
}

HsiCube::HsiCube(std::vector<double> wavelengths_nm, DenseArray values)
    : wavelengths_(std::move(wavelengths_nm)), values_(std::move(values)) {
    if (values_.rank() != 3) throw ShapeError("HsiCube values must be [bands, height, width]");
    if (values_.extent(0) != wavelengths_.size()) {
        throw DataError("cube declares " + std::to_string(values_.extent(0)) + " bands but " +
                        std::to_string(wavelengths_.size()) + " wavelengths");
    }
    if (wavelengths_.empty()) throw DataError("cube needs at least one band");
    validate_wavelengths(wavelengths_);
    if (!values_.all_finite()) throw NumericalError("cube contains non-finite values");
}

std::vector<double> HsiCube::spectrum(std::size_t y, std::size_t x) const {
    std::vector<double> s(bands());
    for (std::size_t b = 0; b < bands(); ++b) s[b] = values_.at(b, y, x);
    return s;
}

}  // namespace spectragen::hsi
