#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace spectragen {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/**
 * Row-major array of 64-bit floats.
 *
 * A rank-0 shape (`{}`) holds a single scalar. Image-like data is stored
 * channel-first as `[C, H, W]`.
 */
class DenseArray {
public:
    DenseArray() = default;
    explicit DenseArray(Shape shape, double fill = 0.0);
    DenseArray(Shape shape, std::vector<double> data);

    static DenseArray scalar(double value);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // [C, H, W] element access.
    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    double item() const;

    DenseArray reshaped(Shape shape) const;
    void fill(double value);
    bool all_finite() const;

    friend bool operator==(const DenseArray&, const DenseArray&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Largest absolute elementwise difference; throws ShapeError on mismatch.
double max_abs_diff(const DenseArray& a, const DenseArray& b);

}  // namespace spectragen
