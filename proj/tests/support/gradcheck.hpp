#pragma once

// Central finite-difference checker for reverse-mode gradients. Test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "spectragen/numerics/autograd.hpp"
#include "spectragen/numerics/random.hpp"

namespace spectragen::testing {

struct GradCheckReport {
    double worst_relative_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst_location;
};

inline double relative_error(double analytic, double numeric) {
    // Gradients below 1e-5 are compared on an absolute scale: central
    // differences of an O(1) loss carry roughly 1e-10 of roundoff at step 1e-5.
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
    return std::abs(analytic - numeric) / denom;
}

/// Samples `per_parameter` coordinates from each parameter (all of them when
/// the parameter is smaller) and compares backward() with central differences.
inline GradCheckReport check_gradients(std::vector<Parameter> params, const std::function<Var()>& loss_fn,
                                       RandomSource& rng, std::size_t per_parameter, double step = 1e-5) {
    for (auto& p : params) p.zero_grad();
    backward(loss_fn());
    std::vector<DenseArray> analytic;
    for (auto& p : params) analytic.push_back(p.gradient());

    GradCheckReport report;
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        const std::size_t n = p.value().size();
        std::vector<std::size_t> coords;
        if (n <= per_parameter) {
            for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (std::size_t i = 0; i < per_parameter; ++i) coords.push_back(rng.uniform_index(n));
        }
        for (std::size_t idx : coords) {
            const double original = p.value()[idx];
            p.value()[idx] = original + step;
            const double up = loss_fn().value().item();
            p.value()[idx] = original - step;
            const double down = loss_fn().value().item();
            p.value()[idx] = original;
            const double numeric = (up - down) / (2.0 * step);
            const double err = relative_error(analytic[k][idx], numeric);
            ++report.coordinates;
            if (err > report.worst_relative_error) {
                report.worst_relative_error = err;
                report.worst_location = p.name() + "[" + std::to_string(idx) + "] analytic=" +
                                        std::to_string(analytic[k][idx]) + " numeric=" + std::to_string(numeric);
            }
        }
    }
    return report;
}

/// Randomizes every parameter so zero-initialized layers do not hide errors.
inline void randomize_parameters(std::vector<Parameter> params, RandomSource& rng, double scale) {
    for (auto& p : params) {
        for (double& v : p.value().data()) v = scale * (2.0 * rng.uniform() - 1.0);
    }
}

}  // namespace spectragen::testing
