#include "spectragen/diffusion/schedule.hpp"

#include <cmath>

#include "spectragen/numerics/error.hpp"

namespace spectragen::diffusion {

namespace {

void check_t(std::size_t t, const NoiseSchedule& schedule) {
    if (t > schedule.steps) {
        throw ShapeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps) + "]");
    }
}

}  // namespace

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) throw DataError("noise schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw DataError("noise schedule requires 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.alpha.assign(steps + 1, 1.0);
    s.alpha_bar.assign(steps + 1, 1.0);
    for (std::size_t t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
        s.alpha[t] = 1.0 - (beta_start + (beta_end - beta_start) * frac);
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }
    return s;
}

bool operator==(const NoiseSchedule& a, const NoiseSchedule& b) {
    return a.steps == b.steps && a.alpha == b.alpha && a.alpha_bar == b.alpha_bar;
}

DenseArray forward_noise(const DenseArray& z0, std::size_t t, const DenseArray& eps, const NoiseSchedule& schedule) {
    check_t(t, schedule);
    if (z0.shape() != eps.shape()) throw ShapeError("forward_noise: noise shape differs from latent shape");
    const double a = std::sqrt(schedule.alpha_bar[t]), b = std::sqrt(1.0 - schedule.alpha_bar[t]);
    DenseArray out(z0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

DenseArray ddim_step(const DenseArray& z_t, const DenseArray& eps_hat, std::size_t t, std::size_t t_prev,
                     const NoiseSchedule& schedule) {
    check_t(t, schedule);
    if (t_prev >= t) throw ShapeError("ddim_step: t_prev must precede t");
    if (z_t.shape() != eps_hat.shape()) throw ShapeError("ddim_step: noise shape differs from latent shape");
    const double ab = schedule.alpha_bar[t], ab_prev = schedule.alpha_bar[t_prev];
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    const double sa_prev = std::sqrt(ab_prev), sb_prev = std::sqrt(1.0 - ab_prev);
    DenseArray out(z_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x0 = (z_t[i] - sb * eps_hat[i]) / sa;
        out[i] = sa_prev * x0 + sb_prev * eps_hat[i];
    }
    return out;
}

std::vector<std::size_t> timestep_subsequence(std::size_t total_steps, std::size_t count) {
    if (count == 0 || count > total_steps) {
        throw DataError("sampling steps must be in [1, " + std::to_string(total_steps) + "]");
    }
    std::vector<std::size_t> seq(count);
    for (std::size_t i = 1; i <= count; ++i) seq[i - 1] = i * total_steps / count;
    return seq;
}

}  // namespace spectragen::diffusion
