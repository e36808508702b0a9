#include "spectragen/metrics/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "spectragen/numerics/error.hpp"

namespace spectragen::metrics {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

void check_same(const DenseArray& x, const DenseArray& ref, const char* what) {
    if (x.shape() != ref.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(x.shape()) + " vs " +
                         shape_string(ref.shape()));
    }
}

void check_cube(const DenseArray& x, const char* what) {
    if (x.rank() != 3) throw ShapeError(std::string(what) + " expects [bands, height, width], got " + shape_string(x.shape()));
}

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> g{};
    double total = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
        g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        total += g[i];
    }
    for (auto& v : g) v /= total;
    return g;
}

// Valid-mode separable Gaussian filter of one h x w plane.
std::vector<double> filter(const std::vector<double>& plane, std::size_t h, std::size_t w,
                           const std::array<double, kWindow>& g) {
    const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
    std::vector<double> rows(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t i = 0; i < kWindow; ++i) s += g[i] * plane[y * w + x + i];
            rows[y * ow + x] = s;
        }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t i = 0; i < kWindow; ++i) s += g[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

}  // namespace

double sam(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("sam: spectra differ in length");
    double aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw DataError("sam: zero spectrum");
    // Chord between the unit vectors: stable where acos of the cosine is not.
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    double chord = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] / na - b[i] / nb;
        chord += d * d;
    }
    return 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(chord)));
}

double mean_sam(const DenseArray& x, const DenseArray& ref) {
    check_same(x, ref, "mean_sam");
    check_cube(x, "mean_sam");
    const std::size_t bands = x.extent(0), n = x.extent(1) * x.extent(2);
    if (n == 0) throw ShapeError("mean_sam: empty image");
    std::vector<double> a(bands), b(bands);
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t c = 0; c < bands; ++c) {
            a[c] = x[c * n + p];
            b[c] = ref[c * n + p];
        }
        total += sam(a, b);
    }
    return total / static_cast<double>(n);
}

double mean_sam(const hsi::HsiCube& x, const hsi::HsiCube& ref) { return mean_sam(x.values(), ref.values()); }

double psnr(const DenseArray& x, const DenseArray& ref, double peak) {
    check_same(x, ref, "psnr");
    if (x.size() == 0) throw ShapeError("psnr: empty input");
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - ref[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(x.size());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const hsi::HsiCube& x, const hsi::HsiCube& ref, double peak) { return psnr(x.values(), ref.values(), peak); }

double ssim(const DenseArray& x, const DenseArray& ref, double peak) {
    check_same(x, ref, "ssim");
    check_cube(x, "ssim");
    const std::size_t bands = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (h < kWindow || w < kWindow) throw ShapeError("ssim needs bands of at least 11x11, got " + shape_string(x.shape()));
    const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
    const auto g = gaussian_taps();
    const std::size_t n = h * w;
    double total = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
        std::vector<double> px(n), py(n), pxx(n), pyy(n), pxy(n);
        for (std::size_t i = 0; i < n; ++i) {
            px[i] = x[b * n + i];
            py[i] = ref[b * n + i];
            pxx[i] = px[i] * px[i];
            pyy[i] = py[i] * py[i];
            pxy[i] = px[i] * py[i];
        }
        const auto mx = filter(px, h, w, g), my = filter(py, h, w, g);
        const auto sxx = filter(pxx, h, w, g), syy = filter(pyy, h, w, g), sxy = filter(pxy, h, w, g);
        double band = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
            band += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
                    ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += band / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(bands);
}

double ssim(const hsi::HsiCube& x, const hsi::HsiCube& ref, double peak) { return ssim(x.values(), ref.values(), peak); }

}  // namespace spectragen::metrics
