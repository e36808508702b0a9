#include "spectragen/diffusion/conditions.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "spectragen/numerics/error.hpp"

namespace spectragen::diffusion {

namespace {

constexpr std::array<std::pair<ConditionTag, const char*>, 6> kTagNames{{{ConditionTag::hed, "hed"},
                                                                         {ConditionTag::seg, "seg"},
                                                                         {ConditionTag::sketch, "sketch"},
                                                                         {ConditionTag::mlsd, "mlsd"},
                                                                         {ConditionTag::lowres, "lowres"},
                                                                         {ConditionTag::custom, "custom"}}};

DenseArray luminance(const DenseArray& image) {
    if (image.rank() != 3 || image.extent(0) == 0) throw ShapeError("condition proxies expect a [C, H, W] image");
    const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
    DenseArray out({1, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i) out[i] += image[ch * h * w + i];
    for (double& v : out.data()) v /= static_cast<double>(c);
    return out;
}

DenseArray sobel_magnitude(const DenseArray& image) {
    const auto lum = luminance(image);
    const long h = static_cast<long>(lum.extent(1)), w = static_cast<long>(lum.extent(2));
    auto px = [&](long y, long x) {
        y = std::clamp(y, 0L, h - 1);
        x = std::clamp(x, 0L, w - 1);
        return lum[static_cast<std::size_t>(y * w + x)];
    };
    DenseArray out({1, lum.extent(1), lum.extent(2)});
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            const double gx = (px(y - 1, x + 1) + 2.0 * px(y, x + 1) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2.0 * px(y, x - 1) + px(y + 1, x - 1));
            const double gy = (px(y + 1, x - 1) + 2.0 * px(y + 1, x) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2.0 * px(y - 1, x) + px(y - 1, x + 1));
            out[static_cast<std::size_t>(y * w + x)] = std::sqrt(gx * gx + gy * gy);
        }
    }
    return out;
}

}  // namespace

std::string to_string(ConditionTag tag) {
    for (const auto& [t, name] : kTagNames)
        if (t == tag) return name;
    return "unknown";
}

ConditionTag condition_tag_from_string(const std::string& name) {
    for (const auto& [t, n] : kTagNames)
        if (name == n) return t;
    throw DataError("unknown condition tag '" + name + "' (expected hed, seg, sketch, mlsd, lowres or custom)");
}

void ConditionStack::add(ConditionTag tag, DenseArray values) {
    if (values.rank() != 3 || values.extent(0) == 0) throw DataError("condition maps must be [C, H, W]");
    if (!values.all_finite()) throw DataError("condition map '" + to_string(tag) + "' has non-finite values");
    if (find(tag)) throw DataError("duplicate condition tag '" + to_string(tag) + "'");
    if (maps_.size() == kMaxMaps) throw DataError("at most 6 condition maps are supported");
    if (!maps_.empty()) {
        const auto& ref = maps_.front().values;
        if (ref.extent(1) != values.extent(1) || ref.extent(2) != values.extent(2)) {
            throw DataError("condition map '" + to_string(tag) + "' extents differ from '" +
                            to_string(maps_.front().tag) + "'");
        }
    }
    maps_.push_back({tag, std::move(values)});
}

void ConditionStack::set_global(std::vector<double> embedding) {
    for (double v : embedding)
        if (!std::isfinite(v)) throw DataError("global embedding has non-finite values");
    global_ = std::move(embedding);
}

const ConditionMap* ConditionStack::find(ConditionTag tag) const {
    for (const auto& m : maps_)
        if (m.tag == tag) return &m;
    return nullptr;
}

ConditionStack ConditionStack::without(ConditionTag tag) const {
    ConditionStack out;
    for (const auto& m : maps_)
        if (m.tag != tag) out.maps_.push_back(m);
    out.global_ = global_;
    return out;
}

std::vector<std::string> ConditionStack::tags() const {
    std::vector<std::string> out;
    for (const auto& m : maps_) out.push_back(to_string(m.tag));
    if (global_) out.push_back("global");
    return out;
}

DenseArray sobel_edges(const DenseArray& image) {
    auto mag = sobel_magnitude(image);
    double peak = 0.0;
    for (double v : mag.data()) peak = std::max(peak, v);
    if (peak > 0.0)
        for (double& v : mag.data()) v /= peak;
    return mag;
}

DenseArray sketch_map(const DenseArray& image, double threshold) {
    auto mag = sobel_magnitude(image);
    for (double& v : mag.data()) v = v > threshold ? 1.0 : 0.0;
    return mag;
}

DenseArray segmentation_map(const DenseArray& image, std::size_t levels) {
    if (levels == 0) throw DataError("segmentation needs at least one level");
    const auto lum = luminance(image);
    const std::size_t h = lum.extent(1), w = lum.extent(2);
    std::vector<std::size_t> bin(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
        const double v = std::clamp(lum[i], 0.0, 1.0) * static_cast<double>(levels);
        bin[i] = std::min(levels - 1, static_cast<std::size_t>(v));
    }
    constexpr std::size_t unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> label(h * w, unset), stack;
    std::size_t count = 0;
    for (std::size_t seed = 0; seed < h * w; ++seed) {
        if (label[seed] != unset) continue;
        label[seed] = count;
        stack.push_back(seed);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t y = p / w, x = p % w;
            const std::size_t nb[4] = {y > 0 ? p - w : unset, y + 1 < h ? p + w : unset, x > 0 ? p - 1 : unset,
                                       x + 1 < w ? p + 1 : unset};
            for (std::size_t q : nb) {
                if (q == unset || label[q] != unset || bin[q] != bin[seed]) continue;
                label[q] = count;
                stack.push_back(q);
            }
        }
        ++count;
    }
    DenseArray out({1, h, w});
    const double scale = count > 1 ? 1.0 / static_cast<double>(count - 1) : 0.0;
    for (std::size_t i = 0; i < h * w; ++i) out[i] = static_cast<double>(label[i]) * scale;
    return out;
}

}  // namespace spectragen::diffusion
