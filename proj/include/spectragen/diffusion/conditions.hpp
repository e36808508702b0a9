#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spectragen/numerics/dense_array.hpp"

namespace spectragen::diffusion {

enum class ConditionTag { hed, seg, sketch, mlsd, lowres, custom };

std::string to_string(ConditionTag tag);
ConditionTag condition_tag_from_string(const std::string& name);

struct ConditionMap {
    ConditionTag tag;
    DenseArray values;  // [channels, H, W]
};

/// Spatial condition maps at image resolution plus an optional global vector.
class ConditionStack {
public:
    static constexpr std::size_t kMaxMaps = 6;

    /// Throws DataError on a duplicate tag, mismatched extents or a full stack.
    void add(ConditionTag tag, DenseArray values);
    void set_global(std::vector<double> embedding);

    const std::vector<ConditionMap>& maps() const { return maps_; }
    const ConditionMap* find(ConditionTag tag) const;
    const std::optional<std::vector<double>>& global() const { return global_; }
    bool empty() const { return maps_.empty() && !global_; }

    ConditionStack without(ConditionTag tag) const;
    std::vector<std::string> tags() const;

private:
    std::vector<ConditionMap> maps_;
    std::optional<std::vector<double>> global_;
};

// Built-in proxies for the pretrained extractors. Inputs are [C, H, W]
// images; channels are averaged to luminance first. Outputs are [1, H, W].

/// Sobel gradient magnitude normalized to [0, 1] (edge-map proxy).
DenseArray sobel_edges(const DenseArray& image);

/// 1 where the raw Sobel magnitude exceeds `threshold`, else 0.
DenseArray sketch_map(const DenseArray& image, double threshold = 0.1);

/**
 * Quantizes luminance into `levels` bins and labels 4-connected components
 * of equal bin; labels are scaled to [0, 1] by the component count.
 */
DenseArray segmentation_map(const DenseArray& image, std::size_t levels = 4);

}  // namespace spectragen::diffusion
