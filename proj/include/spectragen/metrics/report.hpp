#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spectragen::metrics {

struct MetricRow {
    std::string metric;
    double value = 0.0;
    std::size_t k = 0;
    std::size_t samples = 0;
    std::size_t groups = 0;
    std::uint64_t seed = 0;
};

/// CSV with header `metric,value,k,samples,groups,seed`; values at 17 significant digits.
std::string metric_csv(const std::vector<MetricRow>& rows);
void write_metric_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);

}  // namespace spectragen::metrics
