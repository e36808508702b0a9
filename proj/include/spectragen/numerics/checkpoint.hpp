#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "spectragen/numerics/autograd.hpp"

namespace spectragen {

/**
 * Checkpoint layout: `<path>` is a JSON manifest with the model kind, its
 * config and the parameter table; `<path>.bin` holds the parameters as
 * 32-bit little-endian floats in table order.
 */
struct CheckpointData {
    std::string kind;
    nlohmann::json config;
    nlohmann::json parameters;  // [{name, shape, offset}]
    std::vector<float> payload;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const nlohmann::json& config, const std::vector<Parameter>& params);

CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Copies payload values into `params`, verifying names and shapes.
void load_parameters(const CheckpointData& data, std::vector<Parameter>& params);

}  // namespace spectragen
