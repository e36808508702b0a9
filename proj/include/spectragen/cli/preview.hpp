#pragma once

#include <filesystem>
#include <string>

#include "spectragen/hsi/cube.hpp"

namespace spectragen::cli {

/// Binary PPM (P6) of the R, G, B bands, each stretched from its min to its max.
std::string ppm_preview(const hsi::HsiCube& cube);
void write_ppm_preview(const hsi::HsiCube& cube, const std::filesystem::path& path);

}  // namespace spectragen::cli
