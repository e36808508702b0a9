#pragma once

#include <filesystem>
#include <string>

#include "spectragen/hsi/cube.hpp"

namespace spectragen::hsi {

/// Eight-byte magic that opens every HSC file.
inline constexpr char kHscMagic[8] = {'H', 'S', 'C', 'U', 'B', 'E', '\0', '\1'};

/**
 * Writes the HSC container: magic, u32 little-endian header length, a UTF-8
 * JSON header, then height*width*bands f32 little-endian values in
 * band-sequential order. Values are rounded to 32-bit floats.
 */
void write_cube(const HsiCube& cube, const std::filesystem::path& path);

/// Reads HSC files, or an ENVI header (`.hdr`) with its raw companion file.
HsiCube read_cube(const std::filesystem::path& path);

HsiCube read_hsc(const std::filesystem::path& path);

/**
 * ENVI subset: `samples`, `lines`, `bands`, `wavelength`, `interleave = bsq`,
 * `data type = 4`, `byte order = 0`. The payload is looked up next to the
 * header as `<stem>`, `<stem>.img`, `<stem>.raw` or `<stem>.dat`.
 */
HsiCube read_envi(const std::filesystem::path& header_path);

}  // namespace spectragen::hsi
