#include "spectragen/metrics/spectral_set.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "spectragen/hsi/io.hpp"
#include "spectragen/numerics/error.hpp"

namespace spectragen::metrics {

namespace {

static_assert(std::endian::native == std::endian::little, "raw spectral sets assume a little-endian host");

std::filesystem::path sidecar(const std::filesystem::path& path) {
    auto s = path;
    s += ".json";
    return s;
}

std::string lower_extension(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

std::string to_string(SetSource source) { return source == SetSource::real ? "real" : "generated"; }

SpectralSet::SpectralSet(std::size_t rows, std::size_t bands, std::vector<double> values, SetSource source)
    : rows_(rows), bands_(bands), values_(std::move(values)), source_(source) {
    if (bands_ < 2) throw DataError("spectral sets need at least 2 bands");
    if (values_.size() != rows_ * bands_) {
        throw DataError("spectral set holds " + std::to_string(values_.size()) + " values, expected " +
                        std::to_string(rows_) + " x " + std::to_string(bands_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw NumericalError("non-finite value in spectral set row " + std::to_string(i / bands_));
        }
    }
}

SpectralSet SpectralSet::select(const std::vector<std::size_t>& indices) const {
    std::vector<double> out(indices.size() * bands_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw DataError("row index out of range");
        std::copy_n(row(indices[i]), bands_, out.begin() + static_cast<std::ptrdiff_t>(i * bands_));
    }
    SpectralSet s;
    s.rows_ = indices.size();
    s.bands_ = bands_;
    s.values_ = std::move(out);
    s.source_ = source_;
    return s;
}

SpectralSet spectral_set_from_cube(const hsi::HsiCube& cube, SetSource source) {
    const std::size_t b = cube.bands(), n = cube.height() * cube.width();
    std::vector<double> values(n * b);
    const auto& v = cube.values();
    for (std::size_t band = 0; band < b; ++band)
        for (std::size_t p = 0; p < n; ++p) values[p * b + band] = v[band * n + p];
    return SpectralSet(n, b, std::move(values), source);
}

SpectralSet load_spectral_set(const std::filesystem::path& path, SetSource source) {
    const auto ext = lower_extension(path);
    if (ext == ".hsc" || ext == ".hdr") return spectral_set_from_cube(hsi::read_cube(path), source);
    std::ifstream meta(sidecar(path));
    if (!meta) throw DataError("missing sidecar " + sidecar(path).string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(sidecar(path).string() + ": " + e.what());
    }
    if (j.value("dtype", std::string("f32le")) != "f32le") throw DataError(path.string() + ": only f32le is supported");
    const auto rows = j.at("rows").get<std::size_t>(), bands = j.at("bands").get<std::size_t>();
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open " + path.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    if (size != rows * bands * sizeof(float)) {
        throw DataError(path.string() + " holds " + std::to_string(size) + " bytes, sidecar implies " +
                        std::to_string(rows * bands * sizeof(float)));
    }
    in.seekg(0);
    std::vector<float> raw(rows * bands);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
    return SpectralSet(rows, bands, std::vector<double>(raw.begin(), raw.end()), source);
}

void save_spectral_set(const SpectralSet& set, const std::filesystem::path& path) {
    std::vector<float> raw(set.values().begin(), set.values().end());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    std::ofstream meta(sidecar(path));
    meta << nlohmann::json{{"rows", set.rows()}, {"bands", set.bands()}, {"dtype", "f32le"}}.dump(2) << '\n';
    if (!out || !meta) throw DataError("cannot write " + path.string());
}

}  // namespace spectragen::metrics
