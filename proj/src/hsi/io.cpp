#include "spectragen/hsi/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "spectragen/numerics/error.hpp"

namespace spectragen::hsi {

namespace {

static_assert(std::endian::native == std::endian::little, "cube I/O assumes a little-endian host");

std::vector<char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open " + path.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<char> bytes(size);
    in.read(bytes.data(), static_cast<std::streamsize>(size));
    return bytes;
}

DenseArray decode_f32(const char* data, std::size_t bands, std::size_t height, std::size_t width) {
    DenseArray values({bands, height, width});
    for (std::size_t i = 0; i < values.size(); ++i) {
        float f;
        std::memcpy(&f, data + i * sizeof(float), sizeof(float));
        values[i] = static_cast<double>(f);
    }
    return values;
}

std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::map<std::string, std::string> parse_envi_header(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (trim(line) != "ENVI") throw DataError("ENVI header must start with 'ENVI'");
    std::map<std::string, std::string> fields;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("malformed ENVI header line: " + line);
        std::string key = lower(trim(line.substr(0, eq)));
        std::string value = trim(line.substr(eq + 1));
        if (!value.empty() && value.front() == '{') {
            while (value.find('}') == std::string::npos) {
                std::string more;
                if (!std::getline(in, more)) throw DataError("unterminated brace list for '" + key + "'");
                value += " " + trim(more);
            }
            value = trim(value.substr(1, value.find('}') - 1));
        }
        fields[key] = value;
    }
    return fields;
}

std::size_t envi_size(const std::map<std::string, std::string>& fields, const std::string& key) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw DataError("ENVI header lacks '" + key + "'");
    try {
        std::size_t used = 0;
        const long long v = std::stoll(it->second, &used);
        if (used != it->second.size() || v <= 0) throw std::invalid_argument(key);
        return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
        throw DataError("ENVI field '" + key + "' is not a positive integer: " + it->second);
    }
}

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::logic_error&) {
            throw DataError("bad number in ENVI list: " + token);
        }
    }
    return out;
}

}  // namespace

void write_cube(const HsiCube& cube, const std::filesystem::path& path) {
    const nlohmann::json header = {{"height", cube.height()}, {"width", cube.width()},
                                   {"bands", cube.bands()},   {"wavelengths_nm", cube.wavelengths()},
                                   {"dtype", "f32le"},        {"layout", "bsq"}};
    const std::string text = header.dump();
    const auto length = static_cast<std::uint32_t>(text.size());

    std::vector<float> payload(cube.values().size());
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(cube.values()[i]);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kHscMagic, sizeof(kHscMagic));
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw DataError("write failed for " + path.string());
}

HsiCube read_hsc(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kHscMagic, sizeof(kHscMagic)) != 0) {
        throw DataError(path.string() + ": not an HSC cube (bad magic)");
    }
    std::uint32_t length = 0;
    std::memcpy(&length, bytes.data() + 8, sizeof(length));
    if (12 + static_cast<std::size_t>(length) > bytes.size()) throw DataError(path.string() + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + length);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed header: " + e.what());
    }
    std::size_t height = 0, width = 0, bands = 0;
    std::vector<double> wavelengths;
    try {
        height = header.at("height").get<std::size_t>();
        width = header.at("width").get<std::size_t>();
        bands = header.at("bands").get<std::size_t>();
        wavelengths = header.at("wavelengths_nm").get<std::vector<double>>();
        if (header.at("dtype").get<std::string>() != "f32le") throw DataError(path.string() + ": dtype must be f32le");
        if (header.at("layout").get<std::string>() != "bsq") throw DataError(path.string() + ": layout must be bsq");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed header: " + e.what());
    }
    if (wavelengths.size() != bands) {
        throw DataError(path.string() + ": header declares " + std::to_string(bands) + " bands with " +
                        std::to_string(wavelengths.size()) + " wavelengths");
    }
    const std::size_t expected = height * width * bands * sizeof(float);
    const std::size_t actual = bytes.size() - 12 - length;
    if (expected != actual) {
        throw DataError(path.string() + ": payload has " + std::to_string(actual) + " bytes, header implies " +
                        std::to_string(expected));
    }
    return HsiCube(std::move(wavelengths), decode_f32(bytes.data() + 12 + length, bands, height, width));
}

HsiCube read_envi(const std::filesystem::path& header_path) {
    const auto header_bytes = read_all(header_path);
    const auto fields = parse_envi_header(std::string(header_bytes.begin(), header_bytes.end()));
    const std::size_t width = envi_size(fields, "samples");
    const std::size_t height = envi_size(fields, "lines");
    const std::size_t bands = envi_size(fields, "bands");

    auto get = [&](const std::string& key, const std::string& fallback) {
        const auto it = fields.find(key);
        return it == fields.end() ? fallback : lower(it->second);
    };
    if (get("interleave", "") != "bsq") throw DataError("ENVI interleave must be bsq, got '" + get("interleave", "") + "'");
    if (get("data type", "") != "4") throw DataError("ENVI data type must be 4 (float32)");
    if (get("byte order", "0") != "0") throw DataError("ENVI byte order must be 0 (little endian)");
    if (get("header offset", "0") != "0") throw DataError("ENVI header offset is not supported");
    const auto wl = fields.find("wavelength");
    if (wl == fields.end()) throw DataError("ENVI header lacks 'wavelength'");
    auto wavelengths = parse_number_list(wl->second);
    if (wavelengths.size() != bands) {
        throw DataError("ENVI header declares " + std::to_string(bands) + " bands with " +
                        std::to_string(wavelengths.size()) + " wavelengths");
    }

    std::filesystem::path stem = header_path;
    stem.replace_extension();
    std::filesystem::path data_path;
    for (const char* ext : {"", ".img", ".raw", ".dat"}) {
        std::filesystem::path candidate = stem;
        candidate += ext;
        if (std::filesystem::is_regular_file(candidate)) {
            data_path = candidate;
            break;
        }
    }
    if (data_path.empty()) throw DataError("no ENVI payload found next to " + header_path.string());
    const auto payload = read_all(data_path);
    if (payload.size() != height * width * bands * sizeof(float)) {
        throw DataError(data_path.string() + ": payload size does not match the declared shape");
    }
    return HsiCube(std::move(wavelengths), decode_f32(payload.data(), bands, height, width));
}

HsiCube read_cube(const std::filesystem::path& path) {
    if (lower(path.extension().string()) == ".hdr") return read_envi(path);
    return read_hsc(path);
}

}  // namespace spectragen::hsi
