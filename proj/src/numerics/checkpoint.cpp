#include "spectragen/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "spectragen/numerics/error.hpp"

namespace spectragen {

namespace {

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

std::filesystem::path payload_path(const std::filesystem::path& manifest) {
    auto p = manifest;
    p += ".bin";
    return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
                     const std::vector<Parameter>& params) {
    nlohmann::json table = nlohmann::json::array();
    std::vector<float> payload;
    for (const auto& p : params) {
        table.push_back({{"name", p.name()}, {"shape", p.shape()}, {"offset", payload.size()}});
        for (double v : p.value().data()) payload.push_back(static_cast<float>(v));
    }
    nlohmann::json manifest = {{"format", "spectragen-checkpoint"},
                               {"version", 1},
                               {"kind", kind},
                               {"config", config},
                               {"payload", payload_path(path).filename().string()},
                               {"payload_values", payload.size()},
                               {"dtype", "f32le"},
                               {"parameters", table}};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint " + path.string());
        out << manifest.dump(2) << '\n';
    }
    std::ofstream bin(payload_path(path), std::ios::binary);
    if (!bin) throw DataError("cannot write checkpoint payload " + payload_path(path).string());
    bin.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint manifest " + path.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != "spectragen-checkpoint") {
        throw DataError(path.string() + " is not a checkpoint manifest");
    }
    CheckpointData data;
    data.kind = manifest.at("kind").get<std::string>();
    data.config = manifest.at("config");
    data.parameters = manifest.at("parameters");
    const auto count = manifest.at("payload_values").get<std::size_t>();
    const auto bin_path = path.parent_path() / manifest.at("payload").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
    if (!bin) throw DataError("cannot open checkpoint payload " + bin_path.string());
    const auto bytes = static_cast<std::size_t>(bin.tellg());
    if (bytes != count * sizeof(float)) {
        throw DataError("checkpoint payload holds " + std::to_string(bytes) + " bytes, manifest declares " +
                        std::to_string(count) + " values");
    }
    bin.seekg(0);
    data.payload.resize(count);
    bin.read(reinterpret_cast<char*>(data.payload.data()), static_cast<std::streamsize>(bytes));
    return data;
}

void load_parameters(const CheckpointData& data, std::vector<Parameter>& params) {
    if (data.parameters.size() != params.size()) {
        throw DataError("checkpoint has " + std::to_string(data.parameters.size()) + " parameters, model has " +
                        std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = data.parameters[i];
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<Shape>();
        if (name != params[i].name() || shape != params[i].shape()) {
            throw DataError("checkpoint parameter " + name + shape_string(shape) + " does not match model parameter " +
                            params[i].name() + shape_string(params[i].shape()));
        }
        const auto offset = entry.at("offset").get<std::size_t>();
        DenseArray& value = params[i].value();
        if (offset + value.size() > data.payload.size()) throw DataError("checkpoint payload too short for " + name);
        for (std::size_t j = 0; j < value.size(); ++j) value[j] = static_cast<double>(data.payload[offset + j]);
        params[i].zero_grad();
    }
}

}  // namespace spectragen
