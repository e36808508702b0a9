#include "spectragen/cli/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <memory>
#include <sstream>

#include "spectragen/numerics/error.hpp"

#ifndef SPECTRAGEN_VERSION
#define SPECTRAGEN_VERSION "unknown"
#endif

namespace spectragen::cli {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
    }
    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
        static const char* digits = "0123456789abcdef";
        std::string s;
        for (unsigned int i = 0; i < len; ++i) {
            s += digits[md[i] >> 4];
            s += digits[md[i] & 15];
        }
        return s;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string relative_to(const std::filesystem::path& path, const std::filesystem::path& base) {
    const auto rel = std::filesystem::absolute(path).lexically_normal().lexically_relative(
        std::filesystem::absolute(base).lexically_normal());
    return rel.empty() ? path.generic_string() : rel.generic_string();
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

RunRecord::RunRecord(std::string command, std::filesystem::path out_dir, std::string resolved_config,
                     std::uint64_t seed)
    : command_(std::move(command)), out_dir_(std::move(out_dir)), config_(std::move(resolved_config)), seed_(seed) {}

RunRecord::Entry RunRecord::entry(const std::filesystem::path& path) const {
    return {relative_to(path, out_dir_), sha256_file(path), std::filesystem::file_size(path)};
}

void RunRecord::add_input(const std::filesystem::path& path) { inputs_.push_back(entry(path)); }

void RunRecord::add_output(const std::filesystem::path& path) { outputs_.push_back(entry(path)); }

std::string RunRecord::run_id() const {
    std::ostringstream key;
    key << command_ << '\n';
    std::istringstream lines(config_);
    for (std::string line; std::getline(lines, line);) {
        if (line.rfind("out=", 0) == 0 || line.rfind("threads=", 0) == 0) continue;
        key << line << '\n';
    }
    for (const auto& in : inputs_) key << in.sha256 << '\n';
    return sha256_hex(key.str()).substr(0, 16);
}

nlohmann::json RunRecord::manifest() const {
    auto listing = [](std::vector<Entry> entries) {
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.path < b.path; });
        nlohmann::json j = nlohmann::json::array();
        for (const auto& e : entries) j.push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
        return j;
    };
    return {{"tool", "spectragen"},
            {"version", SPECTRAGEN_VERSION},
            {"command", command_},
            {"run_id", run_id()},
            {"seed", seed_},
            {"config", "config.ini"},
            {"inputs", listing(inputs_)},
            {"outputs", listing(outputs_)},
            {"details", details_}};
}

void RunRecord::write() const {
    std::filesystem::create_directories(out_dir_);
    {
        std::ofstream cfg(out_dir_ / "config.ini");
        cfg << config_;
        if (!cfg) throw DataError("cannot write " + (out_dir_ / "config.ini").string());
    }
    std::ofstream m(out_dir_ / "manifest.json");
    m << manifest().dump(2) << '\n';
    if (!m) throw DataError("cannot write " + (out_dir_ / "manifest.json").string());
}

}  // namespace spectragen::cli
