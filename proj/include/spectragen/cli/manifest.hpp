#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace spectragen::cli {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/**
 * Collects what one command read and wrote, then emits `config.ini` (the
 * resolved configuration) and `manifest.json` into the output directory.
 *
 * The run id hashes the command, the resolved configuration without its
 * `out` and `threads` keys, and the input digests. Paths are recorded
 * relative to the output directory; nothing time-dependent is stored.
 */
class RunRecord {
public:
    RunRecord(std::string command, std::filesystem::path out_dir, std::string resolved_config, std::uint64_t seed);

    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);
    nlohmann::json& details() { return details_; }
    const std::filesystem::path& out_dir() const { return out_dir_; }

    std::string run_id() const;
    nlohmann::json manifest() const;
    void write() const;

private:
    struct Entry {
        std::string path;
        std::string sha256;
        std::uintmax_t bytes = 0;
    };
    Entry entry(const std::filesystem::path& path) const;

    std::string command_;
    std::filesystem::path out_dir_;
    std::string config_;
    std::uint64_t seed_;
    std::vector<Entry> inputs_;
    std::vector<Entry> outputs_;
    nlohmann::json details_ = nlohmann::json::object();
};

}  // namespace spectragen::cli
