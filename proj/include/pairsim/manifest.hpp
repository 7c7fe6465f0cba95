#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pairsim {

struct OutputDigest {
    std::string path;  // relative to the manifest directory when possible
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string tool = "pairsim";
    std::string version;
    std::string command;
    nlohmann::json configuration = nlohmann::json::object();
    std::optional<std::uint64_t> master_seed;
    std::string started;   // ISO 8601 UTC
    std::string finished;  // ISO 8601 UTC
    std::vector<OutputDigest> outputs;

    void add_output(const std::filesystem::path& file, const std::filesystem::path& base);
    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string utc_timestamp();

}  // namespace pairsim
