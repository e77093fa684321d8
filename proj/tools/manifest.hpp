#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace camsim::cli {

inline constexpr std::string_view kToolVersion = "camsim 0.1.0";

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::filesystem::path& path);

struct FileDigest {
    std::string path;
    std::string sha256;
};

/// Record of one command invocation. The run directory is named by the first
/// 16 hex digits of config_digest.
struct RunManifest {
    std::string command;
    /// Canonical configuration: every parsed config, flag, and seed.
    nlohmann::json config;
    std::vector<std::uint64_t> seeds;
    std::vector<FileDigest> inputs;
    std::vector<FileDigest> outputs;

    /// SHA-256 over the canonical config plus the input digests.
    std::string config_digest() const;
    std::string run_name() const { return config_digest().substr(0, 16); }
};

nlohmann::json to_json(const RunManifest& m);

/// Digests every output (paths relative to `run_dir`) and writes
/// manifest.json atomically.
void write_manifest(const std::filesystem::path& run_dir, RunManifest& m,
                    const std::vector<std::filesystem::path>& outputs);

}  // namespace camsim::cli
