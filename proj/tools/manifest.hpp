#pragma once

// Run manifest written into every output directory as manifest.json.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mehmm::cli {

inline constexpr const char* kVersion = "1.0.0";

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct InputFile {
  std::string role;  ///< "y", "x", "params", "fit", ...
  std::filesystem::path path;
  std::string sha256;
};

InputFile hash_input(std::string role, const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  nlohmann::json config = nlohmann::json::object();
  std::vector<InputFile> inputs;
  std::vector<std::uint64_t> seeds;
  std::string started;
};

/// UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_now();

/// Writes `dir`/manifest.json with the hashes of every other file in `dir`.
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);
nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace mehmm::cli
