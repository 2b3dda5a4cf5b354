#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace dsft {

inline constexpr std::string_view kManifestFile = "manifest.json";
std::string_view tool_version();

struct Artifact {
  std::string path;  // relative to the manifest's directory
  std::string sha256;
};

struct RunManifest {
  std::string tool_version;
  std::string command;
  std::vector<std::string> args;  // flags as given, for the record
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::string vocab_hash;
  std::string corpus_fingerprint;
  std::uint64_t seed = 0;
  std::vector<Artifact> artifacts;

  /// Hashes `relative` inside `dir` and records it.
  void add_artifact(const std::filesystem::path& dir, const std::string& relative);
};

nlohmann::ordered_json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Writes dir/manifest.json.
void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
/// Reads dir/manifest.json (or the file itself) without checking artifacts.
RunManifest read_manifest(const std::filesystem::path& dir_or_file);
/// Recomputes every artifact hash; throws integrity_error on the first mismatch or missing file.
void verify_manifest(const std::filesystem::path& dir, const RunManifest& m);

}  // namespace dsft
