#include "dsft/manifest.hpp"

#include "dsft/error.hpp"
#include "dsft/hash.hpp"

namespace dsft {

namespace fs = std::filesystem;

std::string_view tool_version() { return "0.1.0"; }

void RunManifest::add_artifact(const fs::path& dir, const std::string& relative) {
  artifacts.push_back({relative, sha256_file(dir / relative)});
}

nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool_version"] = m.tool_version;
  j["command"] = m.command;
  j["args"] = m.args;
  j["config"] = m.config;
  j["vocab_hash"] = m.vocab_hash;
  j["corpus_fingerprint"] = m.corpus_fingerprint;
  j["seed"] = m.seed;
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& a : m.artifacts) j["artifacts"].push_back({{"path", a.path}, {"sha256", a.sha256}});
  return j;
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.args = j.value("args", std::vector<std::string>{});
    m.config = j.at("config");
    m.vocab_hash = j.at("vocab_hash").get<std::string>();
    m.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& a : j.at("artifacts")) {
      m.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw input_error(std::string("malformed run manifest: ") + e.what());
  }
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  write_file(dir / kManifestFile, to_json(m).dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& dir_or_file) {
  const fs::path file = fs::is_directory(dir_or_file) ? dir_or_file / kManifestFile : dir_or_file;
  if (!fs::exists(file)) throw input_error("no run manifest at " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw input_error("cannot parse " + file.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

void verify_manifest(const fs::path& dir, const RunManifest& m) {
  for (const auto& a : m.artifacts) {
    const fs::path p = dir / a.path;
    if (!fs::exists(p)) throw integrity_error("artifact missing: " + p.string());
    const std::string actual = sha256_file(p);
    if (actual != a.sha256) {
      throw integrity_error("artifact hash mismatch for " + p.string() + ": manifest " + a.sha256 + ", actual " + actual);
    }
  }
}

}  // namespace dsft
