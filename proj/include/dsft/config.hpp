#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dsft/tokenizer.hpp"
#include "dsft/trainer.hpp"

namespace dsft {

/// Flat UTF-8 key=value configuration with dotted keys. '#' starts a comment line.
class ConfigMap {
 public:
  static ConfigMap parse(std::string_view text);
  static ConfigMap load(const std::filesystem::path& path);
  static ConfigMap from_json(const nlohmann::json& j);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// "key=value"
  void set_assignment(std::string_view assignment);
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string serialize() const;
  nlohmann::ordered_json to_json() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Every key the tool understands, with its default, in serialization order.
const std::map<std::string, std::string>& default_config_values();

/// Defaults overlaid with cfg; unknown keys and malformed values raise input_error.
TrainConfig train_config_from(const ConfigMap& cfg);
TokenizerSettings tokenizer_settings_from(const ConfigMap& cfg);

/// The full resolved key set (defaults plus overrides); what manifests record.
ConfigMap resolved(const ConfigMap& cfg);

}  // namespace dsft
