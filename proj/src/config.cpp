#include "dsft/config.hpp"

#include <charconv>
#include <sstream>

#include "dsft/error.hpp"
#include "dsft/hash.hpp"

namespace dsft {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double as_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw input_error("config: " + key + " expects a number, got '" + v + "'");
  }
}

long as_long(const std::string& key, const std::string& v) {
  long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw input_error("config: " + key + " expects an integer, got '" + v + "'");
  }
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw input_error("config: " + key + " expects true/false, got '" + v + "'");
}

}  // namespace

ConfigMap ConfigMap::parse(std::string_view text) {
  ConfigMap m;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw input_error("config line " + std::to_string(lineno) + ": expected key=value");
    m.values_[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  return m;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) { return parse(read_file(path)); }

ConfigMap ConfigMap::from_json(const nlohmann::json& j) {
  ConfigMap m;
  for (auto it = j.begin(); it != j.end(); ++it) {
    m.values_[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
  }
  return m;
}

void ConfigMap::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw input_error("expected key=value, got '" + std::string(assignment) + "'");
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::string ConfigMap::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

nlohmann::ordered_json ConfigMap::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

const std::map<std::string, std::string>& default_config_values() {
  static const std::map<std::string, std::string> defaults = {
      {"mode", "dsft"},
      {"seed", "1"},
      {"lr", "0.0003"},
      {"batch_size", "16"},
      {"steps", "2000"},
      {"w_num", "2.0"},
      {"workers", "1"},
      {"checkpoint_every", "0"},
      {"loss.reduction", "mean"},
      {"epsilon", "0.01"},
      {"base", "r-min"},
      {"base_ratio", "0.15"},
      {"number_fraction", "0.3"},
      {"span_prob", "0.1"},
      {"span_len", "3"},
      {"curriculum.r_min", "0.10"},
      {"curriculum.r_max", "0.20"},
      {"curriculum.total_steps", "auto"},  // auto: the number of training steps
      {"enable.number_first", "true"},
      {"enable.span", "true"},
      {"enable.curriculum", "true"},
      {"enable.weighted_loss", "true"},
      {"model.layers", "4"},
      {"model.heads", "4"},
      {"model.d_model", "128"},
      {"model.d_ff", "512"},
      {"model.max_len", "256"},
      {"adam.beta1", "0.9"},
      {"adam.beta2", "0.999"},
      {"adam.eps", "1e-8"},
      {"tokenizer.min_freq", "2"},
      {"eval.ratio", "0.15"},
      {"eval.seed", "1234"},
      {"decode.steps", "0"},
      {"decode.temperature", "0"},
  };
  return defaults;
}

ConfigMap resolved(const ConfigMap& cfg) {
  ConfigMap out;
  const auto& defaults = default_config_values();
  for (const auto& [k, v] : defaults) out.set(k, v);
  for (const auto& [k, v] : cfg.values()) {
    if (!defaults.count(k)) throw input_error("config: unknown key '" + k + "'");
    out.set(k, v);
  }
  return out;
}

TrainConfig train_config_from(const ConfigMap& cfg) {
  const ConfigMap r = resolved(cfg);
  const auto& v = r.values();
  const auto get = [&](const char* k) { return v.at(k); };
  TrainConfig c;
  c.mode = parse_train_mode(get("mode"));
  c.seed = static_cast<std::uint64_t>(as_long("seed", get("seed")));
  c.lr = as_double("lr", get("lr"));
  c.batch_size = static_cast<int>(as_long("batch_size", get("batch_size")));
  c.steps = as_long("steps", get("steps"));
  c.w_num = as_double("w_num", get("w_num"));
  c.workers = static_cast<int>(as_long("workers", get("workers")));
  c.checkpoint_every = as_long("checkpoint_every", get("checkpoint_every"));
  const auto red = get("loss.reduction");
  if (red != "mean" && red != "sum") throw input_error("config: loss.reduction must be mean or sum");
  c.reduction = red == "sum" ? LossReduction::Sum : LossReduction::Mean;

  auto& m = c.mask;
  m.epsilon = as_double("epsilon", get("epsilon"));
  m.base = parse_base_policy(get("base"));
  m.base_ratio = as_double("base_ratio", get("base_ratio"));
  m.number_fraction = as_double("number_fraction", get("number_fraction"));
  m.span_prob = as_double("span_prob", get("span_prob"));
  m.span_len = static_cast<int>(as_long("span_len", get("span_len")));
  m.schedule.r_min = as_double("curriculum.r_min", get("curriculum.r_min"));
  m.schedule.r_max = as_double("curriculum.r_max", get("curriculum.r_max"));
  const auto total = get("curriculum.total_steps");
  m.schedule.total_steps = total == "auto" ? std::max(c.steps, 1L) : as_long("curriculum.total_steps", total);
  m.enable.number_first = as_bool("enable.number_first", get("enable.number_first"));
  m.enable.span = as_bool("enable.span", get("enable.span"));
  m.enable.curriculum = as_bool("enable.curriculum", get("enable.curriculum"));
  m.enable.weighted_loss = as_bool("enable.weighted_loss", get("enable.weighted_loss"));

  c.model.layers = static_cast<int>(as_long("model.layers", get("model.layers")));
  c.model.heads = static_cast<int>(as_long("model.heads", get("model.heads")));
  c.model.d_model = static_cast<int>(as_long("model.d_model", get("model.d_model")));
  c.model.d_ff = static_cast<int>(as_long("model.d_ff", get("model.d_ff")));
  c.model.max_len = static_cast<int>(as_long("model.max_len", get("model.max_len")));
  c.adam.beta1 = as_double("adam.beta1", get("adam.beta1"));
  c.adam.beta2 = as_double("adam.beta2", get("adam.beta2"));
  c.adam.eps = as_double("adam.eps", get("adam.eps"));
  m.validate();
  return c;
}

TokenizerSettings tokenizer_settings_from(const ConfigMap& cfg) {
  const ConfigMap r = resolved(cfg);
  TokenizerSettings s;
  s.min_freq = static_cast<int>(as_long("tokenizer.min_freq", r.values().at("tokenizer.min_freq")));
  if (s.min_freq < 1) throw input_error("config: tokenizer.min_freq must be >= 1");
  return s;
}

}  // namespace dsft
