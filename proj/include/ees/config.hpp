#pragma once

// Layered run configuration: defaults < config file < command-line flags <
// EES_* environment variables. Every layer is a flat key/value map, applied
// in that order.
//
// Config file syntax: one `key = value` per line, `#` starts a comment.
// Lists are comma separated (`thresholds = 0.4, 0.4, 0.4`).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ees/engine.hpp"
#include "ees/hec.hpp"

namespace ees {

using KeyValues = std::map<std::string, std::string>;

struct RunConfig {
  EesConfig ees;
  AttentionConfig attention;
  EssentialStrategy essential = EssentialStrategy::max_error;
  std::uint64_t seed = 0;
  bool emit_embeddings = false;
  std::string checkpoint;
  std::string out;

  // Set by `thresholds`; broadcast to `levels` during finalize().
  std::vector<double> raw_thresholds = {0.4};

  void finalize() {
    if (ees.levels < 1) throw ConfigError("levels must be >= 1");
    if (raw_thresholds.size() == 1)
      ees.thresholds.assign(ees.levels, raw_thresholds.front());
    else if (raw_thresholds.size() == ees.levels)
      ees.thresholds = raw_thresholds;
    else
      throw ConfigError("thresholds: give one value or one per level (" + std::to_string(ees.levels) + ")");
    ees.predictor.levels = ees.levels;
    ees.predictor.window_cap = ees.window_cap;
    ees.predictor.seed = seed;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string normalize_key(std::string key) {
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::tolower(c));
  });
  return key;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config '" + key + "': cannot parse '" + value + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(value, &pos);
    if (pos != value.size()) throw ConfigError("");
    return d;
  } catch (...) {
    throw ConfigError("config '" + key + "': cannot parse '" + value + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = normalize_key(value);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config '" + key + "': expected a boolean, got '" + value + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::string cleaned = value;
  std::erase_if(cleaned, [](char c) { return c == '[' || c == ']'; });
  std::size_t pos = 0;
  while (pos <= cleaned.size()) {
    const auto comma = cleaned.find(',', pos);
    const std::string item = trim(cleaned.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (item.empty()) throw ConfigError("config '" + key + "': empty list item");
    out.push_back(parse_double(key, item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace detail

inline KeyValues parse_config_text(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) eq = line.find(':');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::normalize_key(detail::trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

/// EES_* variables from an environ-style array, keys lowercased without the prefix.
inline KeyValues environment_overrides(char** envp) {
  KeyValues kv;
  if (!envp) return kv;
  for (char** e = envp; *e; ++e) {
    std::string_view entry(*e);
    if (!entry.starts_with("EES_")) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    kv[detail::normalize_key(std::string(entry.substr(4, eq - 4)))] = std::string(entry.substr(eq + 1));
  }
  return kv;
}

/// Applies one key; unknown keys are a ConfigError.
inline void apply_setting(RunConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = detail::normalize_key(raw_key);
  const std::string value = detail::trim(raw_value);
  using detail::parse_number;
  if (key == "levels" || key == "layers") {
    cfg.ees.levels = parse_number<std::uint32_t>(key, value);
  } else if (key == "thresholds" || key == "threshold") {
    cfg.raw_thresholds = detail::parse_list(key, value);
  } else if (key == "window_cap") {
    cfg.ees.window_cap = parse_number<std::uint32_t>(key, value);
  } else if (key == "predictor") {
    cfg.ees.predictor.kind = parse_predictor_kind(value);
  } else if (key == "hidden") {
    cfg.ees.predictor.hidden = parse_number<std::uint32_t>(key, value);
  } else if (key == "learning_rate") {
    cfg.ees.predictor.learning_rate = detail::parse_double(key, value);
  } else if (key == "online_learning") {
    cfg.ees.online_learning = detail::parse_bool(key, value);
  } else if (key == "checkpoint") {
    cfg.checkpoint = value;
  } else if (key == "essential") {
    cfg.essential = parse_essential_strategy(value);
  } else if (key == "emit_embeddings") {
    cfg.emit_embeddings = detail::parse_bool(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "attention_scale") {
    cfg.attention.scale = detail::parse_double(key, value);
  } else {
    throw ConfigError("unknown config key '" + raw_key + "'");
  }
}

/// Resolves the layers in order and validates the result.
inline RunConfig resolve_config(const KeyValues& file, const KeyValues& flags, const KeyValues& env) {
  RunConfig cfg;
  for (const KeyValues* layer : {&file, &flags, &env})
    for (const auto& [k, v] : *layer) apply_setting(cfg, k, v);
  cfg.finalize();
  return cfg;
}

}  // namespace ees
