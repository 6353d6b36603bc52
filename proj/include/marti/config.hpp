#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "marti/agent.hpp"

namespace marti {

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity" || v == "off") return std::numeric_limits<double>::infinity();
  std::istringstream is(v);
  is.imbue(std::locale::classic());
  double out = 0.0;
  is >> out;
  if (!is || !is.eof() || !std::isfinite(out))
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

inline std::string format_real(double x) {
  if (std::isinf(x)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Field {
  std::function<void(AgentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const AgentConfig&)> get;
};

template <typename T>
Field uint_field(T AgentConfig::*member) {
  return {[member](AgentConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(parse_uint(k, v));
          },
          [member](const AgentConfig& c) { return std::to_string(c.*member); }};
}

template <typename S, typename T>
Field uint_field(S AgentConfig::*group, T S::*member) {
  return {[group, member](AgentConfig& c, const std::string& k, const std::string& v) {
            (c.*group).*member = static_cast<T>(parse_uint(k, v));
          },
          [group, member](const AgentConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename S>
Field real_field(S AgentConfig::*group, double S::*member) {
  return {[group, member](AgentConfig& c, const std::string& k, const std::string& v) {
            (c.*group).*member = parse_real(k, v);
          },
          [group, member](const AgentConfig& c) { return format_real((c.*group).*member); }};
}

inline Field real_field(double AgentConfig::*member) {
  return {[member](AgentConfig& c, const std::string& k, const std::string& v) { c.*member = parse_real(k, v); },
          [member](const AgentConfig& c) { return format_real(c.*member); }};
}

inline Field bool_field(bool AgentConfig::*member) {
  return {[member](AgentConfig& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); },
          [member](const AgentConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

inline const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"p", uint_field(&AgentConfig::p)},
      {"m", uint_field(&AgentConfig::m)},
      {"columns_per_subset", uint_field(&AgentConfig::columns_per_subset)},
      {"action_clusters", uint_field(&AgentConfig::action_clusters)},
      {"disjoint_subsets", bool_field(&AgentConfig::disjoint_subsets)},
      {"inhibit_unchanged", bool_field(&AgentConfig::inhibit_unchanged)},
      {"epsilon", real_field(&AgentConfig::epsilon)},
      {"defer_inner_reward", bool_field(&AgentConfig::defer_inner_reward)},
      {"seed", uint_field(&AgentConfig::seed)},
      {"l1.unique_limit", uint_field(&AgentConfig::layer1, &Layer1Params::unique_limit)},
      {"l1.clusters", uint_field(&AgentConfig::layer1, &Layer1Params::clusters)},
      {"l1.word_threshold", uint_field(&AgentConfig::layer1, &Layer1Params::word_threshold)},
      {"l1.decay", real_field(&AgentConfig::layer1, &Layer1Params::decay)},
      {"l1.reward_memory", uint_field(&AgentConfig::layer1, &Layer1Params::reward_memory)},
      {"l2.word_threshold", uint_field(&AgentConfig::layer2, &Layer2Params::word_threshold)},
      {"l2.decay", real_field(&AgentConfig::layer2, &Layer2Params::decay)},
      {"l2.reward_memory", uint_field(&AgentConfig::layer2, &Layer2Params::reward_memory)},
      {"l2.max_word_len", uint_field(&AgentConfig::layer2, &Layer2Params::max_word_len)},
      {"l2.max_vocab", uint_field(&AgentConfig::layer2, &Layer2Params::max_vocab)},
      {"surprise.threshold", real_field(&AgentConfig::surprise, &SurpriseParams::threshold)},
      {"surprise.margin", real_field(&AgentConfig::surprise, &SurpriseParams::margin)},
      {"surprise.cooldown", uint_field(&AgentConfig::surprise, &SurpriseParams::cooldown)},
      {"surprise.streak",
       {[](AgentConfig& c, const std::string& k, const std::string& v) { c.surprise.streak = parse_bool(k, v); },
        [](const AgentConfig& c) { return std::string(c.surprise.streak ? "true" : "false"); }}},
  };
  return table;
}

}  // namespace detail

/// Sets one field by its config-file key.
inline void apply_setting(AgentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : detail::fields())
    if (name == key) {
      field.set(config, key, detail::trim(value));
      return;
    }
  throw ConfigError("config: unknown key '" + key + "'");
}

/// Applies "key = value" lines; '#' starts a comment. Later lines win.
inline void apply_config_text(AgentConfig& config, std::istream& in, const std::string& origin = "config") {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(config, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(AgentConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  apply_config_text(config, in, path);
}

/// Every key with its current value, one "key = value" line each.
inline std::string config_to_text(const AgentConfig& config) {
  std::string out;
  for (const auto& [name, field] : detail::fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : detail::fields()) keys.push_back(name);
  return keys;
}

/// Built-in defaults tuned per environment; unknown names get AgentConfig{}.
inline AgentConfig default_config(const std::string& env) {
  AgentConfig c;
  if (env == "catch") {
    c.p = 3;
    c.m = 1;
    c.disjoint_subsets = true;
    c.layer1.unique_limit = 4;
    c.layer1.clusters = 5;
    c.layer1.reward_memory = 5;
    c.layer2.word_threshold = 20;
    c.layer2.decay = 0.8;
    c.layer2.reward_memory = 6;
  } else if (env == "minipong") {
    c.p = 24;
    c.m = 2;
    c.layer1.unique_limit = 30;
    c.layer1.clusters = 16;
    c.layer1.reward_memory = 5;
    c.layer2.word_threshold = 20;
    c.layer2.decay = 0.9;
    c.layer2.reward_memory = 10;
  }
  return c;
}

}  // namespace marti
