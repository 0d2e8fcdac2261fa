/**
 * @file config.hpp
 * @brief Flat "key = value" settings shared by every CLI command.
 *
 * Blank lines and lines starting with '#' are ignored. Unknown keys and
 * unparsable values raise ConfigError. Command-line flags are applied on top
 * of whatever the file sets.
 */
#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "popgen/corpus.hpp"
#include "popgen/model.hpp"
#include "popgen/profile.hpp"
#include "popgen/synth.hpp"

namespace popgen {

struct Settings {
  std::uint64_t seed = 1;
  int jobs = 1;
  CategorizeConfig categorize;
  ProfileConfig profile;
  ModelConfig model;
  double temperature = 1.0;
  double dp_lambda = 1.0;
  double seconds = 50.0;
  int scale_type = 0;  // 0 = random
  std::string root = "C";

  ProfileConfig profile_config() const {
    ProfileConfig p = profile;
    p.seed = seed;
    return p;
  }

  ModelConfig model_config() const {
    ModelConfig m = model;
    m.seed = seed;
    m.jobs = jobs;
    return m;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("config: bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return v;
}

template <typename T>
std::string to_text(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  std::function<void(Settings&, std::string_view)> set;
  std::function<std::string(const Settings&)> get;
};

template <typename T>
Field number_field(T Settings::*member) {
  return {[member](Settings& s, std::string_view v) { s.*member = parse_number<T>("", v); },
          [member](const Settings& s) { return to_text(s.*member); }};
}

template <typename Outer, typename T>
Field nested_field(Outer Settings::*outer, T Outer::*member) {
  return {[outer, member](Settings& s, std::string_view v) { (s.*outer).*member = parse_number<T>("", v); },
          [outer, member](const Settings& s) { return to_text((s.*outer).*member); }};
}

// Ordered so that dump output is stable.
inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"seed", number_field(&Settings::seed)},
      {"jobs", number_field(&Settings::jobs)},
      {"chord_change_max", nested_field(&Settings::categorize, &CategorizeConfig::chord_change_max)},
      {"chord_min_simultaneous", nested_field(&Settings::categorize, &CategorizeConfig::chord_min_simultaneous)},
      {"profile_clusters", nested_field(&Settings::profile, &ProfileConfig::clusters)},
      {"profile_window", nested_field(&Settings::profile, &ProfileConfig::window_steps)},
      {"profile_smoothing", nested_field(&Settings::profile, &ProfileConfig::smoothing_window)},
      {"kmeans_iterations", nested_field(&Settings::profile, &ProfileConfig::max_iterations)},
      {"hidden_dim", nested_field(&Settings::model, &ModelConfig::hidden_dim)},
      {"epochs", nested_field(&Settings::model, &ModelConfig::epochs)},
      {"learning_rate", nested_field(&Settings::model, &ModelConfig::learning_rate)},
      {"lr_decay", nested_field(&Settings::model, &ModelConfig::lr_decay)},
      {"bptt", nested_field(&Settings::model, &ModelConfig::bptt)},
      {"temperature", number_field(&Settings::temperature)},
      {"dp_lambda", number_field(&Settings::dp_lambda)},
      {"seconds", number_field(&Settings::seconds)},
      {"scale_type", number_field(&Settings::scale_type)},
      {"root", {[](Settings& s, std::string_view v) { s.root = std::string(v); },
                [](const Settings& s) { return s.root; }}},
  };
  return table;
}

}  // namespace detail

/// Range checks that the individual parsers cannot express.
inline void validate(const Settings& s) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(s.jobs >= 1, "jobs must be >= 1");
  require(s.profile.clusters >= 1 && s.profile.clusters <= kNumProfiles, "profile_clusters must be in 1..10");
  require(s.profile.window_steps >= 1, "profile_window must be >= 1");
  require(s.profile.smoothing_window >= 1, "profile_smoothing must be >= 1");
  require(s.profile.max_iterations >= 1, "kmeans_iterations must be >= 1");
  require(s.model.hidden_dim >= 1, "hidden_dim must be >= 1");
  require(s.model.epochs >= 0, "epochs must be >= 0");
  require(s.model.learning_rate >= 0.0, "learning_rate must be >= 0");
  require(s.model.bptt >= 1, "bptt must be >= 1");
  require(s.temperature >= 0.0, "temperature must be >= 0");
  require(s.dp_lambda >= 0.0, "dp_lambda must be >= 0");
  require(s.seconds > 0.0, "seconds must be > 0");
  require(s.scale_type >= 0 && s.scale_type <= kNumScaleTypes, "scale_type must be in 0..4");
  require(s.root == "random" || parse_tone(s.root).has_value(), "root must be a tone name such as C, F# or Bb, or random");
}

inline void set_value(Settings& s, const std::string& key, std::string_view value) {
  const auto& f = detail::fields();
  const auto it = f.find(key);
  if (it == f.end()) throw ConfigError("config: unknown key '" + key + "'");
  try {
    it->second.set(s, detail::trim(value));
  } catch (const ConfigError&) {
    throw ConfigError("config: bad value '" + std::string(detail::trim(value)) + "' for " + key);
  }
}

inline Settings parse_settings(std::string_view text, Settings s = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view l = detail::trim(line);
    if (l.empty() || l.front() == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
    }
    set_value(s, std::string(detail::trim(l.substr(0, eq))), l.substr(eq + 1));
  }
  return s;
}

inline std::map<std::string, std::string> settings_map(const Settings& s) {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : detail::fields()) out[key] = field.get(s);
  return out;
}

/// Parsing the dump yields the same settings.
inline std::string dump_settings(const Settings& s) {
  std::string out;
  for (const auto& [key, value] : settings_map(s)) out += key + " = " + value + "\n";
  return out;
}

}  // namespace popgen
