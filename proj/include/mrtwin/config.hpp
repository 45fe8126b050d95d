// Copyright 2026 The mrtwin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mrtwin/crash_eval.hpp"
#include "mrtwin/errors.hpp"
#include "mrtwin/json_io.hpp"
#include "mrtwin/mr.hpp"
#include "mrtwin/odd.hpp"
#include "mrtwin/protocol.hpp"
#include "mrtwin/sut.hpp"
#include "mrtwin/transform.hpp"

namespace mrtwin {

/// Built-in ODD used when a config does not override it.
inline OddSpec default_odd() {
  OddSpec odd;
  odd.environment.lighting = Range{0.2, 0.8};
  odd.environment.visibility_min = 0.1;
  odd.environment.weather = std::set<Weather>{Weather::clear, Weather::rain, Weather::snow, Weather::fog};
  odd.environment.temperature_c = Range{-20.0, 45.0};
  odd.time_of_day_h = Range{0.0, 24.0};
  return odd;
}

inline Json default_generator_settings() {
  return Json{{"strength", 0.2},
              {"guidance_scale", 10.0},
              {"negative_prompt", "low quality, distorted, cartoonish, unrealistic"}};
}

struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  std::filesystem::path runs_dir = "runs";
  std::string run_id;  // empty: derived from the seed and clock
  bool keep_twins = true;
  // [odd]
  OddSpec odd = default_odd();
  // [mr] and [temporal]
  std::vector<std::string> enabled{"mr1", "mr2", "mr3"};
  MrDefaults mr;
  std::size_t window = 15;
  double epsilon_t = 0.1;
  // [backend]
  BackendKind backend = BackendKind::builtin;
  ExternalGeneratorConfig generator{"", {}, kDefaultGeneratorTimeout, default_generator_settings()};
  RetryPolicy retry;
  // [sut]
  SutKind sut = SutKind::stub;
  ExternalSutConfig sut_external;
  // [eval]
  double eval_window_s = 5.0;
  double bin_width = 0.5;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& item : split_csv_line(text)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigInvalid(key + ": expected a boolean, got '" + v + "'");
}

inline double parse_cfg_double(const std::string& v, const std::string& key) {
  try {
    return parse_double(v, key);
  } catch (const SchemaMismatch&) {
    throw ConfigInvalid(key + ": expected a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_cfg_count(const std::string& v, const std::string& key) {
  try {
    return parse_count(v, key);
  } catch (const SchemaMismatch&) {
    throw ConfigInvalid(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

inline Range parse_range(const std::string& v, const std::string& key) {
  const auto parts = split_csv_line(v);
  if (parts.size() != 2) throw ConfigInvalid(key + ": expected 'lo,hi', got '" + v + "'");
  Range r{parse_cfg_double(parts[0], key), parse_cfg_double(parts[1], key)};
  if (!(r.lo <= r.hi)) throw ConfigInvalid(key + ": lo must not exceed hi");
  return r;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

}  // namespace detail

/// Semantic checks shared by file and programmatic configs.
inline void validate_config(const RunConfig& c) {
  if (c.window == 0) throw ConfigInvalid("temporal.window must be positive");
  if (!(c.epsilon_t > 0.0)) throw ConfigInvalid("temporal.epsilon_t must be positive");
  if (!(c.mr.epsilon_p > 0.0) || !(c.mr.epsilon_d > 0.0) || !(c.mr.theta_u > 0.0)) {
    throw ConfigInvalid("epsilon_p, epsilon_d and theta_u must be positive");
  }
  if (c.retry.max_attempts < 1) throw ConfigInvalid("backend.max_attempts must be at least 1");
  if (!(c.retry.similarity_floor >= 0.0 && c.retry.similarity_floor <= 1.0)) {
    throw ConfigInvalid("backend.similarity_floor must lie in [0,1]");
  }
  if (c.backend == BackendKind::external && c.generator.command.empty()) {
    throw ConfigInvalid("backend.kind = external needs backend.command");
  }
  if (c.sut == SutKind::external && c.sut_external.command.empty()) {
    throw ConfigInvalid("sut.kind = external needs sut.command");
  }
  if (!(c.eval_window_s > 0.0) || !(c.bin_width > 0.0)) {
    throw ConfigInvalid("eval.window_s and eval.bin_width must be positive");
  }
  if (c.enabled.empty()) throw ConfigInvalid("mr.enabled selects no MR");
  try {
    validate(c.odd);
  } catch (const Error& e) {
    throw ConfigInvalid(std::string("odd: ") + e.what());
  }
}

/// Parses INI text. Unknown sections and keys are rejected so that typos do
/// not silently fall back to defaults. `connectivity.<tag> = a,b` keys add
/// connectivity constraints on frame tag `<tag>`.
///
/// `overrides` are `section.key=value` strings applied on top of the file,
/// e.g. `mr.mr2.density=1.0`.
inline RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigInvalid(std::string("config: ") + e.what());
  }
  for (const auto& item : overrides) {
    const auto dot = item.find('.');
    const auto eq = item.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq || dot == 0 || eq == dot + 1) {
      throw ConfigInvalid("override must look like section.key=value: '" + item + "'");
    }
    const std::string section = item.substr(0, dot);
    const std::string key = detail::trim(item.substr(dot + 1, eq - dot - 1));
    auto sec = tree.get_child_optional(pt::ptree::path_type(section, '/'));
    pt::ptree& node = sec ? *sec : tree.put_child(pt::ptree::path_type(section, '/'), pt::ptree());
    node.put(pt::ptree::path_type(key, '/'), detail::trim(item.substr(eq + 1)));
  }

  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigInvalid("config: key '" + section + "' outside any section");
    }
    for (const auto& [key, node] : body) {
      const std::string v = detail::trim(node.data());
      const std::string where = section + "." + key;
      using namespace detail;
      if (section == "run") {
        if (key == "seed") c.seed = parse_cfg_count(v, where);
        else if (key == "runs_dir") c.runs_dir = v;
        else if (key == "run_id") c.run_id = v;
        else if (key == "keep_twins") c.keep_twins = parse_bool(v, where);
        else throw ConfigInvalid("config: unknown key " + where);
      } else if (section == "odd") {
        if (key == "lighting") c.odd.environment.lighting = parse_range(v, where);
        else if (key == "visibility_min") c.odd.environment.visibility_min = parse_cfg_double(v, where);
        else if (key == "temperature") c.odd.environment.temperature_c = parse_range(v, where);
        else if (key == "time_of_day") c.odd.time_of_day_h = parse_range(v, where);
        else if (key == "weather") {
          std::set<Weather> w;
          try {
            for (const auto& item : split_list(v)) w.insert(parse_weather(item));
          } catch (const InvalidOddSpec& e) {
            throw ConfigInvalid(where + ": " + e.what());
          }
          c.odd.environment.weather = w;
        } else if (key.starts_with("connectivity.") && key.size() > 13) {
          const std::string tag = key.substr(13);
          c.odd.connectivity.push_back(
              {"conn." + tag, std::string(kTagPrefix) + tag, std::nullopt, split_list(v)});
        } else {
          throw ConfigInvalid("config: unknown key " + where);
        }
      } else if (section == "mr") {
        if (key == "enabled") c.enabled = split_list(v);
        else if (key == "epsilon_p") c.mr.epsilon_p = parse_cfg_double(v, where);
        else if (key == "epsilon_d") c.mr.epsilon_d = parse_cfg_double(v, where);
        else if (key == "mr1.amplitude") c.mr.mr1_amplitude = parse_cfg_double(v, where);
        else if (key == "mr2.density") c.mr.mr2_density = parse_cfg_double(v, where);
        else if (key == "mr3.narrow") c.mr.mr3_narrow = parse_cfg_double(v, where);
        else throw ConfigInvalid("config: unknown key " + where);
      } else if (section == "temporal") {
        if (key == "window") c.window = parse_cfg_count(v, where);
        else if (key == "epsilon_t") c.epsilon_t = parse_cfg_double(v, where);
        else if (key == "theta_u") c.mr.theta_u = parse_cfg_double(v, where);
        else throw ConfigInvalid("config: unknown key " + where);
      } else if (section == "backend") {
        if (key == "kind") {
          if (v == "builtin") c.backend = BackendKind::builtin;
          else if (v == "external") c.backend = BackendKind::external;
          else throw ConfigInvalid(where + ": expected builtin or external");
        } else if (key == "command") c.generator.command = v;
        else if (key == "workdir") c.generator.workdir = v;
        else if (key == "timeout_ms") c.generator.timeout = std::chrono::milliseconds(parse_cfg_count(v, where));
        else if (key == "similarity_floor") c.retry.similarity_floor = parse_cfg_double(v, where);
        else if (key == "max_attempts") c.retry.max_attempts = static_cast<int>(parse_cfg_count(v, where));
        else if (key == "strength") c.generator.settings["strength"] = parse_cfg_double(v, where);
        else if (key == "guidance_scale") c.generator.settings["guidance_scale"] = parse_cfg_double(v, where);
        else if (key == "negative_prompt") c.generator.settings["negative_prompt"] = v;
        else throw ConfigInvalid("config: unknown key " + where);
      } else if (section == "sut") {
        if (key == "kind") {
          if (v == "stub") c.sut = SutKind::stub;
          else if (v == "external") c.sut = SutKind::external;
          else throw ConfigInvalid(where + ": expected stub or external");
        } else if (key == "command") c.sut_external.command = v;
        else if (key == "workdir") c.sut_external.workdir = v;
        else if (key == "timeout_ms") c.sut_external.timeout = std::chrono::milliseconds(parse_cfg_count(v, where));
        else throw ConfigInvalid("config: unknown key " + where);
      } else if (section == "eval") {
        if (key == "window_s") c.eval_window_s = parse_cfg_double(v, where);
        else if (key == "bin_width") c.bin_width = parse_cfg_double(v, where);
        else throw ConfigInvalid("config: unknown key " + where);
      } else {
        throw ConfigInvalid("config: unknown section [" + section + "]");
      }
    }
  }
  validate_config(c);
  for (const auto* dir : {&c.generator.workdir, &c.sut_external.workdir}) {
    if (!dir->empty() && !std::filesystem::is_directory(*dir)) {
      throw ConfigInvalid("working directory does not exist: " + dir->string());
    }
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

/// INI rendering; `parse_config(dump_config(c))` reproduces `c`.
inline std::string dump_config(const RunConfig& c) {
  using detail::format_double;
  std::ostringstream os;
  const auto range = [](const Range& r) { return format_double(r.lo) + "," + format_double(r.hi); };
  os << "[run]\n"
     << "seed = " << c.seed << "\n"
     << "runs_dir = " << c.runs_dir.string() << "\n";
  if (!c.run_id.empty()) os << "run_id = " << c.run_id << "\n";
  os << "keep_twins = " << (c.keep_twins ? "true" : "false") << "\n\n";

  os << "[odd]\n";
  const auto& env = c.odd.environment;
  if (env.lighting) os << "lighting = " << range(*env.lighting) << "\n";
  if (env.visibility_min) os << "visibility_min = " << format_double(*env.visibility_min) << "\n";
  if (env.weather) {
    std::vector<std::string> names;
    for (Weather w : *env.weather) names.push_back(to_string(w));
    os << "weather = " << detail::join(names) << "\n";
  }
  if (c.odd.time_of_day_h) os << "time_of_day = " << range(*c.odd.time_of_day_h) << "\n";
  if (env.temperature_c) os << "temperature = " << range(*env.temperature_c) << "\n";
  for (const auto& k : c.odd.connectivity) {
    os << "connectivity." << k.property.substr(kTagPrefix.size()) << " = " << detail::join(k.allowed) << "\n";
  }

  os << "\n[mr]\n"
     << "enabled = " << detail::join(c.enabled) << "\n"
     << "epsilon_p = " << format_double(c.mr.epsilon_p) << "\n"
     << "epsilon_d = " << format_double(c.mr.epsilon_d) << "\n"
     << "mr1.amplitude = " << format_double(c.mr.mr1_amplitude) << "\n"
     << "mr2.density = " << format_double(c.mr.mr2_density) << "\n"
     << "mr3.narrow = " << format_double(c.mr.mr3_narrow) << "\n\n";

  os << "[temporal]\n"
     << "window = " << c.window << "\n"
     << "epsilon_t = " << format_double(c.epsilon_t) << "\n"
     << "theta_u = " << format_double(c.mr.theta_u) << "\n\n";

  os << "[backend]\n"
     << "kind = " << (c.backend == BackendKind::builtin ? "builtin" : "external") << "\n";
  if (!c.generator.command.empty()) os << "command = " << c.generator.command << "\n";
  if (!c.generator.workdir.empty()) os << "workdir = " << c.generator.workdir.string() << "\n";
  os << "timeout_ms = " << c.generator.timeout.count() << "\n"
     << "similarity_floor = " << format_double(c.retry.similarity_floor) << "\n"
     << "max_attempts = " << c.retry.max_attempts << "\n";
  const auto& s = c.generator.settings;
  if (s.contains("strength")) os << "strength = " << format_double(s["strength"].get<double>()) << "\n";
  if (s.contains("guidance_scale")) {
    os << "guidance_scale = " << format_double(s["guidance_scale"].get<double>()) << "\n";
  }
  if (s.contains("negative_prompt")) {
    os << "negative_prompt = " << s["negative_prompt"].get<std::string>() << "\n";
  }

  os << "\n[sut]\n"
     << "kind = " << (c.sut == SutKind::stub ? "stub" : "external") << "\n";
  if (!c.sut_external.command.empty()) os << "command = " << c.sut_external.command << "\n";
  if (!c.sut_external.workdir.empty()) os << "workdir = " << c.sut_external.workdir.string() << "\n";
  os << "timeout_ms = " << c.sut_external.timeout.count() << "\n\n";

  os << "[eval]\n"
     << "window_s = " << format_double(c.eval_window_s) << "\n"
     << "bin_width = " << format_double(c.bin_width) << "\n";
  return os.str();
}

/// Snapshot recorded in reports. Paths and commands are environment specific
/// and left out so that reports from different checkouts compare equal.
inline Json config_snapshot(const RunConfig& c) {
  Json enabled = Json::array();
  for (const auto& id : c.enabled) enabled.push_back(id);
  Json constraints = Json::array();
  for (const auto& k : c.odd.constraints()) {
    Json item{{"id", k.id}, {"property", k.property}};
    if (k.range) item["range"] = Json::array({k.range->lo, k.range->hi});
    if (!k.allowed.empty()) item["allowed"] = k.allowed;
    constraints.push_back(std::move(item));
  }
  return Json{{"seed", c.seed},
              {"enabled", std::move(enabled)},
              {"odd", std::move(constraints)},
              {"epsilon_p", c.mr.epsilon_p},
              {"epsilon_d", c.mr.epsilon_d},
              {"theta_u", c.mr.theta_u},
              {"window", c.window},
              {"epsilon_t", c.epsilon_t},
              {"backend", to_string(c.backend)},
              {"similarity_floor", c.retry.similarity_floor},
              {"max_attempts", c.retry.max_attempts},
              {"sut", c.sut == SutKind::stub ? "stub" : "external"}};
}

}  // namespace mrtwin
