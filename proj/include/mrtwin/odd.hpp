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

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mrtwin/errors.hpp"
#include "mrtwin/image.hpp"

namespace mrtwin {

/// Per-frame metadata accompanying an image (weather tag, clock time,
/// connectivity flags). Keys are free-form strings.
using FrameTags = std::map<std::string, std::string>;

namespace tags {
inline constexpr std::string_view kWeather = "weather";
inline constexpr std::string_view kTimeOfDay = "time_of_day_h";
}  // namespace tags

enum class Weather { clear, rain, snow, fog };

inline std::string to_string(Weather w) {
  switch (w) {
    case Weather::clear: return "clear";
    case Weather::rain: return "rain";
    case Weather::snow: return "snow";
    case Weather::fog: return "fog";
  }
  return "clear";
}

inline Weather parse_weather(std::string_view text) {
  if (text == "clear") return Weather::clear;
  if (text == "rain") return Weather::rain;
  if (text == "snow") return Weather::snow;
  if (text == "fog") return Weather::fog;
  throw InvalidOddSpec("unknown weather condition '" + std::string(text) + "'");
}

/// Closed interval [lo, hi].
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

/// One ODD constraint. A constraint either bounds a measured scalar
/// (`range`) or restricts a string tag to an allowed set (`allowed`).
/// Properties prefixed with "tag:" read frame metadata; all others name an
/// image measurer.
struct Constraint {
  std::string id;
  std::string property;
  std::optional<Range> range;
  std::vector<std::string> allowed;

  friend bool operator==(const Constraint&, const Constraint&) = default;
};

inline constexpr std::string_view kTagPrefix = "tag:";

inline bool is_tag_property(std::string_view property) {
  return property.starts_with(kTagPrefix);
}

/// Environment parameters E = {weather, lighting, visibility, temperature}.
struct EnvConditions {
  std::optional<std::set<Weather>> weather;
  std::optional<Range> lighting;            // mean luminance bounds in [0,1]
  std::optional<double> visibility_min;     // minimum Michelson contrast in [0,1]
  std::optional<Range> temperature_c;       // informational only, never checked

  friend bool operator==(const EnvConditions&, const EnvConditions&) = default;
};

/// The ODD five-tuple (P, E, O, T, C).
struct OddSpec {
  std::vector<Constraint> infrastructure;
  EnvConditions environment;
  std::vector<Constraint> operational;
  std::optional<Range> time_of_day_h;
  std::vector<Constraint> connectivity;

  /// Flattened constraint list in P, E, O, T, C order.
  std::vector<Constraint> constraints() const {
    std::vector<Constraint> out(infrastructure.begin(), infrastructure.end());
    if (environment.lighting) {
      out.push_back({"env.lighting", "mean_luminance", environment.lighting, {}});
    }
    if (environment.visibility_min) {
      out.push_back({"env.visibility", "michelson_contrast",
                     Range{*environment.visibility_min, 1.0}, {}});
    }
    if (environment.weather) {
      Constraint c{"env.weather", std::string(kTagPrefix) + std::string(tags::kWeather),
                   std::nullopt, {}};
      for (Weather w : *environment.weather) c.allowed.push_back(to_string(w));
      out.push_back(std::move(c));
    }
    out.insert(out.end(), operational.begin(), operational.end());
    if (time_of_day_h) {
      out.push_back({"temporal.time_of_day",
                     std::string(kTagPrefix) + std::string(tags::kTimeOfDay), time_of_day_h,
                     {}});
    }
    out.insert(out.end(), connectivity.begin(), connectivity.end());
    return out;
  }

  friend bool operator==(const OddSpec&, const OddSpec&) = default;
};

inline void validate_constraint(const Constraint& c) {
  if (c.id.empty() || c.property.empty()) {
    throw InvalidOddSpec("constraint needs an id and a property");
  }
  if (c.range.has_value() == !c.allowed.empty()) {
    throw InvalidOddSpec("constraint '" + c.id +
                         "' must have exactly one of a range or an allowed set");
  }
  if (c.range && !(c.range->lo <= c.range->hi)) {
    throw InvalidOddSpec("constraint '" + c.id + "' has an empty range");
  }
}

/// Checks the OddSpec invariants; throws InvalidOddSpec.
inline void validate(const OddSpec& spec) {
  const auto& env = spec.environment;
  if (!env.weather && !env.lighting && !env.visibility_min) {
    throw InvalidOddSpec("ODD environment must declare at least one constraint");
  }
  if (env.weather && env.weather->empty()) {
    throw InvalidOddSpec("env.weather allows no condition");
  }
  if (env.lighting) {
    const auto& l = *env.lighting;
    if (!(l.lo >= 0.0 && l.hi <= 1.0 && l.lo <= l.hi)) {
      throw InvalidOddSpec("env.lighting bounds must satisfy 0 <= lo <= hi <= 1");
    }
  }
  if (env.visibility_min && !(*env.visibility_min >= 0.0 && *env.visibility_min <= 1.0)) {
    throw InvalidOddSpec("env.visibility must lie in [0,1]");
  }
  if (env.temperature_c && !(env.temperature_c->lo <= env.temperature_c->hi)) {
    throw InvalidOddSpec("env.temperature band is empty");
  }
  std::set<std::string> seen;
  for (const auto& c : spec.constraints()) {
    validate_constraint(c);
    if (!seen.insert(c.id).second) {
      throw InvalidOddSpec("duplicate constraint id '" + c.id + "'");
    }
  }
  for (const auto& c : spec.connectivity) {
    if (!c.id.starts_with("conn.")) {
      throw InvalidOddSpec("connectivity constraint ids must start with 'conn.': " + c.id);
    }
  }
}

using Measurer = std::function<double(const ImageBuffer&)>;

/// Registry of image measurers addressable from constraint properties.
class MeasurerRegistry {
 public:
  static const MeasurerRegistry& builtin() {
    static const MeasurerRegistry registry = [] {
      MeasurerRegistry r;
      r.add("mean_luminance", [](const ImageBuffer& x) { return mean_luminance(x); });
      r.add("michelson_contrast", [](const ImageBuffer& x) { return michelson_contrast(x); });
      return r;
    }();
    return registry;
  }

  void add(std::string property, Measurer fn) { measurers_[std::move(property)] = std::move(fn); }

  const Measurer* find(const std::string& property) const {
    auto it = measurers_.find(property);
    return it == measurers_.end() ? nullptr : &it->second;
  }

 private:
  std::map<std::string, Measurer> measurers_;
};

struct Measurement {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool satisfied = false;
};

/// Measures `c` on the frame. Tag-set constraints measure 1 on a match and 0
/// otherwise; a missing tag never satisfies a constraint.
inline Measurement measure_constraint(const ImageBuffer& x, const FrameTags& frame_tags,
                                      const Constraint& c,
                                      const MeasurerRegistry& registry = MeasurerRegistry::builtin()) {
  Measurement m;
  if (is_tag_property(c.property)) {
    const std::string key = c.property.substr(kTagPrefix.size());
    auto it = frame_tags.find(key);
    if (c.range) {
      if (it == frame_tags.end()) return m;
      double v = 0.0;
      const auto& s = it->second;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || ptr != s.data() + s.size()) return m;
      m.value = v;
      m.satisfied = c.range->contains(v);
      return m;
    }
    const bool hit = it != frame_tags.end() &&
                     std::find(c.allowed.begin(), c.allowed.end(), it->second) != c.allowed.end();
    m.value = hit ? 1.0 : 0.0;
    m.satisfied = hit;
    return m;
  }
  const Measurer* fn = registry.find(c.property);
  if (fn == nullptr) {
    throw UnsupportedConstraint("no measurer registered for property '" + c.property +
                                "' (constraint " + c.id + ")");
  }
  if (!c.range) {
    throw UnsupportedConstraint("image property '" + c.property + "' needs a numeric range");
  }
  if (x.empty()) {
    throw InvalidImage("cannot measure an empty image");
  }
  m.value = (*fn)(x);
  m.satisfied = c.range->contains(m.value);
  return m;
}

/// V(x, c).
inline bool verify_constraint(const ImageBuffer& x, const FrameTags& frame_tags,
                              const Constraint& c,
                              const MeasurerRegistry& registry = MeasurerRegistry::builtin()) {
  return measure_constraint(x, frame_tags, c, registry).satisfied;
}

inline bool verify_constraint(const ImageBuffer& x, const Constraint& c) {
  return verify_constraint(x, FrameTags{}, c);
}

struct ComplianceResult {
  bool compliant = true;
  std::vector<std::string> violated;
  std::map<std::string, double> measurements;

  friend bool operator==(const ComplianceResult&, const ComplianceResult&) = default;
};

/// Membership of x in the valid input domain: every constraint must hold.
inline ComplianceResult within_domain(const ImageBuffer& x, const FrameTags& frame_tags,
                                      const OddSpec& spec,
                                      const MeasurerRegistry& registry = MeasurerRegistry::builtin()) {
  ComplianceResult result;
  for (const auto& c : spec.constraints()) {
    const Measurement m = measure_constraint(x, frame_tags, c, registry);
    result.measurements[c.id] = m.value;
    if (!m.satisfied) {
      result.violated.push_back(c.id);
    }
  }
  result.compliant = result.violated.empty();
  return result;
}

inline ComplianceResult within_domain(const ImageBuffer& x, const OddSpec& spec) {
  return within_domain(x, FrameTags{}, spec);
}

}  // namespace mrtwin
