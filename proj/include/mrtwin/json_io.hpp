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

#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "mrtwin/errors.hpp"
#include "mrtwin/odd.hpp"
#include "mrtwin/transform.hpp"

namespace mrtwin {

using Json = nlohmann::ordered_json;

namespace detail {

inline void append_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  std::string text(buf);
  if (text == "-0.000000") text = "0.000000";
  out += text;
}

inline void append_canonical(std::string& out, const Json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        out += Json(it.key()).dump();
        out += ": ";
        append_canonical(out, it.value(), indent, depth + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool scalars = true;
      for (const auto& e : j) scalars = scalars && !e.is_structured();
      if (scalars) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          append_canonical(out, j[i], indent, depth + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        append_canonical(out, j[i], indent, depth + 1);
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case Json::value_t::number_float:
      append_number(out, j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace detail

/// Canonical text of a JSON document: insertion key order, two-space indent,
/// every floating-point number printed with exactly six decimals.
inline std::string canonical_dump(const Json& j, int indent = 2) {
  std::string out;
  detail::append_canonical(out, j, indent, 0);
  out.push_back('\n');
  return out;
}

inline Json to_json(const TransformationSpec& spec) {
  Json j;
  j["id"] = spec.id;
  j["seed"] = spec.seed;
  j["backend"] = to_string(spec.backend);
  if (spec.environmental) {
    j["environmental"] = {{"weather", to_string(spec.environmental->weather)},
                          {"density", spec.environmental->density}};
  }
  if (spec.geometric) {
    j["geometric"] = {{"lane_narrow", spec.geometric->lane_narrow}};
  }
  if (spec.semantic) {
    Json s;
    s["amplitude"] = spec.semantic->amplitude;
    if (const auto& d = spec.semantic->directive) {
      s["directive"] = {{"operation", d->operation},
                        {"parameter", d->parameter},
                        {"value", d->value},
                        {"preserve", d->preserve}};
    }
    j["semantic"] = std::move(s);
  }
  return j;
}

inline TransformationSpec spec_from_json(const Json& j) {
  try {
    TransformationSpec spec;
    spec.id = j.at("id").get<std::string>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    const auto backend = j.value("backend", std::string("builtin"));
    if (backend == "builtin") {
      spec.backend = BackendKind::builtin;
    } else if (backend == "external") {
      spec.backend = BackendKind::external;
    } else {
      throw BadSpec("unknown backend '" + backend + "'");
    }
    if (j.contains("environmental")) {
      const auto& e = j.at("environmental");
      spec.environmental = EnvDelta{parse_weather(e.at("weather").get<std::string>()),
                                    e.at("density").get<double>()};
    }
    if (j.contains("geometric")) {
      spec.geometric = GeomDelta{j.at("geometric").at("lane_narrow").get<double>()};
    }
    if (j.contains("semantic")) {
      const auto& s = j.at("semantic");
      SemDelta sem;
      sem.amplitude = s.value("amplitude", 0.0);
      if (s.contains("directive")) {
        const auto& d = s.at("directive");
        sem.directive = Directive{d.at("operation").get<std::string>(),
                                  d.at("parameter").get<std::string>(),
                                  d.at("value").get<std::string>(),
                                  d.at("preserve").get<std::vector<std::string>>()};
      }
      spec.semantic = std::move(sem);
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("transformation spec: ") + e.what());
  } catch (const InvalidOddSpec& e) {
    throw SchemaMismatch(std::string("transformation spec: ") + e.what());
  }
}

inline double json_number_or_nan(const Json& j) {
  return j.is_number() ? j.get<double>() : std::nan("");
}

inline Json to_json(const ComplianceResult& c) {
  Json measurements = Json::object();
  for (const auto& [id, v] : c.measurements) {
    measurements[id] = std::isfinite(v) ? Json(v) : Json(nullptr);
  }
  return Json{{"compliant", c.compliant}, {"violated", c.violated}, {"measurements", measurements}};
}

inline ComplianceResult compliance_from_json(const Json& j) {
  ComplianceResult c;
  c.compliant = j.at("compliant").get<bool>();
  c.violated = j.at("violated").get<std::vector<std::string>>();
  for (auto it = j.at("measurements").begin(); it != j.at("measurements").end(); ++it) {
    c.measurements[it.key()] = json_number_or_nan(it.value());
  }
  return c;
}

}  // namespace mrtwin
