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
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mrtwin/errors.hpp"
#include "mrtwin/sut.hpp"
#include "mrtwin/transform.hpp"

namespace mrtwin {

enum class RelationKind { path_consistency, detection_consistency };

inline std::string to_string(RelationKind k) {
  return k == RelationKind::path_consistency ? "path-consistency" : "detection-consistency";
}

/// A metamorphic relation: a transformation template, a validator kind and
/// the tolerances it is judged by.
struct MrDefinition {
  std::string id;
  std::string name;
  TransformationSpec transform;
  RelationKind validator = RelationKind::path_consistency;
  double epsilon_p = 0.05;
  double epsilon_d = 0.05;
  double theta_u = 0.01;
  bool executable = true;

  /// Tolerance of this MR's validator kind.
  double epsilon() const noexcept {
    return validator == RelationKind::path_consistency ? epsilon_p : epsilon_d;
  }
};

inline void check_thresholds(const MrDefinition& d) {
  if (!(d.epsilon_p > 0.0) || !(d.epsilon_d > 0.0) || !(d.theta_u > 0.0)) {
    throw InvalidThresholds("MR '" + d.id + "' needs epsilon_p, epsilon_d and theta_u > 0");
  }
}

struct RelationOutcome {
  std::string mr_id;
  std::string frame_id;
  double source_value = 0.0;
  double twin_value = 0.0;
  double distance = 0.0;
  bool passed = true;
  bool uncertainty_gated = false;
};

/// Relation check with the uncertainty gate: passes when the distance of the
/// compared scalars is within the MR's tolerance and the twin's uncertainty
/// does not exceed theta_u.
inline RelationOutcome validate_relation(const MrDefinition& defn, const Prediction& src,
                                         const Prediction& twin, double twin_uncertainty) {
  RelationOutcome out;
  out.mr_id = defn.id;
  out.frame_id = src.frame_id;
  // Both validator kinds compare the steering scalar; the SUT exposes nothing else.
  out.source_value = src.steering;
  out.twin_value = twin.steering;
  out.distance = std::abs(src.steering - twin.steering);
  out.uncertainty_gated = twin_uncertainty > defn.theta_u;
  out.passed = out.distance <= defn.epsilon() && !out.uncertainty_gated;
  return out;
}

/// MR definitions by id; iteration is id-sorted.
class MrRegistry {
 public:
  void register_mr(MrDefinition defn) {
    if (defn.id.empty()) throw InvalidThresholds("MR needs an id");
    check_thresholds(defn);
    if (by_id_.contains(defn.id)) {
      throw DuplicateId("MR '" + defn.id + "' is already registered");
    }
    auto id = defn.id;
    by_id_.emplace(std::move(id), std::move(defn));
  }

  bool contains(const std::string& id) const { return by_id_.contains(id); }

  const MrDefinition& get(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw UnknownMr("no MR with id '" + id + "'");
    return it->second;
  }

  std::vector<MrDefinition> all() const {
    std::vector<MrDefinition> out;
    out.reserve(by_id_.size());
    for (const auto& [id, d] : by_id_) out.push_back(d);
    return out;
  }

  std::size_t size() const noexcept { return by_id_.size(); }

  /// Recomputes `executable` against a backend's abilities.
  template <typename Supports>
  void resolve_executable(Supports&& supports) {
    for (auto& [id, d] : by_id_) d.executable = supports(d.transform);
  }

 private:
  std::map<std::string, MrDefinition> by_id_;
};

/// Tunables of the built-in MR set.
struct MrDefaults {
  double epsilon_p = 0.05;
  double epsilon_d = 0.05;
  double theta_u = 0.01;
  double mr1_amplitude = 0.05;
  double mr2_density = 0.01;
  double mr3_narrow = 0.8;
};

namespace detail {

inline MrDefinition declarative_mr(const std::string& id, const std::string& transform_id,
                                   const std::string& name, const std::string& operation,
                                   const std::string& parameter,
                                   std::vector<std::string> preserve, const MrDefaults& d) {
  MrDefinition m;
  m.id = id;
  m.name = name;
  m.transform.id = transform_id;
  m.transform.backend = BackendKind::external;
  m.transform.semantic = SemDelta{0.0, Directive{operation, parameter, "", std::move(preserve)}};
  m.validator = RelationKind::path_consistency;
  m.epsilon_p = d.epsilon_p;
  m.epsilon_d = d.epsilon_d;
  m.theta_u = d.theta_u;
  m.executable = false;
  return m;
}

}  // namespace detail

/// mr1-mr3 run on the builtin backend. mr4-mr8 and mr10 are declarative and
/// need a generator that advertises their transform id; there is no mr9.
inline std::vector<MrDefinition> builtin_definitions(const MrDefaults& d = {}) {
  std::vector<MrDefinition> out;

  MrDefinition mr1;
  mr1.id = "mr1";
  mr1.name = "background perturbation";
  mr1.transform.id = "mr1.background";
  mr1.transform.semantic = SemDelta{d.mr1_amplitude, std::nullopt};
  mr1.validator = RelationKind::path_consistency;
  out.push_back(mr1);

  MrDefinition mr2;
  mr2.id = "mr2";
  mr2.name = "snow";
  mr2.transform.id = "mr2.snow";
  mr2.transform.environmental = EnvDelta{Weather::snow, d.mr2_density};
  mr2.validator = RelationKind::detection_consistency;
  out.push_back(mr2);

  MrDefinition mr3;
  mr3.id = "mr3";
  mr3.name = "lane narrowing";
  mr3.transform.id = "mr3.lane_narrow";
  mr3.transform.geometric = GeomDelta{d.mr3_narrow};
  // Validated under epsilon_p; the lane-narrowing tolerance is an alias of it.
  mr3.validator = RelationKind::path_consistency;
  out.push_back(mr3);

  for (auto* m : {&out[0], &out[1], &out[2]}) {
    m->epsilon_p = d.epsilon_p;
    m->epsilon_d = d.epsilon_d;
    m->theta_u = d.theta_u;
    m->executable = true;
  }

  out.push_back(detail::declarative_mr("mr4", "mr4.agent_substitution", "agent substitution",
                                       "GenerateAgent", "new_type",
                                       {"position", "velocity", "size_class"}, d));
  out.push_back(detail::declarative_mr("mr5", "mr5.time_of_day", "time-of-day consistency",
                                       "AdjustLighting", "target_time",
                                       {"geometry", "objects", "lanes"}, d));
  out.push_back(detail::declarative_mr("mr6", "mr6.traffic_control", "traffic control equivalence",
                                       "ReplaceSignal", "equivalent_control",
                                       {"intersection_geometry"}, d));
  out.push_back(detail::declarative_mr("mr7", "mr7.emergency_vehicle", "emergency vehicle priority",
                                       "ReplaceEmergency", "new_type",
                                       {"priority", "position", "signals"}, d));
  out.push_back(detail::declarative_mr("mr8", "mr8.construction_zone", "construction zone adaptation",
                                       "AddConstruction", "cone_pattern",
                                       {"intended_path", "lane_width"}, d));
  out.push_back(detail::declarative_mr("mr10", "mr10.obstacle_substitution", "obstacle substitution",
                                       "ReplaceObstacle", "equivalent_obstacle",
                                       {"size", "position", "blockage"}, d));
  return out;
}

inline MrRegistry builtin_registry(const MrDefaults& d = {}) {
  MrRegistry r;
  for (auto& m : builtin_definitions(d)) r.register_mr(std::move(m));
  return r;
}

/// Identity parameterization of an executable builtin MR (zero amplitude,
/// zero density, unit narrowing).
inline TransformationSpec identity_of(const TransformationSpec& spec) {
  TransformationSpec out = spec;
  if (out.semantic) out.semantic->amplitude = 0.0;
  if (out.environmental) out.environmental->density = 0.0;
  if (out.geometric) out.geometric->lane_narrow = 1.0;
  return out;
}

}  // namespace mrtwin
