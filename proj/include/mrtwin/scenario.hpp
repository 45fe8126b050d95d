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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mrtwin/crash_eval.hpp"
#include "mrtwin/errors.hpp"
#include "mrtwin/image.hpp"
#include "mrtwin/json_io.hpp"
#include "mrtwin/odd.hpp"
#include "mrtwin/rng.hpp"

namespace mrtwin {

/// Piece of track with constant curvature and weather.
struct TrackSegment {
  double duration_s = 1.0;
  double curvature = 0.0;
  Weather weather = Weather::clear;

  friend bool operator==(const TrackSegment&, const TrackSegment&) = default;
};

enum class HazardKind { lane_shift };

inline std::string to_string(HazardKind) { return "lane_shift"; }

inline HazardKind parse_hazard_kind(const std::string& s) {
  if (s == "lane_shift") return HazardKind::lane_shift;
  throw ConfigInvalid("unknown hazard kind '" + s + "'");
}

/// A scripted event. For lane_shift, magnitude is the lateral displacement of
/// the lane centre as a fraction of image width (positive = right).
struct Hazard {
  double time_s = 0.0;
  HazardKind kind = HazardKind::lane_shift;
  double magnitude = 0.0;

  friend bool operator==(const Hazard&, const Hazard&) = default;
};

/// Timing of a lane_shift: the lane drifts linearly over `ramp_s` up to the
/// hazard time, holds for `hold_s`, then recovers over `recovery_s`.
struct HazardProfile {
  double ramp_s = 3.0;
  double hold_s = 2.0;
  double recovery_s = 1.0;

  friend bool operator==(const HazardProfile&, const HazardProfile&) = default;
};

struct ScenarioScript {
  std::string sequence_id = "seq0";
  double length_s = 20.0;
  double frame_rate = 20.0;
  std::size_t width = 256;
  std::size_t height = 128;
  std::vector<TrackSegment> track;
  std::vector<Hazard> hazards;
  std::uint64_t seed = 0;
  double clock_start_h = 12.0;
  /// Lane-shift magnitude at or above which a hazard is labelled a crash.
  double crash_threshold = 0.3;
  HazardProfile profile;

  friend bool operator==(const ScenarioScript&, const ScenarioScript&) = default;
};

inline std::size_t frame_count(const ScenarioScript& s) {
  return static_cast<std::size_t>(std::llround(s.length_s * s.frame_rate));
}

inline void validate(const ScenarioScript& s) {
  if (!(s.frame_rate > 0.0)) throw ConfigInvalid("frame_rate must be positive");
  if (!(s.length_s > 0.0)) throw ConfigInvalid("length_s must be positive");
  if (frame_count(s) == 0) throw ConfigInvalid("script produces no frames");
  if (s.width < kMinPipelineSide || s.height < kMinPipelineSide) {
    throw ConfigInvalid("frames must be at least 64x64");
  }
  if (s.sequence_id.empty() || s.sequence_id.find_first_of(",\n") != std::string::npos) {
    throw ConfigInvalid("sequence_id must be non-empty and contain no commas");
  }
  for (const auto& seg : s.track) {
    if (!(seg.duration_s > 0.0)) throw ConfigInvalid("track segment durations must be positive");
  }
  for (const auto& h : s.hazards) {
    if (!(h.time_s >= 0.0 && h.time_s < s.length_s)) {
      throw OutOfRange("hazard time " + std::to_string(h.time_s) + " outside [0, length_s)");
    }
  }
  const auto& p = s.profile;
  if (p.ramp_s < 0.0 || p.hold_s < 0.0 || p.recovery_s < 0.0) {
    throw ConfigInvalid("hazard profile durations must be non-negative");
  }
}

/// New script with `hazard` appended; the original is left untouched.
inline ScenarioScript inject_hazard(const ScenarioScript& script, const Hazard& hazard) {
  if (!(hazard.time_s >= 0.0 && hazard.time_s < script.length_s)) {
    throw OutOfRange("hazard time " + std::to_string(hazard.time_s) + " outside [0, length_s)");
  }
  ScenarioScript out = script;
  out.hazards.push_back(hazard);
  return out;
}

/// Frame grid time of a hazard.
inline double snap_to_frame(const ScenarioScript& s, double t) {
  const auto last = static_cast<long long>(frame_count(s)) - 1;
  const auto index = std::clamp<long long>(std::llround(t * s.frame_rate), 0, last);
  return static_cast<double>(index) / s.frame_rate;
}

/// Crash labels implied by the script.
inline GroundTruth ground_truth_of(const ScenarioScript& s) {
  GroundTruth gt;
  gt.frame_rate = s.frame_rate;
  gt.span_start = 0.0;
  gt.span_end = static_cast<double>(frame_count(s)) / s.frame_rate;
  for (const auto& h : s.hazards) {
    if (h.kind == HazardKind::lane_shift && std::abs(h.magnitude) >= s.crash_threshold) {
      gt.crash_events.push_back(snap_to_frame(s, h.time_s));
    }
  }
  std::sort(gt.crash_events.begin(), gt.crash_events.end());
  gt.crash_events.erase(std::unique(gt.crash_events.begin(), gt.crash_events.end()),
                        gt.crash_events.end());
  // A crash on the very first frame has no pre-crash history to score.
  std::erase_if(gt.crash_events, [&](double t) { return !(t > gt.span_start); });
  return gt;
}

/// Schematic renderer: sky above the horizon (image mid-line), textured
/// road below with two bright lane lines around a centre that follows the
/// track curvature and any lane-shift hazard.
class LaneRenderer {
 public:
  static constexpr double kLaneHalfWidth = 0.08;
  static constexpr int kLineThickness = 3;

  explicit LaneRenderer(ScenarioScript script) : s_(std::move(script)) { validate(s_); }

  /// Lateral hazard offset of the lane centre at time t.
  double hazard_offset(double t) const {
    double total = 0.0;
    const auto& p = s_.profile;
    for (const auto& h : s_.hazards) {
      const double th = h.time_s;
      double f = 0.0;
      if (t >= th) {
        if (t < th + p.hold_s) {
          f = 1.0;
        } else if (t < th + p.hold_s + p.recovery_s) {
          f = 1.0 - (t - th - p.hold_s) / p.recovery_s;
        }
      } else if (p.ramp_s > 0.0 && t >= th - p.ramp_s) {
        f = (t - (th - p.ramp_s)) / p.ramp_s;
      }
      total += f * h.magnitude;
    }
    return total;
  }

  const TrackSegment& segment_at(double t) const {
    static const TrackSegment straight{};
    if (s_.track.empty()) return straight;
    double acc = 0.0;
    for (const auto& seg : s_.track) {
      acc += seg.duration_s;
      if (t < acc) return seg;
    }
    return s_.track.back();
  }

  /// Normalized lane centre of road row `row` at time t, kept inside the
  /// frame so both lines stay fully visible.
  double lane_centre(std::size_t row, double t) const {
    const double horizon = static_cast<double>(s_.height / 2);
    const double bottom = static_cast<double>(s_.height - 1);
    const double d = (bottom - static_cast<double>(row)) / (bottom - horizon);
    const double c = 0.5 + hazard_offset(t) + segment_at(t).curvature * d * d;
    return std::clamp(c, centre_min(), 1.0 - centre_min());
  }

  /// Mean lane centre over the road rows (what a centroid steers toward).
  double true_cx(double t) const {
    double sum = 0.0;
    for (std::size_t row = s_.height / 2; row < s_.height; ++row) sum += lane_centre(row, t);
    return sum / static_cast<double>(s_.height - s_.height / 2);
  }

  struct Rendered {
    ImageBuffer frame;
    ImageBuffer mask;
    Weather weather = Weather::clear;
    double cx_true = 0.5;
  };

  Rendered render(std::size_t index) const {
    const double t = static_cast<double>(index) / s_.frame_rate;
    const std::size_t w = s_.width;
    const std::size_t h = s_.height;
    Rendered out;
    out.frame = ImageBuffer(h, w, 3);
    out.mask = ImageBuffer(h, w, 1);
    out.weather = segment_at(t).weather;
    out.cx_true = true_cx(t);

    const std::size_t horizon = h / 2;
    for (std::size_t row = 0; row < horizon; ++row) {
      const long k = static_cast<long>(row * 60 / std::max<std::size_t>(1, horizon));
      for (std::size_t col = 0; col < w; ++col) {
        out.frame.set_pixel(row, col, static_cast<std::uint8_t>(110 + k),
                            static_cast<std::uint8_t>(150 + k * 3 / 4),
                            static_cast<std::uint8_t>(200 + k / 3));
      }
    }
    SplitMix64 texture(derive_seed(s_.seed, index));
    for (std::size_t row = horizon; row < h; ++row) {
      for (std::size_t col = 0; col < w; ++col) {
        const auto v = static_cast<std::uint8_t>(90 + texture.between(-6, 6));
        out.frame.set_pixel(row, col, v, v, v);
      }
      const double centre_px = lane_centre(row, t) * static_cast<double>(w - 1);
      const double half_px = kLaneHalfWidth * static_cast<double>(w - 1);
      const long left = line_start(centre_px - half_px);
      const long right = line_start(centre_px + half_px);
      for (long col = left; col <= right + kLineThickness - 1; ++col) {
        out.mask.at(row, static_cast<std::size_t>(col)) = 255;
      }
      for (int k = 0; k < kLineThickness; ++k) {
        out.frame.set_pixel(row, static_cast<std::size_t>(left + k), 255, 255, 255);
        out.frame.set_pixel(row, static_cast<std::size_t>(right + k), 255, 255, 255);
      }
    }
    apply_weather(out.frame, out.weather);
    return out;
  }

 private:
  static long line_start(double centre_px) {
    return std::lround(centre_px - (kLineThickness - 1) / 2.0);
  }

  double centre_min() const {
    return kLaneHalfWidth + ((kLineThickness - 1) / 2.0 + 1.0) / static_cast<double>(s_.width - 1);
  }

  // Weather tints keep lane lines above the bright-pixel threshold.
  static void apply_weather(ImageBuffer& frame, Weather weather) {
    if (weather == Weather::clear) return;
    for (auto& v : frame.data()) {
      const int x = v;
      switch (weather) {
        case Weather::fog: v = static_cast<std::uint8_t>((7 * x + 3 * 190) / 10); break;
        case Weather::rain: v = static_cast<std::uint8_t>(x * 85 / 100); break;
        case Weather::snow: v = static_cast<std::uint8_t>(x + (255 - x) / 5); break;
        case Weather::clear: break;
      }
    }
  }

  ScenarioScript s_;
};

inline std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu", index);
  return buf;
}

struct FrameInfo {
  std::string frame_id;
  double timestamp_s = 0.0;
  Weather weather = Weather::clear;
  double cx_true = 0.5;
};

struct GeneratedSequence {
  std::filesystem::path dir;
  std::vector<FrameInfo> frames;
  GroundTruth ground_truth;
};

inline Json to_json(const ScenarioScript& s) {
  Json j;
  j["sequence_id"] = s.sequence_id;
  j["length_s"] = s.length_s;
  j["frame_rate"] = s.frame_rate;
  j["width"] = s.width;
  j["height"] = s.height;
  j["seed"] = s.seed;
  j["clock_start_h"] = s.clock_start_h;
  j["crash_threshold"] = s.crash_threshold;
  j["profile"] = {{"ramp_s", s.profile.ramp_s}, {"hold_s", s.profile.hold_s},
                  {"recovery_s", s.profile.recovery_s}};
  Json track = Json::array();
  for (const auto& seg : s.track) {
    track.push_back({{"duration_s", seg.duration_s}, {"curvature", seg.curvature},
                     {"weather", to_string(seg.weather)}});
  }
  j["track"] = std::move(track);
  Json hazards = Json::array();
  for (const auto& h : s.hazards) {
    hazards.push_back({{"time_s", h.time_s}, {"kind", to_string(h.kind)}, {"magnitude", h.magnitude}});
  }
  j["hazards"] = std::move(hazards);
  return j;
}

/// Parses a scenario script; unknown keys are rejected.
inline ScenarioScript script_from_json(const Json& j) {
  static const std::vector<std::string> known = {
      "sequence_id", "length_s", "frame_rate", "width", "height", "seed", "clock_start_h",
      "crash_threshold", "profile", "track", "hazards"};
  try {
    if (!j.is_object()) throw ConfigInvalid("script must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
        throw ConfigInvalid("unknown script key '" + it.key() + "'");
      }
    }
    ScenarioScript s;
    s.sequence_id = j.value("sequence_id", s.sequence_id);
    s.length_s = j.value("length_s", s.length_s);
    s.frame_rate = j.value("frame_rate", s.frame_rate);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.seed = j.value("seed", s.seed);
    s.clock_start_h = j.value("clock_start_h", s.clock_start_h);
    s.crash_threshold = j.value("crash_threshold", s.crash_threshold);
    if (j.contains("profile")) {
      const auto& p = j.at("profile");
      s.profile.ramp_s = p.value("ramp_s", s.profile.ramp_s);
      s.profile.hold_s = p.value("hold_s", s.profile.hold_s);
      s.profile.recovery_s = p.value("recovery_s", s.profile.recovery_s);
    }
    if (j.contains("track")) {
      for (const auto& seg : j.at("track")) {
        TrackSegment t;
        t.duration_s = seg.value("duration_s", t.duration_s);
        t.curvature = seg.value("curvature", t.curvature);
        t.weather = parse_weather(seg.value("weather", std::string("clear")));
        s.track.push_back(t);
      }
    }
    if (j.contains("hazards")) {
      for (const auto& hz : j.at("hazards")) {
        Hazard h;
        h.time_s = hz.at("time_s").get<double>();
        h.kind = parse_hazard_kind(hz.value("kind", std::string("lane_shift")));
        h.magnitude = hz.at("magnitude").get<double>();
        s.hazards.push_back(h);
      }
    }
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("scenario script: ") + e.what());
  } catch (const InvalidOddSpec& e) {
    throw ConfigInvalid(std::string("scenario script: ") + e.what());
  }
}

inline ScenarioScript read_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open script " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid("script " + path.string() + " is not valid JSON: " + e.what());
  }
  return script_from_json(j);
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw IoFailure("cannot write " + path.string());
}

}  // namespace detail

/// Renders the script into `out_dir`:
///   frames/frame_NNNNNN.png   RGB frames
///   masks/frame_NNNNNN.png    single-channel lane masks (255 between the lines)
///   metadata.csv              frame_id,timestamp_s,weather,cx_true
///   ground_truth.csv          sequence_id,crash_time_s
///   sequence.json             the script plus frame count
/// Output bytes depend only on the script.
inline GeneratedSequence generate_sequence(const ScenarioScript& script,
                                           const std::filesystem::path& out_dir) {
  validate(script);
  std::error_code ec;
  const auto parent = std::filesystem::absolute(out_dir).parent_path();
  if (!std::filesystem::is_directory(parent)) {
    throw IoFailure("parent of output directory does not exist: " + parent.string());
  }
  std::filesystem::create_directories(out_dir / "frames", ec);
  if (ec) throw IoFailure("cannot create " + (out_dir / "frames").string() + ": " + ec.message());
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) throw IoFailure("cannot create " + (out_dir / "masks").string() + ": " + ec.message());

  GeneratedSequence seq;
  seq.dir = out_dir;
  const LaneRenderer renderer(script);
  const std::size_t n = frame_count(script);
  std::string metadata = "frame_id,timestamp_s,weather,cx_true\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto rendered = renderer.render(i);
    const std::string name = frame_name(i);
    write_png(rendered.frame, out_dir / "frames" / (name + ".png"));
    write_png(rendered.mask, out_dir / "masks" / (name + ".png"));
    FrameInfo info{name, static_cast<double>(i) / script.frame_rate, rendered.weather, rendered.cx_true};
    char row[160];
    std::snprintf(row, sizeof(row), "%s,%.6f,%s,%.6f\n", name.c_str(), info.timestamp_s,
                  to_string(info.weather).c_str(), info.cx_true);
    metadata += row;
    seq.frames.push_back(std::move(info));
  }
  detail::write_text(out_dir / "metadata.csv", metadata);
  seq.ground_truth = ground_truth_of(script);
  write_ground_truth_csv(out_dir / "ground_truth.csv", script.sequence_id, seq.ground_truth.crash_events);
  Json meta = to_json(script);
  meta["frames"] = n;
  detail::write_text(out_dir / "sequence.json", canonical_dump(meta));
  return seq;
}

}  // namespace mrtwin
