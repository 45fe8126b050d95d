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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mrtwin/crash_eval.hpp"
#include "mrtwin/errors.hpp"
#include "mrtwin/image.hpp"
#include "mrtwin/json_io.hpp"
#include "mrtwin/mr.hpp"
#include "mrtwin/odd.hpp"
#include "mrtwin/sut.hpp"
#include "mrtwin/temporal.hpp"
#include "mrtwin/transform.hpp"

namespace mrtwin {

// ---------------------------------------------------------------------------
// Sequences on disk

struct SequenceFrame {
  std::string frame_id;
  double timestamp_s = 0.0;
  FrameTags tags;
  std::filesystem::path path;
};

struct Sequence {
  std::string sequence_id;
  double frame_rate = 0.0;
  std::vector<SequenceFrame> frames;

  double span_start() const { return frames.empty() ? 0.0 : frames.front().timestamp_s; }
  double span_end() const {
    return frames.empty() ? 0.0 : frames.back().timestamp_s + 1.0 / frame_rate;
  }
};

/// Loads a sequence directory: `metadata.csv` and `frames/<frame_id>.png`,
/// plus `sequence.json` when present (sequence id, frame rate, clock start).
inline Sequence load_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoFailure("sequence directory " + dir.string() + " does not exist");
  }
  Sequence seq;
  seq.sequence_id = dir.filename().string();
  double clock_start_h = 12.0;
  if (std::filesystem::exists(dir / "sequence.json")) {
    std::ifstream in(dir / "sequence.json");
    try {
      const Json meta = Json::parse(in);
      seq.sequence_id = meta.value("sequence_id", seq.sequence_id);
      seq.frame_rate = meta.value("frame_rate", 0.0);
      clock_start_h = meta.value("clock_start_h", clock_start_h);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaMismatch("sequence.json: " + std::string(e.what()));
    }
  }
  std::ifstream in(dir / "metadata.csv");
  if (!in) throw IoFailure("cannot open " + (dir / "metadata.csv").string());
  std::string line;
  std::getline(in, line);
  const auto header = detail::split_csv_line(line);
  if (header.size() != 4 || header[0] != "frame_id" || header[1] != "timestamp_s" ||
      header[2] != "weather" || header[3] != "cx_true") {
    throw SchemaMismatch("metadata.csv header must be 'frame_id,timestamp_s,weather,cx_true'");
  }
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4) throw SchemaMismatch("metadata.csv row needs 4 fields: " + line);
    SequenceFrame frame;
    frame.frame_id = f[0];
    frame.timestamp_s = detail::parse_double(f[1], "timestamp");
    frame.tags[std::string(tags::kWeather)] = f[2];
    char clock[32];
    std::snprintf(clock, sizeof(clock), "%.6f", clock_start_h + frame.timestamp_s / 3600.0);
    frame.tags[std::string(tags::kTimeOfDay)] = clock;
    frame.path = dir / "frames" / (frame.frame_id + ".png");
    if (!seq.frames.empty() && !(frame.timestamp_s > seq.frames.back().timestamp_s)) {
      throw SchemaMismatch("metadata.csv timestamps must increase strictly");
    }
    seq.frames.push_back(std::move(frame));
  }
  if (seq.frame_rate <= 0.0) {
    seq.frame_rate = seq.frames.size() >= 2
                         ? 1.0 / (seq.frames[1].timestamp_s - seq.frames[0].timestamp_s)
                         : 1.0;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Report model

struct FrameRecord {
  std::string frame_id;
  double timestamp_s = 0.0;
  std::string mr_id;
  RelationOutcome relation;
  bool temporal_ok = true;
  double src_smoothed = 0.0;
  double twin_smoothed = 0.0;
  double src_uncertainty = 0.0;
  double twin_uncertainty = 0.0;
  /// Twin uncertainty in excess of the source stream's; the input to the gate.
  double excess_uncertainty = 0.0;
  int attempts = 0;
  double similarity = 0.0;
  ComplianceResult compliance;
  bool sut_clamped = false;
  bool alarm = false;
  bool unevaluable = false;
  std::string reason;
};

/// The alarm rule: a failed relation (uncertainty gate included) or a failed
/// temporal check. Unevaluable records never alarm.
inline bool alarm_of(const FrameRecord& r) {
  return !r.unevaluable && (!r.relation.passed || !r.temporal_ok);
}

struct SequenceSummary {
  std::string sequence_id;
  double frame_rate = 0.0;
  double span_start = 0.0;
  double span_end = 0.0;
  std::size_t frames = 0;
};

struct ReportTotals {
  std::size_t frames = 0;
  std::size_t records = 0;
  std::size_t alarms = 0;
  std::size_t unevaluable = 0;

  friend bool operator==(const ReportTotals&, const ReportTotals&) = default;
};

struct ValidationReport {
  std::string run_id;
  std::string created_utc;
  Json config = Json::object();
  SequenceSummary sequence;
  std::vector<MrDefinition> mrs;
  std::vector<FrameRecord> records;  // sorted by (mr_id, timestamp)
  ReportTotals totals;
};

inline void sort_records(std::vector<FrameRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.mr_id != b.mr_id) return a.mr_id < b.mr_id;
    return a.timestamp_s < b.timestamp_s;
  });
}

inline ReportTotals compute_totals(const std::vector<FrameRecord>& records, std::size_t frames) {
  ReportTotals t;
  t.frames = frames;
  t.records = records.size();
  for (const auto& r : records) {
    t.alarms += r.alarm ? 1 : 0;
    t.unevaluable += r.unevaluable ? 1 : 0;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Integrated validation

struct PipelineConfig {
  OddSpec odd;
  RetryPolicy retry;
  std::size_t window = 15;
  double epsilon_t = 0.1;
  std::uint64_t base_seed = 0;
  /// When set, twins are written to `<twins_dir>/<mr_id>/<frame_id>.png`.
  std::filesystem::path twins_dir;
  int jobs = 1;
};

/// Per-worker resources; each (sequence, MR) pass gets its own pair.
struct WorkerResources {
  std::shared_ptr<TwinBackend> backend;
  std::shared_ptr<SutHandle> sut;
};

using ResourceFactory = std::function<WorkerResources()>;

namespace detail {

inline std::vector<FrameRecord> run_mr_pass(const Sequence& seq, const MrDefinition& mr,
                                            const PipelineConfig& cfg, TwinBackend& backend,
                                            SutHandle& sut) {
  std::vector<FrameRecord> out;
  out.reserve(seq.frames.size());
  SlidingWindow src_window(cfg.window);
  SlidingWindow twin_window(cfg.window);
  std::filesystem::path mr_twins;
  if (!cfg.twins_dir.empty()) {
    mr_twins = cfg.twins_dir / mr.id;
    std::filesystem::create_directories(mr_twins);
  }
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& frame = seq.frames[i];
    FrameRecord rec;
    rec.frame_id = frame.frame_id;
    rec.timestamp_s = frame.timestamp_s;
    rec.mr_id = mr.id;
    rec.relation.mr_id = mr.id;
    rec.relation.frame_id = frame.frame_id;
    Prediction src_pred;
    Prediction twin_pred;
    try {
      const ImageBuffer source = read_png(frame.path);
      require_pipeline_frame(source);
      TransformationSpec spec = mr.transform;
      spec.seed = cfg.base_seed ^ static_cast<std::uint64_t>(i);
      spec.backend = backend.kind();
      const std::filesystem::path twin_path =
          mr_twins.empty() ? std::filesystem::path() : mr_twins / (frame.frame_id + ".png");
      const std::filesystem::path* twin_path_ptr = twin_path.empty() ? nullptr : &twin_path;
      TwinResult twin = generate_compliant(source, frame.tags, spec, cfg.odd, cfg.retry, backend,
                                           &frame.path, twin_path_ptr);
      rec.attempts = twin.attempts;
      rec.similarity = twin.similarity;
      rec.compliance = twin.compliance;
      if (twin_path_ptr && backend.kind() == BackendKind::builtin) write_png(twin.twin, twin_path);
      src_pred = sut.predict(source, frame.frame_id, &frame.path);
      twin_pred = sut.predict(twin.twin, frame.frame_id, twin_path_ptr);
    } catch (const Error& e) {
      rec.unevaluable = true;
      rec.reason = e.what();
      rec.relation.passed = false;
      out.push_back(std::move(rec));
      continue;
    }
    src_window.push(src_pred.steering);
    twin_window.push(twin_pred.steering);
    rec.src_uncertainty = estimate_uncertainty(src_window).value;
    rec.twin_uncertainty = estimate_uncertainty(twin_window).value;
    rec.excess_uncertainty = std::max(0.0, rec.twin_uncertainty - rec.src_uncertainty);
    rec.relation = validate_relation(mr, src_pred, twin_pred, rec.excess_uncertainty);
    rec.src_smoothed = smooth(src_window);
    rec.twin_smoothed = smooth(twin_window);
    rec.temporal_ok = validate_temporal(src_window, twin_window, cfg.epsilon_t);
    rec.sut_clamped = src_pred.clamped || twin_pred.clamped;
    rec.alarm = alarm_of(rec);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace detail

/// Runs every MR over the sequence, MR by MR, and assembles the report.
/// Per-frame generator or SUT faults mark that record unevaluable; only
/// configuration problems stop the run.
inline ValidationReport run_sequence(const Sequence& seq, const std::vector<MrDefinition>& mrs,
                                     const PipelineConfig& cfg, const ResourceFactory& make_resources) {
  if (seq.frames.empty()) throw NoFrames("sequence " + seq.sequence_id + " has no frames");
  if (mrs.empty()) throw ConfigInvalid("no MR selected");
  if (cfg.window == 0 || !(cfg.epsilon_t > 0.0)) {
    throw ConfigInvalid("temporal window and epsilon_t must be positive");
  }
  validate(cfg.odd);
  for (const auto& mr : mrs) check_thresholds(mr);

  const std::size_t jobs =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.jobs)), 1, mrs.size());
  std::vector<std::vector<FrameRecord>> per_mr(mrs.size());
  std::vector<std::exception_ptr> errors(mrs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    WorkerResources res;
    for (std::size_t k = next++; k < mrs.size(); k = next++) {
      try {
        if (!res.backend) res = make_resources();
        TransformationSpec probe = mrs[k].transform;
        probe.backend = res.backend->kind();
        if (!res.backend->supports(probe)) {
          throw UnsupportedTransform("MR '" + mrs[k].id + "' (" + mrs[k].transform.id +
                                     ") is not executable with the configured backend");
        }
        per_mr[k] = detail::run_mr_pass(seq, mrs[k], cfg, *res.backend, *res.sut);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
    if (res.sut) res.sut->close();
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ValidationReport report;
  report.sequence = {seq.sequence_id, seq.frame_rate, seq.span_start(), seq.span_end(),
                     seq.frames.size()};
  report.mrs = mrs;
  std::sort(report.mrs.begin(), report.mrs.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (auto& part : per_mr) {
    for (auto& r : part) report.records.push_back(std::move(r));
  }
  sort_records(report.records);
  report.totals = compute_totals(report.records, seq.frames.size());
  return report;
}

/// Single-worker convenience overload over caller-owned resources.
inline ValidationReport run_sequence(const Sequence& seq, const std::vector<MrDefinition>& mrs,
                                     const PipelineConfig& cfg, TwinBackend& backend, SutHandle& sut) {
  PipelineConfig serial = cfg;
  serial.jobs = 1;
  const auto no_delete = [](auto*) {};
  return run_sequence(seq, mrs, serial, [&]() {
    return WorkerResources{std::shared_ptr<TwinBackend>(&backend, no_delete),
                           std::shared_ptr<SutHandle>(&sut, no_delete)};
  });
}

struct Alarm {
  std::string mr_id;
  double timestamp_s = 0.0;

  friend bool operator==(const Alarm&, const Alarm&) = default;
};

/// Alarmed records ordered by time (ties by MR id).
inline std::vector<Alarm> derive_alarms(const ValidationReport& report) {
  std::vector<Alarm> out;
  for (const auto& r : report.records) {
    if (r.alarm) out.push_back({r.mr_id, r.timestamp_s});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.timestamp_s != b.timestamp_s) return a.timestamp_s < b.timestamp_s;
    return a.mr_id < b.mr_id;
  });
  return out;
}

inline std::vector<double> alarm_times(const std::vector<Alarm>& alarms, const std::string& mr_id) {
  std::vector<double> out;
  for (const auto& a : alarms) {
    if (a.mr_id == mr_id) out.push_back(a.timestamp_s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kReportMagic = "mrtwin-report";
inline constexpr int kReportVersion = 1;

inline Json to_json(const MrDefinition& m) {
  return Json{{"id", m.id},
              {"name", m.name},
              {"validator", to_string(m.validator)},
              {"epsilon_p", m.epsilon_p},
              {"epsilon_d", m.epsilon_d},
              {"theta_u", m.theta_u},
              {"executable", m.executable},
              {"transform", to_json(m.transform)}};
}

inline MrDefinition mr_from_json(const Json& j) {
  MrDefinition m;
  m.id = j.at("id").get<std::string>();
  m.name = j.at("name").get<std::string>();
  const auto v = j.at("validator").get<std::string>();
  if (v == "path-consistency") {
    m.validator = RelationKind::path_consistency;
  } else if (v == "detection-consistency") {
    m.validator = RelationKind::detection_consistency;
  } else {
    throw SchemaMismatch("unknown validator '" + v + "'");
  }
  m.epsilon_p = j.at("epsilon_p").get<double>();
  m.epsilon_d = j.at("epsilon_d").get<double>();
  m.theta_u = j.at("theta_u").get<double>();
  m.executable = j.at("executable").get<bool>();
  m.transform = spec_from_json(j.at("transform"));
  return m;
}

inline Json to_json(const FrameRecord& r) {
  return Json{{"mr_id", r.mr_id},
              {"frame_id", r.frame_id},
              {"timestamp_s", r.timestamp_s},
              {"source_value", r.relation.source_value},
              {"twin_value", r.relation.twin_value},
              {"distance", r.relation.distance},
              {"relation_passed", r.relation.passed},
              {"uncertainty_gated", r.relation.uncertainty_gated},
              {"temporal_ok", r.temporal_ok},
              {"src_smoothed", r.src_smoothed},
              {"twin_smoothed", r.twin_smoothed},
              {"src_uncertainty", r.src_uncertainty},
              {"twin_uncertainty", r.twin_uncertainty},
              {"excess_uncertainty", r.excess_uncertainty},
              {"attempts", r.attempts},
              {"similarity", r.similarity},
              {"compliance", to_json(r.compliance)},
              {"sut_clamped", r.sut_clamped},
              {"alarm", r.alarm},
              {"unevaluable", r.unevaluable},
              {"reason", r.reason}};
}

inline FrameRecord record_from_json(const Json& j) {
  FrameRecord r;
  r.mr_id = j.at("mr_id").get<std::string>();
  r.frame_id = j.at("frame_id").get<std::string>();
  r.timestamp_s = j.at("timestamp_s").get<double>();
  r.relation.mr_id = r.mr_id;
  r.relation.frame_id = r.frame_id;
  r.relation.source_value = j.at("source_value").get<double>();
  r.relation.twin_value = j.at("twin_value").get<double>();
  r.relation.distance = j.at("distance").get<double>();
  r.relation.passed = j.at("relation_passed").get<bool>();
  r.relation.uncertainty_gated = j.at("uncertainty_gated").get<bool>();
  r.temporal_ok = j.at("temporal_ok").get<bool>();
  r.src_smoothed = j.at("src_smoothed").get<double>();
  r.twin_smoothed = j.at("twin_smoothed").get<double>();
  r.src_uncertainty = j.at("src_uncertainty").get<double>();
  r.twin_uncertainty = j.at("twin_uncertainty").get<double>();
  r.excess_uncertainty = j.at("excess_uncertainty").get<double>();
  r.attempts = j.at("attempts").get<int>();
  r.similarity = j.at("similarity").get<double>();
  r.compliance = compliance_from_json(j.at("compliance"));
  r.sut_clamped = j.at("sut_clamped").get<bool>();
  r.alarm = j.at("alarm").get<bool>();
  r.unevaluable = j.at("unevaluable").get<bool>();
  r.reason = j.at("reason").get<std::string>();
  return r;
}

inline Json report_body(const ValidationReport& report) {
  Json mrs = Json::array();
  for (const auto& m : report.mrs) mrs.push_back(to_json(m));
  Json records = Json::array();
  for (const auto& r : report.records) records.push_back(to_json(r));
  const auto& s = report.sequence;
  return Json{{"format", kReportMagic},
              {"version", kReportVersion},
              {"config", report.config},
              {"sequence",
               {{"sequence_id", s.sequence_id},
                {"frame_rate", s.frame_rate},
                {"span_start", s.span_start},
                {"span_end", s.span_end},
                {"frames", s.frames}}},
              {"mrs", std::move(mrs)},
              {"totals",
               {{"frames", report.totals.frames},
                {"records", report.totals.records},
                {"alarms", report.totals.alarms},
                {"unevaluable", report.totals.unevaluable}}},
              {"records", std::move(records)}};
}

/// Header line (run identity, excluded from determinism comparisons)
/// followed by the canonical JSON body.
inline std::string serialize_report(const ValidationReport& report) {
  std::string out(kReportMagic);
  out += " " + std::to_string(kReportVersion) + " run_id=" + report.run_id +
         " created=" + report.created_utc + "\n";
  out += canonical_dump(report_body(report));
  return out;
}

inline void write_report(const ValidationReport& report, const std::filesystem::path& path) {
  const std::string text = serialize_report(report);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open report " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoFailure("cannot write report " + path.string());
}

inline ValidationReport parse_report(const std::string& text) {
  ValidationReport report;
  const auto newline = text.find('\n');
  if (newline == std::string::npos) throw SchemaMismatch("report has no header line");
  std::istringstream header(text.substr(0, newline));
  std::string magic;
  int version = 0;
  header >> magic >> version;
  if (magic != kReportMagic || version != kReportVersion) {
    throw SchemaMismatch("not an mrtwin report (version 1)");
  }
  std::string field;
  while (header >> field) {
    if (field.starts_with("run_id=")) report.run_id = field.substr(7);
    if (field.starts_with("created=")) report.created_utc = field.substr(8);
  }
  try {
    const Json body = Json::parse(text.substr(newline + 1));
    if (body.at("format") != kReportMagic) throw SchemaMismatch("report body format mismatch");
    report.config = body.at("config");
    const auto& s = body.at("sequence");
    report.sequence = {s.at("sequence_id").get<std::string>(), s.at("frame_rate").get<double>(),
                       s.at("span_start").get<double>(), s.at("span_end").get<double>(),
                       s.at("frames").get<std::size_t>()};
    for (const auto& m : body.at("mrs")) report.mrs.push_back(mr_from_json(m));
    for (const auto& r : body.at("records")) report.records.push_back(record_from_json(r));
    const auto& t = body.at("totals");
    report.totals = {t.at("frames").get<std::size_t>(), t.at("records").get<std::size_t>(),
                     t.at("alarms").get<std::size_t>(), t.at("unevaluable").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("report body: ") + e.what());
  }
  if (report.totals != compute_totals(report.records, report.totals.frames)) {
    throw SchemaMismatch("report totals disagree with its records");
  }
  return report;
}

inline ValidationReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open report " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_report(buf.str());
}

/// Everything after the header line.
inline std::string report_without_header(const std::string& text) {
  const auto newline = text.find('\n');
  return newline == std::string::npos ? std::string() : text.substr(newline + 1);
}

}  // namespace mrtwin
