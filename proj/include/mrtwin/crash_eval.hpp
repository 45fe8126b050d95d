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
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mrtwin/errors.hpp"

namespace mrtwin {

/// Crash labels of one sequence.
struct GroundTruth {
  std::vector<double> crash_events;
  double span_start = 0.0;
  double span_end = 0.0;
  double frame_rate = 1.0;
};

/// Crash times must lie in (start, end] and increase strictly.
inline void validate(const GroundTruth& gt) {
  if (!(gt.span_start < gt.span_end)) {
    throw SchemaMismatch("ground truth span is empty");
  }
  if (!(gt.frame_rate > 0.0)) {
    throw SchemaMismatch("ground truth frame rate must be positive");
  }
  for (std::size_t i = 0; i < gt.crash_events.size(); ++i) {
    const double t = gt.crash_events[i];
    if (!(t > gt.span_start && t <= gt.span_end)) {
      throw SchemaMismatch("crash at " + std::to_string(t) + " s lies outside the sequence span");
    }
    if (i > 0 && !(t > gt.crash_events[i - 1])) {
      throw SchemaMismatch("crash times must be strictly increasing");
    }
  }
}

/// A scoring unit. Positive intervals are [c - window, c] and include the
/// crash instant; the negative interval right after a crash starts open.
struct LabeledInterval {
  double start = 0.0;
  double end = 0.0;
  bool include_start = true;
  bool include_end = false;
  bool positive = false;
  std::vector<double> crashes;  // crashes covered, positives only
  bool merged = false;

  bool contains(double t) const noexcept {
    const bool after = include_start ? t >= start : t > start;
    const bool before = include_end ? t <= end : t < end;
    return after && before;
  }
};

struct Labeling {
  std::vector<LabeledInterval> intervals;
  /// Crashes closer than one window were merged into a single positive.
  bool overlapping = false;
  std::vector<std::string> warnings;

  std::size_t positives() const {
    return static_cast<std::size_t>(
        std::count_if(intervals.begin(), intervals.end(), [](const auto& i) { return i.positive; }));
  }
};

namespace detail {

inline constexpr double kTimeSlack = 1e-9;

/// Tiles [from, to) into consecutive chunks of `window`, keeping a final
/// partial chunk.
inline void tile_negative(std::vector<LabeledInterval>& out, double from, bool from_inclusive,
                          double to, bool to_inclusive, double window) {
  double cursor = from;
  bool first = true;
  while (to - cursor > kTimeSlack) {
    LabeledInterval iv;
    iv.start = cursor;
    iv.include_start = first ? from_inclusive : true;
    const double next = cursor + window;
    if (to - next > kTimeSlack) {
      iv.end = next;
      iv.include_end = false;
    } else {
      iv.end = to;
      iv.include_end = to_inclusive;
    }
    out.push_back(iv);
    cursor = iv.end;
    first = false;
  }
}

}  // namespace detail

/// Splits the span into one positive interval per crash window and tiles the
/// rest with negative intervals of `window_s`. The intervals are disjoint and
/// cover [span_start, span_end].
inline Labeling label_windows(const GroundTruth& gt, double window_s) {
  if (!(window_s > 0.0)) throw SchemaMismatch("window length must be positive");
  validate(gt);
  Labeling out;
  std::vector<LabeledInterval> positives;
  for (double c : gt.crash_events) {
    const double start = std::max(gt.span_start, c - window_s);
    if (!positives.empty()) {
      auto& prev = positives.back();
      if (start < prev.end) {
        out.overlapping = true;
        prev.merged = true;
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "crashes at %.3f s and %.3f s are closer than the %.3f s window; merged",
                      prev.crashes.back(), c, window_s);
        out.warnings.emplace_back(msg);
        prev.end = c;
        prev.crashes.push_back(c);
        continue;
      }
    }
    LabeledInterval p;
    p.start = start;
    p.end = c;
    p.include_end = true;
    p.positive = true;
    p.crashes.push_back(c);
    p.include_start = positives.empty() || start > positives.back().end;
    positives.push_back(p);
  }

  double cursor = gt.span_start;
  bool cursor_inclusive = true;
  for (const auto& p : positives) {
    detail::tile_negative(out.intervals, cursor, cursor_inclusive, p.start, !p.include_start,
                          window_s);
    out.intervals.push_back(p);
    cursor = p.end;
    cursor_inclusive = false;
  }
  detail::tile_negative(out.intervals, cursor, cursor_inclusive, gt.span_end, true, window_s);
  return out;
}

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// One count per labeled interval: any alarm inside a positive is a TP,
/// inside a negative an FP.
inline Confusion confusion(const std::vector<double>& alarms,
                           const std::vector<LabeledInterval>& labeled) {
  Confusion c;
  for (const auto& iv : labeled) {
    const bool hit = std::any_of(alarms.begin(), alarms.end(),
                                 [&](double t) { return iv.contains(t); });
    if (iv.positive) {
      (hit ? c.tp : c.fn) += 1;
    } else {
      (hit ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

/// Detection scores; a field is nullopt ("n.a.") when its denominator is 0.
struct MetricSummary {
  Confusion counts;
  std::optional<double> tpr;
  std::optional<double> fpr;
  std::optional<double> precision;
  std::optional<double> f1;
};

inline MetricSummary metrics(const Confusion& c) {
  MetricSummary m;
  m.counts = c;
  auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.tpr = ratio(c.tp, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  if (m.precision && m.tpr && (*m.precision + *m.tpr) > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.tpr / (*m.precision + *m.tpr);
  }
  return m;
}

inline MetricSummary metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
  return metrics(Confusion{tp, fp, tn, fn});
}

/// Lead time of each predicted crash: crash time minus the earliest alarm in
/// its window.
struct TtcHistogram {
  double bin_width = 0.5;
  double window_length = 5.0;
  std::vector<std::uint64_t> counts;
  std::vector<double> gaps;

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

inline std::size_t bin_count(double window_s, double bin_width) {
  return static_cast<std::size_t>(std::ceil(window_s / bin_width - detail::kTimeSlack));
}

inline TtcHistogram time_to_crash_histogram(const std::vector<double>& alarms,
                                            const Labeling& labeling, double window_s,
                                            double bin_width) {
  if (!(bin_width > 0.0) || !(window_s > 0.0)) {
    throw SchemaMismatch("histogram needs positive window and bin width");
  }
  TtcHistogram h;
  h.bin_width = bin_width;
  h.window_length = window_s;
  h.counts.assign(bin_count(window_s, bin_width), 0);
  for (const auto& iv : labeling.intervals) {
    if (!iv.positive) continue;
    std::optional<double> earliest;
    for (double t : alarms) {
      if (iv.contains(t) && (!earliest || t < *earliest)) earliest = t;
    }
    if (!earliest) continue;
    // The crash this alarm anticipates: the first one not before it.
    double crash = iv.crashes.back();
    for (double c : iv.crashes) {
      if (c >= *earliest) {
        crash = c;
        break;
      }
    }
    const double gap = std::clamp(crash - *earliest, 0.0, window_s);
    const auto bin = std::min(static_cast<std::size_t>(std::floor(gap / bin_width + detail::kTimeSlack)),
                              h.counts.size() - 1);
    h.counts[bin] += 1;
    h.gaps.push_back(gap);
  }
  return h;
}

inline TtcHistogram time_to_crash_histogram(const std::vector<double>& alarms, const GroundTruth& gt,
                                            double window_s, double bin_width) {
  return time_to_crash_histogram(alarms, label_windows(gt, window_s), window_s, bin_width);
}

/// Table-style formatting: three decimals or "n.a.".
inline std::string format_metric(const std::optional<double>& v, int decimals = 3) {
  if (!v) return "n.a.";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, *v);
  return buf;
}

/// Column order follows the published results table.
inline constexpr const char* kMetricsCsvHeader = "method,tp,fp,tn,fn,tpr,fpr,f1,precision";

inline std::string metrics_csv_row(const std::string& method, const MetricSummary& m, int decimals = 3) {
  std::ostringstream os;
  os << method << ',' << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.tn << ','
     << m.counts.fn << ',' << format_metric(m.tpr, decimals) << ',' << format_metric(m.fpr, decimals)
     << ',' << format_metric(m.f1, decimals) << ',' << format_metric(m.precision, decimals);
  return os.str();
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw SchemaMismatch("cannot parse " + what + " '" + text + "'");
  }
}

inline std::uint64_t parse_count(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size() || text.starts_with('-')) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw SchemaMismatch("cannot parse " + what + " '" + text + "'");
  }
}

}  // namespace detail

/// Crash labels from a `sequence_id,crash_time_s` file with a header row,
/// grouped by sequence and sorted.
inline std::map<std::string, std::vector<double>> read_ground_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open ground truth " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("ground truth file is empty");
  const auto header = detail::split_csv_line(line);
  if (header.size() != 2 || header[0] != "sequence_id" || header[1] != "crash_time_s") {
    throw SchemaMismatch("ground truth header must be 'sequence_id,crash_time_s'");
  }
  std::map<std::string, std::vector<double>> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 2) {
      throw SchemaMismatch("ground truth line " + std::to_string(line_no) + " needs 2 fields");
    }
    out[fields[0]].push_back(detail::parse_double(fields[1], "crash time"));
  }
  for (auto& [id, times] : out) std::sort(times.begin(), times.end());
  return out;
}

inline void write_ground_truth_csv(const std::filesystem::path& path, const std::string& sequence_id,
                                   const std::vector<double>& crashes) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << "sequence_id,crash_time_s\n";
  for (double t : crashes) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", t);
    out << sequence_id << ',' << buf << '\n';
  }
  if (!out) throw IoFailure("cannot write " + path.string());
}

/// Raw confusion counts in `method,tp,fp,tn,fn` form (header required; extra
/// trailing columns are ignored).
inline std::vector<std::pair<std::string, Confusion>> read_counts_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open counts file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("counts file is empty");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 5 || header[0] != "method" || header[1] != "tp" || header[2] != "fp" ||
      header[3] != "tn" || header[4] != "fn") {
    throw SchemaMismatch("counts header must start with 'method,tp,fp,tn,fn'");
  }
  std::vector<std::pair<std::string, Confusion>> out;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() < 5) throw SchemaMismatch("counts row needs 5 fields: " + line);
    out.emplace_back(f[0], Confusion{detail::parse_count(f[1], "tp"), detail::parse_count(f[2], "fp"),
                                     detail::parse_count(f[3], "tn"), detail::parse_count(f[4], "fn")});
  }
  return out;
}

}  // namespace mrtwin
