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

// mrtwin command-line front end.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrtwin.hpp"

namespace fs = std::filesystem;
using namespace mrtwin;

namespace {

enum ExitCode : int {
  kOk = 0,
  kBelowThreshold = 1,
  kConfigError = 2,
  kIoError = 3,
  kBackendError = 4,
  kExhausted = 5,
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "INI config file");
  cmd->add_option("--set", o.overrides, "override a config entry: section.key=value");
}

RunConfig load(const CommonOptions& o) {
  RunConfig c = o.config_path.empty() ? parse_config("", o.overrides) : load_config(o.config_path, o.overrides);
  c.generator.timeout = timeout_from_env("MRTWIN_GEN_TIMEOUT_MS", c.generator.timeout);
  c.sut_external.timeout = timeout_from_env("MRTWIN_SUT_TIMEOUT_MS", c.sut_external.timeout);
  return c;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Numeric-aware MR ordering: mr2 before mr10.
bool mr_less(const std::string& a, const std::string& b) {
  const auto num = [](const std::string& s) -> std::optional<long> {
    if (s.size() < 3 || !s.starts_with("mr")) return std::nullopt;
    try {
      std::size_t used = 0;
      const long v = std::stol(s.substr(2), &used);
      if (used != s.size() - 2) return std::nullopt;
      return v;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  const auto na = num(a);
  const auto nb = num(b);
  if (na && nb) return *na < *nb;
  if (na != nb) return na.has_value();
  return a < b;
}

ResourceFactory make_factory(const RunConfig& c, const fs::path& scratch) {
  auto counter = std::make_shared<std::atomic<int>>(0);
  return [c, scratch, counter]() {
    const fs::path mine = scratch / ("worker" + std::to_string((*counter)++));
    WorkerResources r;
    if (c.backend == BackendKind::builtin) {
      r.backend = std::make_shared<BuiltinBackend>();
    } else {
      auto ext = std::make_shared<ExternalBackend>(c.generator, mine / "gen");
      ext->connect();
      r.backend = ext;
    }
    if (c.sut == SutKind::stub) {
      r.sut = std::make_shared<SutHandle>(SutHandle::stub());
    } else {
      r.sut = std::make_shared<SutHandle>(SutHandle::external(c.sut_external, mine / "sut"));
    }
    return r;
  };
}

std::vector<MrDefinition> select_mrs(const RunConfig& c) {
  const MrRegistry registry = builtin_registry(c.mr);
  std::vector<MrDefinition> out;
  for (const auto& id : c.enabled) out.push_back(registry.get(id));
  return out;
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
  CommonOptions common;
  std::string script_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> length_s;
  std::optional<double> frame_rate;
  std::optional<std::string> sequence_id;
  std::vector<std::string> hazards;
};

int cmd_simulate(const SimulateOptions& o) {
  ScenarioScript script = o.script_path.empty() ? ScenarioScript{} : read_script(o.script_path);
  if (o.seed) script.seed = *o.seed;
  if (o.length_s) script.length_s = *o.length_s;
  if (o.frame_rate) script.frame_rate = *o.frame_rate;
  if (o.sequence_id) script.sequence_id = *o.sequence_id;
  for (const auto& h : o.hazards) {
    Hazard hazard;
    const auto colon = h.find(':');
    try {
      hazard.time_s = std::stod(h.substr(0, colon));
      if (colon != std::string::npos) hazard.magnitude = std::stod(h.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigInvalid("--hazard expects TIME[:MAGNITUDE], got '" + h + "'");
    }
    script = inject_hazard(script, hazard);
  }
  const auto seq = generate_sequence(script, o.out_dir);
  std::cout << seq.dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct GenOptions {
  CommonOptions common;
  std::string sequence_dir;
  std::string mr_id;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool identity = false;
};

int cmd_gen(const GenOptions& o) {
  const RunConfig c = load(o.common);
  const MrDefinition mr = builtin_registry(c.mr).get(o.mr_id);
  const Sequence seq = load_sequence(o.sequence_dir);
  if (seq.frames.empty()) throw NoFrames("sequence has no frames");

  fs::create_directories(o.out_dir);
  auto resources = make_factory(c, fs::path(o.out_dir) / ".scratch")();
  TransformationSpec base = o.identity ? identity_of(mr.transform) : mr.transform;
  base.backend = resources.backend->kind();
  if (!resources.backend->supports(base)) {
    throw UnsupportedTransform("MR '" + mr.id + "' is not executable with the configured backend");
  }
  const std::uint64_t seed = o.seed.value_or(c.seed);

  Json frames = Json::array();
  int code = kOk;
  std::string failure;
  for (std::size_t i = 0; i < seq.frames.size() && code != kBackendError; ++i) {
    const auto& f = seq.frames[i];
    TransformationSpec spec = base;
    spec.seed = seed ^ static_cast<std::uint64_t>(i);
    const fs::path twin_path = fs::path(o.out_dir) / (f.frame_id + ".png");
    Json entry{{"frame_id", f.frame_id}};
    try {
      const ImageBuffer source = read_png(f.path);
      const TwinResult r = generate_compliant(source, f.tags, spec, c.odd, c.retry, *resources.backend,
                                              &f.path, &twin_path);
      if (resources.backend->kind() == BackendKind::builtin) write_png(r.twin, twin_path);
      entry["status"] = "ok";
      entry["twin"] = twin_path.filename().string();
      entry["attempts"] = r.attempts;
      entry["similarity"] = r.similarity;
      entry["seed"] = r.spec_used.seed;
      entry["compliance"] = to_json(r.compliance);
      entry["weather"] = r.twin_tags.count(std::string(tags::kWeather))
                             ? r.twin_tags.at(std::string(tags::kWeather))
                             : std::string();
    } catch (const ExhaustedRetries& e) {
      entry["status"] = "exhausted";
      entry["reason"] = e.what();
      code = kExhausted;
      failure = e.what();
    } catch (const SourceOutOfDomain& e) {
      entry["status"] = "source_out_of_domain";
      entry["reason"] = e.what();
      code = kExhausted;
      failure = e.what();
    } catch (const GeneratorUnavailable& e) {
      entry["status"] = "backend_error";
      entry["reason"] = e.what();
      code = kBackendError;
      failure = e.what();
    } catch (const ProtocolError& e) {
      entry["status"] = "backend_error";
      entry["reason"] = e.what();
      code = kBackendError;
      failure = e.what();
    }
    frames.push_back(std::move(entry));
  }
  if (resources.sut) resources.sut->close();
  resources.backend.reset();
  std::error_code ec;
  fs::remove_all(fs::path(o.out_dir) / ".scratch", ec);

  const Json manifest{{"format", "mrtwin-twins"},
                      {"version", 1},
                      {"sequence_id", seq.sequence_id},
                      {"mr_id", mr.id},
                      {"transform", to_json(base)},
                      {"seed", seed},
                      {"frames", std::move(frames)}};
  std::ofstream out(fs::path(o.out_dir) / "manifest.json", std::ios::binary);
  out << canonical_dump(manifest);
  if (!out) throw IoFailure("cannot write manifest");
  if (code != kOk) std::cerr << "mrtwin gen: " << failure << "\n";
  std::cout << o.out_dir << "\n";
  return code;
}

// ---------------------------------------------------------------------------

struct RunOptions {
  CommonOptions common;
  std::string sequence_dir;
  std::vector<std::string> mrs;
  std::optional<std::uint64_t> seed;
  std::string run_id;
  std::string runs_dir;
  int jobs = 1;
  bool no_twins = false;
};

int cmd_run(const RunOptions& o) {
  RunConfig c = load(o.common);
  if (!o.mrs.empty()) c.enabled = o.mrs;
  if (o.seed) c.seed = *o.seed;
  if (!o.run_id.empty()) c.run_id = o.run_id;
  if (!o.runs_dir.empty()) c.runs_dir = o.runs_dir;
  if (o.no_twins) c.keep_twins = false;
  if (o.jobs < 1) throw ConfigInvalid("--jobs must be at least 1");
  validate_config(c);

  const auto mrs = select_mrs(c);
  const Sequence seq = load_sequence(o.sequence_dir);
  const std::string created = utc_now();
  if (c.run_id.empty()) {
    std::string stamp = created;
    std::erase(stamp, ':');
    std::erase(stamp, '-');
    c.run_id = "run-" + stamp + "-s" + std::to_string(c.seed);
  }
  const fs::path run_dir = c.runs_dir / c.run_id;
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw IoFailure("cannot create " + run_dir.string() + ": " + ec.message());

  PipelineConfig pc;
  pc.odd = c.odd;
  pc.retry = c.retry;
  pc.window = c.window;
  pc.epsilon_t = c.epsilon_t;
  pc.base_seed = c.seed;
  pc.jobs = o.jobs;
  if (c.keep_twins) pc.twins_dir = run_dir / "twins";

  ValidationReport report = run_sequence(seq, mrs, pc, make_factory(c, run_dir / "scratch"));
  fs::remove_all(run_dir / "scratch", ec);
  report.run_id = c.run_id;
  report.created_utc = created;
  report.config = config_snapshot(c);
  const fs::path report_path = run_dir / "report.mrtwin";
  write_report(report, report_path);
  std::cout << report_path.string() << "\n";
  std::cerr << "mrtwin run: " << report.totals.records << " records, " << report.totals.alarms
            << " alarms, " << report.totals.unevaluable << " unevaluable\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  CommonOptions common;
  std::string report_path;
  std::string ground_truth_path;
  std::string counts_path;
  std::string out_dir;
  std::optional<double> window_s;
  std::optional<double> bin_width;
  std::optional<double> fail_under_f1;
};

void print_table(const std::vector<std::pair<std::string, MetricSummary>>& rows) {
  std::printf("%-10s %6s %6s %6s %6s %7s %7s %7s %7s\n", "method", "TP", "FP", "TN", "FN", "TPR", "FPR",
              "F1", "Prec");
  for (const auto& [name, m] : rows) {
    std::printf("%-10s %6llu %6llu %6llu %6llu %7s %7s %7s %7s\n", name.c_str(),
                static_cast<unsigned long long>(m.counts.tp), static_cast<unsigned long long>(m.counts.fp),
                static_cast<unsigned long long>(m.counts.tn), static_cast<unsigned long long>(m.counts.fn),
                format_metric(m.tpr).c_str(), format_metric(m.fpr).c_str(), format_metric(m.f1).c_str(),
                format_metric(m.precision).c_str());
  }
}

Json metrics_json(const std::string& name, const MetricSummary& m) {
  const auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{{"method", name},      {"tp", m.counts.tp},     {"fp", m.counts.fp},
              {"tn", m.counts.tn},   {"fn", m.counts.fn},     {"tpr", opt(m.tpr)},
              {"fpr", opt(m.fpr)},   {"f1", opt(m.f1)},       {"precision", opt(m.precision)}};
}

int cmd_eval(const EvalOptions& o) {
  const RunConfig c = load(o.common);
  const double window_s = o.window_s.value_or(c.eval_window_s);
  const double bin_width = o.bin_width.value_or(c.bin_width);
  if (!(window_s > 0.0) || !(bin_width > 0.0)) throw ConfigInvalid("window and bin width must be positive");

  std::vector<std::pair<std::string, MetricSummary>> rows;
  Json histograms = Json::array();
  fs::path out_dir = o.out_dir;

  if (!o.counts_path.empty()) {
    for (const auto& [name, counts] : read_counts_csv(o.counts_path)) rows.emplace_back(name, metrics(counts));
  } else {
    const ValidationReport report = read_report(o.report_path);
    const auto crashes = read_ground_truth_csv(o.ground_truth_path);
    GroundTruth gt;
    gt.span_start = report.sequence.span_start;
    gt.span_end = report.sequence.span_end;
    gt.frame_rate = report.sequence.frame_rate;
    if (const auto it = crashes.find(report.sequence.sequence_id); it != crashes.end()) gt.crash_events = it->second;
    const Labeling labeling = label_windows(gt, window_s);
    for (const auto& w : labeling.warnings) std::cerr << "mrtwin eval: " << w << "\n";

    std::vector<std::string> ids;
    for (const auto& m : report.mrs) ids.push_back(m.id);
    std::sort(ids.begin(), ids.end(), mr_less);
    const auto alarms = derive_alarms(report);
    for (const auto& id : ids) {
      const auto times = alarm_times(alarms, id);
      rows.emplace_back(id, metrics(confusion(times, labeling.intervals)));
      const TtcHistogram h = time_to_crash_histogram(times, labeling, window_s, bin_width);
      histograms.push_back(Json{{"mr_id", id},
                                {"bin_width", h.bin_width},
                                {"window_s", h.window_length},
                                {"counts", h.counts},
                                {"gaps", h.gaps},
                                {"total", h.total()}});
    }
    if (out_dir.empty()) out_dir = fs::path(o.report_path).parent_path();
  }

  print_table(rows);

  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream csv(out_dir / "metrics.csv");
    csv << kMetricsCsvHeader << "\n";
    Json metrics_doc = Json::array();
    for (const auto& [name, m] : rows) {
      csv << metrics_csv_row(name, m, 6) << "\n";
      metrics_doc.push_back(metrics_json(name, m));
    }
    std::ofstream json(out_dir / "metrics.json");
    json << canonical_dump(Json{{"window_s", window_s}, {"metrics", metrics_doc}});
    if (!histograms.empty()) {
      std::ofstream hist(out_dir / "histogram.json");
      hist << canonical_dump(Json{{"histograms", histograms}});
      std::ofstream hist_csv(out_dir / "histogram.csv");
      hist_csv << "mr_id,bin_start_s,bin_end_s,count\n";
      for (const auto& h : histograms) {
        const double bw = h["bin_width"].get<double>();
        const auto& counts = h["counts"];
        for (std::size_t b = 0; b < counts.size(); ++b) {
          char line[128];
          std::snprintf(line, sizeof(line), "%s,%.3f,%.3f,%llu\n", h["mr_id"].get<std::string>().c_str(),
                        bw * static_cast<double>(b), bw * static_cast<double>(b + 1),
                        static_cast<unsigned long long>(counts[b].get<std::uint64_t>()));
          hist_csv << line;
        }
      }
    }
    csv.close();
    if (!csv) throw IoFailure("cannot write metrics to " + out_dir.string());
  }

  if (o.fail_under_f1) {
    for (const auto& [name, m] : rows) {
      if (m.f1.value_or(0.0) < *o.fail_under_f1) {
        std::cerr << "mrtwin eval: " << name << " F1 " << format_metric(m.f1) << " is below "
                  << *o.fail_under_f1 << "\n";
        return kBelowThreshold;
      }
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct ReportOptions {
  std::string report_path;
  bool json = false;
};

int cmd_report(const ReportOptions& o) {
  const ValidationReport report = read_report(o.report_path);
  struct Row {
    std::size_t records = 0, evaluable = 0, alarms = 0, unevaluable = 0, gated = 0;
    double distance_sum = 0.0;
  };
  std::map<std::string, Row, decltype(&mr_less)> rows(&mr_less);
  for (const auto& m : report.mrs) rows[m.id];
  for (const auto& r : report.records) {
    Row& row = rows[r.mr_id];
    row.records++;
    if (r.unevaluable) {
      row.unevaluable++;
      continue;
    }
    row.evaluable++;
    row.alarms += r.alarm ? 1 : 0;
    row.gated += r.relation.uncertainty_gated ? 1 : 0;
    row.distance_sum += r.relation.distance;
  }
  if (o.json) {
    Json mrs = Json::array();
    for (const auto& [id, row] : rows) {
      mrs.push_back(Json{{"mr_id", id},
                         {"records", row.records},
                         {"alarms", row.alarms},
                         {"unevaluable", row.unevaluable},
                         {"uncertainty_gated", row.gated},
                         {"mean_distance", row.evaluable ? row.distance_sum / row.evaluable : 0.0}});
    }
    std::cout << canonical_dump(Json{{"run_id", report.run_id},
                                     {"sequence_id", report.sequence.sequence_id},
                                     {"frames", report.totals.frames},
                                     {"mrs", mrs}})
              << "\n";
    return kOk;
  }
  std::printf("run %s  sequence %s  frames %zu  span [%.3f, %.3f] s\n", report.run_id.c_str(),
              report.sequence.sequence_id.c_str(), report.totals.frames, report.sequence.span_start,
              report.sequence.span_end);
  std::printf("%-8s %8s %8s %8s %8s %10s\n", "mr", "records", "alarms", "uneval", "gated", "mean_dist");
  for (const auto& [id, row] : rows) {
    std::printf("%-8s %8zu %8zu %8zu %8zu %10.4f\n", id.c_str(), row.records, row.alarms, row.unevaluable,
                row.gated, row.evaluable ? row.distance_sum / row.evaluable : 0.0);
  }
  std::printf("total    %8zu %8zu %8zu\n", report.totals.records, report.totals.alarms,
              report.totals.unevaluable);
  return kOk;
}

// ---------------------------------------------------------------------------

struct ConfigOptions {
  CommonOptions common;
  bool dump_defaults = false;
  std::string check_path;
};

int cmd_config(const ConfigOptions& o) {
  if (o.dump_defaults) {
    std::cout << dump_config(RunConfig{});
    return kOk;
  }
  CommonOptions common = o.common;
  if (!o.check_path.empty()) common.config_path = o.check_path;
  std::cout << dump_config(load(common));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrtwin: metamorphic testing of driving perception with ODD-compliant twins"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "render a synthetic driving sequence");
  add_common(simulate, sim.common);
  simulate->add_option("--script", sim.script_path, "scenario script (JSON)");
  simulate->add_option("-o,--out", sim.out_dir, "output sequence directory")->required();
  simulate->add_option("--seed", sim.seed, "override the script seed");
  simulate->add_option("--length-s", sim.length_s, "override the sequence length");
  simulate->add_option("--frame-rate", sim.frame_rate, "override the frame rate");
  simulate->add_option("--sequence-id", sim.sequence_id, "override the sequence id");
  simulate->add_option("--hazard", sim.hazards, "inject a lane-shift hazard: TIME[:MAGNITUDE]");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate ODD-compliant twins for a sequence");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--sequence", gen.sequence_dir, "sequence directory")->required();
  gen_cmd->add_option("--mr", gen.mr_id, "MR id, e.g. mr2")->required();
  gen_cmd->add_option("-o,--out", gen.out_dir, "twin output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "base seed (default: run.seed)");
  gen_cmd->add_flag("--identity", gen.identity, "use the identity parameterization of the MR");

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "validate a SUT over a sequence");
  add_common(run_cmd, run.common);
  run_cmd->add_option("--sequence", run.sequence_dir, "sequence directory")->required();
  run_cmd->add_option("--mrs", run.mrs, "MR ids to run (default: mr.enabled)")->delimiter(',');
  run_cmd->add_option("--seed", run.seed, "base seed (default: run.seed)");
  run_cmd->add_option("--run-id", run.run_id, "run id (default: derived from time and seed)");
  run_cmd->add_option("--runs-dir", run.runs_dir, "parent directory of run outputs");
  run_cmd->add_option("-j,--jobs", run.jobs, "parallel MR workers")->default_val(1);
  run_cmd->add_flag("--no-twins", run.no_twins, "do not keep twin images");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "score alarms against crash ground truth");
  add_common(eval, ev.common);
  auto* report_opt = eval->add_option("--report", ev.report_path, "validation report");
  auto* gt_opt = eval->add_option("--ground-truth", ev.ground_truth_path, "crash labels CSV");
  auto* counts_opt = eval->add_option("--counts", ev.counts_path, "confusion counts CSV (method,tp,fp,tn,fn)");
  report_opt->needs(gt_opt);
  gt_opt->needs(report_opt);
  counts_opt->excludes(report_opt)->excludes(gt_opt);
  eval->add_option("-o,--out", ev.out_dir, "metrics output directory (default: beside the report)");
  eval->add_option("--window-s", ev.window_s, "pre-crash window length");
  eval->add_option("--bin-width", ev.bin_width, "time-to-crash histogram bin width");
  eval->add_option("--fail-under-f1", ev.fail_under_f1, "exit 1 if any method's F1 is below this");

  ReportOptions rep;
  auto* report = app.add_subcommand("report", "summarize a validation report");
  report->add_option("--report", rep.report_path, "validation report")->required();
  report->add_flag("--json", rep.json, "print JSON");

  ConfigOptions cfg;
  auto* config = app.add_subcommand("config", "print or check configuration");
  add_common(config, cfg.common);
  config->add_flag("--dump-defaults", cfg.dump_defaults, "print the default configuration");
  config->add_option("--check", cfg.check_path, "parse a config file and print it resolved");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }
  if (*eval && ev.counts_path.empty() && ev.report_path.empty()) {
    std::cerr << "mrtwin eval: give --report with --ground-truth, or --counts\n";
    return kConfigError;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*gen_cmd) return cmd_gen(gen);
    if (*run_cmd) return cmd_run(run);
    if (*eval) return cmd_eval(ev);
    if (*report) return cmd_report(rep);
    if (*config) return cmd_config(cfg);
  } catch (const ExhaustedRetries& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kExhausted;
  } catch (const SourceOutOfDomain& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kExhausted;
  } catch (const UnsupportedTransform& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kConfigError;
  } catch (const LaunchFailure& e) {
    std::cerr << "mrtwin: backend launch failed: " << e.what() << "\n";
    return kBackendError;
  } catch (const GeneratorUnavailable& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kBackendError;
  } catch (const ProtocolError& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kBackendError;
  } catch (const IoFailure& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kIoError;
  } catch (const InvalidImage& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kIoError;
  } catch (const Error& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "mrtwin: " << e.what() << "\n";
    return kIoError;
  }
  return kConfigError;
}
