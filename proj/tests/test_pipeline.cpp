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

#include <gtest/gtest.h>

#include "mrtwin/config.hpp"
#include "mrtwin/pipeline.hpp"
#include "mrtwin/scenario.hpp"
#include "support.hpp"

namespace {

using namespace mrtwin;
namespace fs = std::filesystem;

ScenarioScript script(double length_s, std::vector<Hazard> hazards = {}) {
  ScenarioScript s;
  s.length_s = length_s;
  s.frame_rate = 10.0;
  s.width = 128;
  s.height = 64;
  s.hazards = std::move(hazards);
  return s;
}

PipelineConfig pipeline_config() {
  PipelineConfig cfg;
  cfg.odd = default_odd();
  return cfg;
}

MrDefinition builtin(const std::string& id) {
  for (auto& m : builtin_definitions()) {
    if (m.id == id) return m;
  }
  throw UnknownMr(id);
}

std::vector<MrDefinition> identity_mrs() {
  std::vector<MrDefinition> out;
  for (const char* id : {"mr1", "mr2", "mr3"}) {
    auto m = builtin(id);
    m.transform = identity_of(m.transform);
    out.push_back(m);
  }
  return out;
}

class PipelineTest : public ::testing::Test {
 protected:
  Sequence make(const ScenarioScript& s) {
    generate_sequence(s, dir_ / s.sequence_id);
    return load_sequence(dir_ / s.sequence_id);
  }
  testing_support::TempDir dir_;
};

TEST_F(PipelineTest, LoadSequenceReadsTags) {
  const auto seq = make(script(2.0));
  ASSERT_EQ(seq.frames.size(), 20U);
  EXPECT_EQ(seq.sequence_id, "seq0");
  EXPECT_DOUBLE_EQ(seq.span_end(), 2.0);
  EXPECT_EQ(seq.frames[3].tags.at("weather"), "clear");
  EXPECT_EQ(seq.frames[0].tags.at("time_of_day_h"), "12.000000");
  EXPECT_THROW(load_sequence(dir_ / "missing"), IoFailure);
}

TEST_F(PipelineTest, IdentityRaisesNoAlarms) {
  const auto seq = make(script(6.0, {Hazard{4.0, HazardKind::lane_shift, 0.5}}));
  BuiltinBackend backend;
  auto sut = SutHandle::stub();
  const auto report = run_sequence(seq, identity_mrs(), pipeline_config(), backend, sut);
  EXPECT_EQ(report.records.size(), seq.frames.size() * 3);
  EXPECT_EQ(report.totals.alarms, 0U);
  EXPECT_EQ(report.totals.unevaluable, 0U);
  for (const auto& r : report.records) EXPECT_EQ(r.attempts, 1);
}

TEST_F(PipelineTest, NarrowingAlarmsBeforeCrash) {
  auto s = script(12.0, {Hazard{9.0, HazardKind::lane_shift, 0.5}});
  const auto seq = make(s);
  BuiltinBackend backend;
  auto sut = SutHandle::stub();
  const auto report = run_sequence(seq, {builtin("mr3")}, pipeline_config(), backend, sut);
  const auto times = alarm_times(derive_alarms(report), "mr3");
  const auto in_window = std::count_if(times.begin(), times.end(), [](double t) { return t >= 4.0 && t <= 9.0; });
  EXPECT_GE(in_window, 1);
}

std::vector<MrDefinition> executable_mrs() {
  auto all = builtin_definitions();
  all.resize(3);
  return all;
}

TEST_F(PipelineTest, RecordsFollowTheAlarmRule) {
  const auto seq = make(script(6.0, {Hazard{4.0, HazardKind::lane_shift, 0.4}}));
  BuiltinBackend backend;
  auto sut = SutHandle::stub();
  const auto report = run_sequence(seq, executable_mrs(), pipeline_config(), backend, sut);
  ASSERT_EQ(report.records.size(), seq.frames.size() * 3);
  std::size_t alarms = 0;
  for (const auto& r : report.records) {
    // Independent re-derivation from the recorded values.
    const bool gate = r.excess_uncertainty > builtin(r.mr_id).theta_u;
    EXPECT_EQ(r.relation.uncertainty_gated, gate);
    const bool temporal = std::abs(r.src_smoothed - r.twin_smoothed) <= 0.1 + 1e-12;
    EXPECT_EQ(r.temporal_ok, temporal) << r.mr_id << " " << r.frame_id;
    EXPECT_EQ(r.alarm, !r.unevaluable && (!r.relation.passed || !r.temporal_ok));
    alarms += r.alarm ? 1 : 0;
  }
  EXPECT_EQ(report.totals.alarms, alarms);
  const auto derived = derive_alarms(report);
  EXPECT_EQ(derived.size(), alarms);
  EXPECT_TRUE(std::is_sorted(derived.begin(), derived.end(), [](const Alarm& a, const Alarm& b) {
    return a.timestamp_s < b.timestamp_s || (a.timestamp_s == b.timestamp_s && a.mr_id < b.mr_id);
  }));
  EXPECT_TRUE(std::is_sorted(report.records.begin(), report.records.end(), [](const auto& a, const auto& b) {
    return a.mr_id < b.mr_id || (a.mr_id == b.mr_id && a.timestamp_s < b.timestamp_s);
  }));
}

TEST_F(PipelineTest, HungSutFrameIsUnevaluable) {
  const auto seq = make(script(1.0));
  ExternalSutConfig cfg;
  cfg.command = std::string(MRTWIN_ECHO_SUT) + " --stub --hang-on frame_000003";
  cfg.timeout = std::chrono::milliseconds(400);
  BuiltinBackend backend;
  auto sut = SutHandle::external(cfg, dir_ / "scratch");
  auto mr = builtin("mr2");
  const auto report = run_sequence(seq, {mr}, pipeline_config(), backend, sut);
  ASSERT_EQ(report.records.size(), 10U);
  EXPECT_EQ(report.totals.unevaluable, 1U);
  for (const auto& r : report.records) {
    if (r.frame_id == "frame_000003") {
      EXPECT_TRUE(r.unevaluable);
      EXPECT_FALSE(r.alarm);
      EXPECT_FALSE(r.reason.empty());
    } else {
      EXPECT_FALSE(r.unevaluable) << r.frame_id;
    }
  }
}

TEST_F(PipelineTest, ExternalStubMatchesInProcessStub) {
  const auto seq = make(script(1.0, {Hazard{0.5, HazardKind::lane_shift, 0.3}}));
  ExternalSutConfig cfg;
  cfg.command = std::string(MRTWIN_ECHO_SUT) + " --stub";
  BuiltinBackend backend;
  auto external = SutHandle::external(cfg, dir_ / "scratch");
  auto local = SutHandle::stub();
  auto pc = pipeline_config();
  pc.twins_dir = dir_ / "twins";
  const auto a = run_sequence(seq, executable_mrs(), pc, backend, external);
  const auto b = run_sequence(seq, executable_mrs(), pc, backend, local);
  EXPECT_EQ(serialize_report(a), serialize_report(b));
  EXPECT_TRUE(fs::exists(dir_ / "twins" / "mr2" / "frame_000009.png"));
}

TEST_F(PipelineTest, ReportRoundTripIsByteIdentical) {
  const auto seq = make(script(3.0, {Hazard{2.0, HazardKind::lane_shift, 0.5}}));
  BuiltinBackend backend;
  auto sut = SutHandle::stub();
  auto report = run_sequence(seq, executable_mrs(), pipeline_config(), backend, sut);
  report.run_id = "r1";
  report.created_utc = "2026-01-01T00:00:00Z";
  report.config = Json{{"seed", 0}};
  write_report(report, dir_ / "a.mrtwin");
  const auto back = read_report(dir_ / "a.mrtwin");
  write_report(back, dir_ / "b.mrtwin");
  EXPECT_EQ(testing_support::read_file(dir_ / "a.mrtwin"), testing_support::read_file(dir_ / "b.mrtwin"));
  EXPECT_EQ(back.run_id, "r1");
  EXPECT_EQ(back.totals, report.totals);
  EXPECT_EQ(derive_alarms(back), derive_alarms(report));
  EXPECT_THROW(write_report(report, dir_ / "nope" / "x.mrtwin"), IoFailure);
}

TEST_F(PipelineTest, ParseRejectsTamperedReports) {
  const auto seq = make(script(1.0));
  BuiltinBackend backend;
  auto sut = SutHandle::stub();
  const auto text = serialize_report(run_sequence(seq, {builtin("mr1")}, pipeline_config(), backend, sut));
  EXPECT_THROW(parse_report("not a report\n{}"), SchemaMismatch);
  EXPECT_THROW(parse_report(text.substr(0, text.size() / 2)), SchemaMismatch);
  auto tampered = text;
  const auto pos = tampered.find("\"records\": 10");
  ASSERT_NE(pos, std::string::npos);
  tampered.replace(pos, 13, "\"records\": 11");
  EXPECT_THROW(parse_report(tampered), SchemaMismatch);
}

TEST_F(PipelineTest, DeterministicAndParallelInvariant) {
  const auto seq = make(script(4.0, {Hazard{3.0, HazardKind::lane_shift, 0.4}}));
  auto pc = pipeline_config();
  pc.base_seed = 1234;
  const ResourceFactory factory = [] {
    return WorkerResources{std::make_shared<BuiltinBackend>(), std::make_shared<SutHandle>(SutHandle::stub())};
  };
  const auto a = serialize_report(run_sequence(seq, executable_mrs(), pc, factory));
  const auto b = serialize_report(run_sequence(seq, executable_mrs(), pc, factory));
  pc.jobs = 3;
  const auto c = serialize_report(run_sequence(seq, executable_mrs(), pc, factory));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  pc.base_seed = 1235;
  EXPECT_NE(a, serialize_report(run_sequence(seq, executable_mrs(), pc, factory)));
}

TEST_F(PipelineTest, ConfigurationErrorsStopTheRun) {
  const auto seq = make(script(1.0));
  BuiltinBackend backend;
  auto sut = SutHandle::stub();
  const auto all = builtin_definitions();
  const auto mr4 = std::find_if(all.begin(), all.end(), [](const auto& m) { return m.id == "mr4"; });
  EXPECT_THROW(run_sequence(seq, {*mr4}, pipeline_config(), backend, sut), UnsupportedTransform);
  EXPECT_THROW(run_sequence(seq, {}, pipeline_config(), backend, sut), ConfigInvalid);
  auto bad = builtin("mr1");
  bad.theta_u = 0.0;
  EXPECT_THROW(run_sequence(seq, {bad}, pipeline_config(), backend, sut), InvalidThresholds);
  Sequence empty;
  EXPECT_THROW(run_sequence(empty, {builtin("mr1")}, pipeline_config(), backend, sut), NoFrames);
}

}  // namespace
