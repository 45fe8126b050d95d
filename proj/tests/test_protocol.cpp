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

#include <chrono>

#include "mrtwin/protocol.hpp"
#include "support.hpp"

namespace {

using namespace mrtwin;
using namespace std::chrono_literals;
using testing_support::TempDir;

const std::string kGen = MRTWIN_ECHO_GENERATOR;

std::string gen_cmd(const std::string& args = "") { return "'" + kGen + "' " + args; }

TransformationSpec identity_spec() {
  TransformationSpec s;
  s.id = "identity";
  s.semantic = SemDelta{0.0, std::nullopt};
  s.backend = BackendKind::external;
  return s;
}

struct Frame {
  TempDir dir;
  std::filesystem::path input;
  Frame() : input(dir / "in.png") { write_png(testing_support::random_image(64, 80, 1), input); }
};

std::vector<Json> read_log(const std::filesystem::path& p) {
  std::vector<Json> out;
  std::istringstream in(testing_support::read_file(p));
  std::string line;
  while (std::getline(in, line)) out.push_back(Json::parse(line));
  return out;
}

TEST(Handshake, EchoGeneratorAdvertisesIdentity) {
  auto g = GeneratorSession::open(gen_cmd(), 5000ms);
  EXPECT_TRUE(g.is_open());
  EXPECT_TRUE(g.supports("identity"));
  EXPECT_FALSE(g.supports("mr2.snow"));
}

TEST(Handshake, CapabilitiesComeFromHello) {
  auto g = GeneratorSession::open(gen_cmd("--capabilities identity,mr2.snow,mr4.agent_substitution"), 5000ms);
  EXPECT_EQ(g.capabilities(), (std::set<std::string>{"identity", "mr2.snow", "mr4.agent_substitution"}));
}

TEST(Handshake, HarnessAcknowledgesWithVersion) {
  TempDir dir;
  auto g = GeneratorSession::open(gen_cmd("--log '" + (dir / "log").string() + "'"), 5000ms);
  g.close();
  const auto log = read_log(dir / "log");
  ASSERT_GE(log.size(), 2U);
  EXPECT_EQ(log[0], (Json{{"type", "hello_ack"}, {"version", "1"}}));
  EXPECT_EQ(log.back(), (Json{{"type", "shutdown"}}));
}

TEST(Handshake, MissingExecutableIsLaunchFailure) {
  EXPECT_THROW(GeneratorSession::open("/nonexistent/mrtwin-generator --x", 2000ms), LaunchFailure);
  EXPECT_THROW(GeneratorSession::open("", 2000ms), LaunchFailure);
}

TEST(Handshake, MissingWorkdirIsLaunchFailure) {
  EXPECT_THROW(GeneratorSession::open(gen_cmd(), 2000ms, "/nonexistent/dir"), LaunchFailure);
}

TEST(Handshake, SilentPeerTimesOut) {
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(GeneratorSession::open(gen_cmd("--mode no-hello"), 300ms), HandshakeTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, 3000ms);
}

TEST(Handshake, WrongVersionIsRejected) {
  EXPECT_THROW(GeneratorSession::open(gen_cmd("--mode bad-version"), 5000ms), ProtocolVersionMismatch);
}

TEST(Transform, IdentityOutputIsByteIdentical) {
  Frame f;
  auto g = GeneratorSession::open(gen_cmd(), 5000ms);
  const auto out = g.request_transform(f.input, identity_spec(), f.dir / "out.png");
  EXPECT_EQ(testing_support::read_file(out), testing_support::read_file(f.input));
}

TEST(Transform, UnsupportedIdSendsNothing) {
  Frame f;
  auto g = GeneratorSession::open(gen_cmd("--log '" + (f.dir / "log").string() + "'"), 5000ms);
  auto spec = identity_spec();
  spec.id = "mr2.snow";
  EXPECT_THROW(g.request_transform(f.input, spec, f.dir / "out.png"), UnsupportedTransform);
  EXPECT_EQ(g.last_request_id(), 0U);
  g.close();
  for (const auto& msg : read_log(f.dir / "log")) EXPECT_NE(msg["type"], "transform");
}

TEST(Transform, RequestIdsIncreaseAndSpecIsCarried) {
  Frame f;
  Json settings{{"strength", 0.2}, {"guidance_scale", 10.0}};
  auto g = GeneratorSession::open(gen_cmd("--log '" + (f.dir / "log").string() + "'"), 5000ms, {}, settings);
  auto spec = identity_spec();
  spec.seed = 42;
  for (int i = 0; i < 3; ++i) g.request_transform(f.input, spec, f.dir / "out.png");
  EXPECT_EQ(g.last_request_id(), 3U);
  g.close();
  std::vector<std::uint64_t> ids;
  for (const auto& msg : read_log(f.dir / "log")) {
    if (msg["type"] != "transform") continue;
    ids.push_back(msg["id"].get<std::uint64_t>());
    EXPECT_EQ(msg["spec"]["id"], "identity");
    EXPECT_EQ(msg["spec"]["seed"], 42);
    EXPECT_EQ(msg["spec"]["settings"], settings);
    EXPECT_TRUE(std::filesystem::path(msg["input_path"].get<std::string>()).is_absolute());
  }
  EXPECT_EQ(ids, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Transform, MismatchedIdIsMalformed) {
  Frame f;
  auto g = GeneratorSession::open(gen_cmd("--mode bad-id"), 5000ms);
  EXPECT_THROW(g.request_transform(f.input, identity_spec(), f.dir / "out.png"), MalformedResponse);
  EXPECT_FALSE(g.is_open());
}

TEST(Transform, GarbageIsMalformed) {
  Frame f;
  auto g = GeneratorSession::open(gen_cmd("--mode garbage"), 5000ms);
  EXPECT_THROW(g.request_transform(f.input, identity_spec(), f.dir / "out.png"), MalformedResponse);
}

TEST(Transform, WrongDimensionsAreMalformed) {
  Frame f;
  auto g = GeneratorSession::open(gen_cmd("--mode wrong-dims"), 5000ms);
  EXPECT_THROW(g.request_transform(f.input, identity_spec(), f.dir / "out.png"), MalformedResponse);
}

TEST(Transform, ReportedErrorSurfacesMessage) {
  Frame f;
  auto g = GeneratorSession::open(gen_cmd("--mode error"), 5000ms);
  try {
    g.request_transform(f.input, identity_spec(), f.dir / "out.png");
    FAIL() << "expected GeneratorReportedError";
  } catch (const GeneratorReportedError& e) {
    EXPECT_NE(std::string(e.what()).find("scripted failure"), std::string::npos);
  }
  // A reported error is a valid response; the session stays usable.
  EXPECT_TRUE(g.is_open());
}

TEST(Transform, HangTimesOutAndPoisonsSession) {
  Frame f;
  auto g = GeneratorSession::open(gen_cmd("--mode hang"), 300ms);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(g.request_transform(f.input, identity_spec(), f.dir / "out.png"), GeneratorTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, 3000ms);
  EXPECT_FALSE(g.is_open());
  EXPECT_THROW(g.request_transform(f.input, identity_spec(), f.dir / "out.png"), SessionClosed);
  const auto close_start = std::chrono::steady_clock::now();
  g.close();
  EXPECT_LT(std::chrono::steady_clock::now() - close_start, 3000ms);
}

TEST(Transform, PeerExitIsGeneratorUnavailable) {
  Frame f;
  auto g = GeneratorSession::open(gen_cmd("--mode exit-early"), 5000ms);
  EXPECT_THROW(g.request_transform(f.input, identity_spec(), f.dir / "out.png"), GeneratorUnavailable);
}

TEST(Close, IdempotentAndCleanExit) {
  auto g = GeneratorSession::open(gen_cmd(), 5000ms);
  g.close();
  EXPECT_EQ(g.exit_code(), std::optional<int>(0));
  g.close();
  EXPECT_FALSE(g.is_open());
  EXPECT_EQ(g.exit_code(), std::optional<int>(0));
}

TEST(ExternalBackend, RecoversAfterTimeout) {
  TempDir dir;
  const auto a = dir / "a.png";
  const auto slow = dir / "slow.png";
  write_png(testing_support::random_image(64, 64, 2), a);
  write_png(testing_support::random_image(64, 64, 3), slow);
  ExternalBackend backend({gen_cmd("--hang-on slow"), {}, 300ms, Json::object()}, dir / "scratch");
  backend.connect();
  EXPECT_TRUE(backend.supports(identity_spec()));
  const auto img = read_png(a);
  EXPECT_EQ(backend.generate(img, &a, identity_spec(), nullptr), img);
  EXPECT_THROW(backend.generate(read_png(slow), &slow, identity_spec(), nullptr), GeneratorTimeout);
  // The next call relaunches the generator.
  EXPECT_EQ(backend.generate(img, &a, identity_spec(), nullptr), img);
  // Without paths the backend stages files in scratch.
  EXPECT_EQ(backend.generate(img, nullptr, identity_spec(), nullptr), img);
}

TEST(ExternalBackend, LaunchFailureBecomesUnavailableDuringGenerate) {
  TempDir dir;
  ExternalBackend backend({"/nonexistent/gen", {}, 300ms, Json::object()}, dir / "scratch");
  EXPECT_THROW(backend.connect(), LaunchFailure);
  EXPECT_THROW(backend.generate(ImageBuffer(64, 64, 3), nullptr, identity_spec(), nullptr), GeneratorUnavailable);
}

TEST(Timeouts, EnvironmentOverride) {
  ::setenv("MRTWIN_TEST_TIMEOUT", "1500", 1);
  EXPECT_EQ(timeout_from_env("MRTWIN_TEST_TIMEOUT", 10ms), 1500ms);
  ::setenv("MRTWIN_TEST_TIMEOUT", "abc", 1);
  EXPECT_EQ(timeout_from_env("MRTWIN_TEST_TIMEOUT", 10ms), 10ms);
  ::unsetenv("MRTWIN_TEST_TIMEOUT");
  EXPECT_EQ(timeout_from_env("MRTWIN_TEST_TIMEOUT", 10ms), 10ms);
  EXPECT_EQ(kDefaultGeneratorTimeout, 120000ms);
  EXPECT_EQ(kDefaultSutTimeout, 120000ms);
}

TEST(SplitCommand, QuotesAndEscapes) {
  EXPECT_EQ(split_command("a 'b c' \"d e\" f\\ g"), (std::vector<std::string>{"a", "b c", "d e", "f g"}));
  EXPECT_TRUE(split_command("   ").empty());
}

}  // namespace
