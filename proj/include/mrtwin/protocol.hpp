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

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "mrtwin/errors.hpp"
#include "mrtwin/image.hpp"
#include "mrtwin/json_io.hpp"
#include "mrtwin/process.hpp"
#include "mrtwin/transform.hpp"

namespace mrtwin {

// Wire protocol, version "1": one JSON object per line over the child's
// stdin/stdout. The child opens with
//   {"type":"hello","version":"1","capabilities":[...]}
// and the harness answers {"type":"hello_ack","version":"1"}. Every request
// carries a fresh id which the response must echo. {"type":"shutdown"} ends a
// session. docs/protocol.md has the full schema.
inline constexpr std::string_view kProtocolVersion = "1";

inline constexpr std::chrono::milliseconds kDefaultGeneratorTimeout{120000};
inline constexpr std::chrono::milliseconds kDefaultSutTimeout{120000};

/// Reads a millisecond timeout from `var`, falling back to `fallback` when
/// unset. Malformed values are ignored.
inline std::chrono::milliseconds timeout_from_env(const char* var,
                                                  std::chrono::milliseconds fallback) {
  const char* raw = std::getenv(var);
  if (raw == nullptr || *raw == '\0') return fallback;
  char* end = nullptr;
  const long long v = std::strtoll(raw, &end, 10);
  if (end == raw || *end != '\0' || v <= 0) return fallback;
  return std::chrono::milliseconds(v);
}

/// Which side of the harness a session serves; selects the timeout error type.
enum class PeerRole { generator, sut };

/// Handshaken line session with one child process. Single owner; one request
/// in flight at a time. A timed-out request poisons the session, since a late
/// response could otherwise be mistaken for the next one.
class LineSession {
 public:
  LineSession() = default;
  LineSession(LineSession&&) noexcept = default;
  LineSession& operator=(LineSession&& other) noexcept {
    if (this != &other) {
      close();
      child_ = std::move(other.child_);
      capabilities_ = std::move(other.capabilities_);
      timeout_ = other.timeout_;
      role_ = other.role_;
      next_id_ = other.next_id_;
      open_ = std::exchange(other.open_, false);
      poisoned_ = other.poisoned_;
      exit_code_ = other.exit_code_;
    }
    return *this;
  }
  ~LineSession() { close(); }

  static LineSession open(const std::string& command_line, std::chrono::milliseconds timeout,
                          PeerRole role, const std::filesystem::path& workdir = {}) {
    LineSession s;
    s.role_ = role;
    s.timeout_ = timeout;
    const auto argv = split_command(command_line);
    if (!workdir.empty() && !std::filesystem::is_directory(workdir)) {
      throw LaunchFailure("working directory does not exist: " + workdir.string());
    }
    s.child_ = ChildProcess::launch(argv, workdir);
    s.handshake();
    s.open_ = true;
    return s;
  }

  bool is_open() const noexcept { return open_ && !poisoned_; }
  const std::set<std::string>& capabilities() const noexcept { return capabilities_; }
  std::chrono::milliseconds timeout() const noexcept { return timeout_; }
  std::uint64_t last_request_id() const noexcept { return next_id_ - 1; }

  /// Sends `request` (its "id" is assigned here) and returns the response
  /// whose "type" must equal `expected_type` and whose "id" must match.
  Json call(Json request, std::string_view expected_type) {
    if (!open_) throw SessionClosed("session is closed");
    if (poisoned_) throw SessionClosed("session abandoned after an unanswered request");
    const std::uint64_t id = next_id_++;
    request["id"] = id;
    try {
      child_.write_line(request.dump());
    } catch (const PeerExited& e) {
      poisoned_ = true;
      throw_peer_exited(e.what());
    }
    std::optional<std::string> line;
    try {
      line = child_.read_line(timeout_);
    } catch (const PeerExited& e) {
      poisoned_ = true;
      throw_peer_exited(e.what());
    } catch (const MalformedResponse&) {
      poisoned_ = true;
      throw;
    }
    if (!line) {
      poisoned_ = true;
      throw_timeout("no response to request " + std::to_string(id) + " within " +
                    std::to_string(timeout_.count()) + " ms");
    }
    Json response;
    try {
      response = Json::parse(*line);
    } catch (const nlohmann::json::exception&) {
      poisoned_ = true;
      throw MalformedResponse("response is not JSON: " + line->substr(0, 200));
    }
    if (!response.is_object()) {
      poisoned_ = true;
      throw MalformedResponse("response is not an object");
    }
    const auto id_it = response.find("id");
    if (id_it == response.end() || !id_it->is_number_unsigned() ||
        id_it->get<std::uint64_t>() != id) {
      poisoned_ = true;
      throw MalformedResponse("response id does not echo request id " + std::to_string(id));
    }
    const auto type_it = response.find("type");
    if (type_it == response.end() || !type_it->is_string() ||
        type_it->get<std::string>() != expected_type) {
      poisoned_ = true;
      throw MalformedResponse("expected a '" + std::string(expected_type) + "' response");
    }
    return response;
  }

  /// Sends shutdown, waits briefly for the child, then terminates it.
  /// Idempotent; never throws.
  void close() noexcept {
    if (!child_.started()) {
      open_ = false;
      return;
    }
    try {
      if (!poisoned_) child_.write_line(Json{{"type", "shutdown"}}.dump());
    } catch (...) {
    }
    child_.close_input();
    try {
      const auto grace = std::min(timeout_, std::chrono::milliseconds(2000));
      exit_code_ = child_.wait_exit(poisoned_ ? std::chrono::milliseconds(0) : grace);
    } catch (...) {
    }
    if (!exit_code_) {
      child_.kill_and_reap();
      exit_code_ = child_.exit_status();
    }
    child_ = ChildProcess();
    open_ = false;
  }

  /// Exit code of the child after close(), if it was observed.
  std::optional<int> exit_code() const noexcept { return exit_code_; }

 private:
  void handshake() {
    std::optional<std::string> line;
    try {
      line = child_.read_line(timeout_);
    } catch (const PeerExited& e) {
      child_.kill_and_reap();
      throw LaunchFailure(std::string("child exited before handshake: ") + e.what());
    }
    if (!line) {
      child_.kill_and_reap();
      throw HandshakeTimeout("no hello within " + std::to_string(timeout_.count()) + " ms");
    }
    Json hello;
    try {
      hello = Json::parse(*line);
    } catch (const nlohmann::json::exception&) {
      child_.kill_and_reap();
      throw MalformedResponse("hello is not JSON: " + line->substr(0, 200));
    }
    if (!hello.is_object() || hello.value("type", std::string()) != "hello") {
      child_.kill_and_reap();
      throw MalformedResponse("first message must be a hello");
    }
    const auto version = hello.find("version");
    if (version == hello.end() || !version->is_string() ||
        version->get<std::string>() != kProtocolVersion) {
      child_.kill_and_reap();
      throw ProtocolVersionMismatch("peer speaks protocol version " +
                                    (version == hello.end() ? std::string("<none>")
                                                            : version->dump()) +
                                    ", expected \"1\"");
    }
    const auto caps = hello.find("capabilities");
    if (caps == hello.end() || !caps->is_array()) {
      child_.kill_and_reap();
      throw MalformedResponse("hello lacks a capabilities array");
    }
    for (const auto& c : *caps) {
      if (!c.is_string()) {
        child_.kill_and_reap();
        throw MalformedResponse("capabilities must be strings");
      }
      capabilities_.insert(c.get<std::string>());
    }
    try {
      child_.write_line(Json{{"type", "hello_ack"}, {"version", kProtocolVersion}}.dump());
    } catch (const PeerExited& e) {
      child_.kill_and_reap();
      throw LaunchFailure(std::string("child exited during handshake: ") + e.what());
    }
  }

  [[noreturn]] void throw_timeout(const std::string& what) const {
    if (role_ == PeerRole::sut) throw SutTimeout(what);
    throw GeneratorTimeout(what);
  }

  [[noreturn]] void throw_peer_exited(const std::string& what) const {
    if (role_ == PeerRole::sut) throw SutCrashed(what);
    throw GeneratorUnavailable(what);
  }

  ChildProcess child_;
  std::set<std::string> capabilities_;
  std::chrono::milliseconds timeout_{kDefaultGeneratorTimeout};
  PeerRole role_ = PeerRole::generator;
  std::uint64_t next_id_ = 1;
  bool open_ = false;
  bool poisoned_ = false;
  std::optional<int> exit_code_;
};

/// Client side of an external generative backend.
class GeneratorSession {
 public:
  GeneratorSession() = default;

  static GeneratorSession open(const std::string& command_line, std::chrono::milliseconds timeout,
                               const std::filesystem::path& workdir = {}, Json settings = Json::object()) {
    GeneratorSession g;
    g.session_ = LineSession::open(command_line, timeout, PeerRole::generator, workdir);
    g.settings_ = std::move(settings);
    return g;
  }

  const std::set<std::string>& capabilities() const noexcept { return session_.capabilities(); }
  bool is_open() const noexcept { return session_.is_open(); }
  bool supports(const std::string& transform_id) const {
    return capabilities().contains(transform_id);
  }

  /// Asks the generator to write the twin of `input` to `output`, which is
  /// returned once it is verified to be a PNG with the input's dimensions.
  std::filesystem::path request_transform(const std::filesystem::path& input,
                                          const TransformationSpec& spec,
                                          const std::filesystem::path& output) {
    if (!supports(spec.id)) {
      throw UnsupportedTransform("generator does not advertise '" + spec.id + "'");
    }
    const ImageBuffer source = read_png(input);
    Json spec_json = to_json(spec);
    if (!settings_.empty()) spec_json["settings"] = settings_;
    Json request{{"type", "transform"},
                 {"id", 0},
                 {"input_path", input.string()},
                 {"output_path", output.string()},
                 {"spec", std::move(spec_json)}};
    const Json response = session_.call(std::move(request), "result");
    const auto status = response.find("status");
    if (status == response.end() || !status->is_string()) {
      throw MalformedResponse("result lacks a status");
    }
    if (*status == "error") {
      throw GeneratorReportedError(response.value("message", std::string("unspecified error")));
    }
    if (*status != "ok") {
      throw MalformedResponse("unknown result status " + status->dump());
    }
    ImageBuffer twin;
    try {
      twin = read_png(output);
    } catch (const IoFailure& e) {
      throw MalformedResponse(std::string("generator reported ok but output is unreadable: ") + e.what());
    }
    if (twin.height() != source.height() || twin.width() != source.width()) {
      throw MalformedResponse("generator output has different dimensions");
    }
    return output;
  }

  void close() noexcept { session_.close(); }
  std::optional<int> exit_code() const noexcept { return session_.exit_code(); }
  std::uint64_t last_request_id() const noexcept { return session_.last_request_id(); }

 private:
  LineSession session_;
  Json settings_ = Json::object();
};

/// Launch settings for an external generator.
struct ExternalGeneratorConfig {
  std::string command;
  std::filesystem::path workdir;
  std::chrono::milliseconds timeout = kDefaultGeneratorTimeout;
  Json settings = Json::object();
};

/// TwinBackend over a generator process. The session is (re)opened lazily,
/// so a timed-out or crashed generator costs one frame, not the run.
class ExternalBackend final : public TwinBackend {
 public:
  ExternalBackend(ExternalGeneratorConfig config, std::filesystem::path scratch_dir)
      : config_(std::move(config)), scratch_(std::move(scratch_dir)) {}

  /// Opens the session now; LaunchFailure and friends propagate.
  void connect() {
    if (!session_.is_open()) {
      session_.close();
      session_ = GeneratorSession::open(config_.command, config_.timeout, config_.workdir,
                                        config_.settings);
    }
  }

  ImageBuffer generate(const ImageBuffer& source, const std::filesystem::path* source_path,
                       const TransformationSpec& spec,
                       const std::filesystem::path* output_path) override {
    try {
      connect();
    } catch (const ProtocolError& e) {
      throw GeneratorUnavailable(std::string("generator unavailable: ") + e.what());
    }
    std::filesystem::create_directories(scratch_);
    const auto n = counter_++;
    std::filesystem::path input = source_path ? *source_path : scratch_ / ("source_" + std::to_string(n) + ".png");
    if (!source_path) write_png(source, input);
    std::filesystem::path output = output_path ? *output_path : scratch_ / ("twin_" + std::to_string(n) + ".png");
    const auto written = session_.request_transform(std::filesystem::absolute(input), spec,
                                                    std::filesystem::absolute(output));
    return read_png(written);
  }

  BackendKind kind() const override { return BackendKind::external; }

  bool supports(const TransformationSpec& spec) const override {
    return session_.supports(spec.id);
  }

  const std::set<std::string>& capabilities() const { return session_.capabilities(); }

  void close() noexcept { session_.close(); }

 private:
  ExternalGeneratorConfig config_;
  std::filesystem::path scratch_;
  GeneratorSession session_;
  std::uint64_t counter_ = 0;
};

}  // namespace mrtwin
