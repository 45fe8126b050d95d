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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "mrtwin/errors.hpp"
#include "mrtwin/image.hpp"
#include "mrtwin/json_io.hpp"
#include "mrtwin/protocol.hpp"

namespace mrtwin {

/// A driving decision. Steering is normalized to [-1,1], negative = left.
struct Prediction {
  double steering = 0.0;
  std::optional<double> throttle;
  std::string frame_id;
  double latency_ms = 0.0;
  /// The backend returned an out-of-range value that was clamped.
  bool clamped = false;
};

/// Luminance threshold for lane-marking pixels, in luma_milli units (200/255).
inline constexpr std::uint32_t kBrightLumaMilli = 200U * 1000U;

/// Desk-scale stand-in for a trained driving model: steer toward the column
/// centroid of bright lane-marking pixels in the lower half of the frame.
/// steering = clamp(2 (cx - 0.5), -1, 1), cx = mean column / (width - 1);
/// 0 when no pixel is bright.
inline double stub_steering(const ImageBuffer& x) {
  if (x.empty() || x.width() < 2) return 0.0;
  std::uint64_t count = 0;
  std::uint64_t column_sum = 0;
  for (std::size_t row = x.height() / 2; row < x.height(); ++row) {
    for (std::size_t col = 0; col < x.width(); ++col) {
      if (luma_milli(x.pixel(row, col)) > kBrightLumaMilli) {
        ++count;
        column_sum += col;
      }
    }
  }
  if (count == 0) return 0.0;
  const double cx = static_cast<double>(column_sum) /
                    (static_cast<double>(count) * static_cast<double>(x.width() - 1));
  return std::clamp(2.0 * (cx - 0.5), -1.0, 1.0);
}

enum class SutKind { stub, external };

struct ExternalSutConfig {
  std::string command;
  std::filesystem::path workdir;
  std::chrono::milliseconds timeout = kDefaultSutTimeout;
};

/// The system under test. Stub handles are pure; external handles own a
/// session that is relaunched after a timeout or crash so that one bad frame
/// does not end a sequence.
class SutHandle {
 public:
  static SutHandle stub() { return SutHandle(); }

  static SutHandle external(ExternalSutConfig config, std::filesystem::path scratch_dir) {
    SutHandle h;
    h.kind_ = SutKind::external;
    h.config_ = std::move(config);
    h.scratch_ = std::move(scratch_dir);
    h.connect();
    return h;
  }

  SutKind kind() const noexcept { return kind_; }
  bool has_session() const noexcept { return session_ != nullptr && session_->is_open(); }

  /// S(x). `path` names the frame on disk when it is there already; external
  /// SUTs need one and the frame is written to scratch otherwise.
  Prediction predict(const ImageBuffer& x, const std::string& frame_id,
                     const std::filesystem::path* path = nullptr) {
    require_pipeline_frame(x);
    const auto start = std::chrono::steady_clock::now();
    Prediction p;
    p.frame_id = frame_id;
    if (kind_ == SutKind::stub) {
      p.steering = stub_steering(x);
    } else {
      predict_external(x, path, p);
    }
    p.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return p;
  }

  void close() noexcept {
    if (session_) session_->close();
  }

 private:
  SutHandle() = default;

  void connect() {
    session_ = std::make_unique<LineSession>(
        LineSession::open(config_.command, config_.timeout, PeerRole::sut, config_.workdir));
  }

  void predict_external(const ImageBuffer& x, const std::filesystem::path* path, Prediction& p) {
    if (!has_session()) {
      if (session_) session_->close();
      connect();
    }
    std::filesystem::path input;
    if (path) {
      input = *path;
    } else {
      std::filesystem::create_directories(scratch_);
      input = scratch_ / ("sut_input_" + std::to_string(counter_++) + ".png");
      write_png(x, input);
    }
    Json response;
    try {
      response = session_->call(
          Json{{"type", "predict"}, {"id", 0}, {"input_path", std::filesystem::absolute(input).string()}},
          "prediction");
    } catch (const SessionClosed& e) {
      throw SutCrashed(e.what());
    }
    const auto steering = response.find("steering");
    if (steering == response.end() || !steering->is_number()) {
      throw MalformedResponse("prediction lacks a numeric steering");
    }
    const double raw = steering->get<double>();
    if (!std::isfinite(raw)) throw MalformedResponse("steering is not finite");
    p.steering = std::clamp(raw, -1.0, 1.0);
    p.clamped = p.steering != raw;
    if (const auto throttle = response.find("throttle");
        throttle != response.end() && !throttle->is_null()) {
      if (!throttle->is_number()) throw MalformedResponse("throttle must be numeric");
      const double t = throttle->get<double>();
      p.throttle = std::clamp(t, 0.0, 1.0);
      p.clamped = p.clamped || *p.throttle != t;
    }
  }

  SutKind kind_ = SutKind::stub;
  ExternalSutConfig config_;
  std::filesystem::path scratch_;
  std::unique_ptr<LineSession> session_;
  std::uint64_t counter_ = 0;
};

}  // namespace mrtwin
