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
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mrtwin/errors.hpp"
#include "mrtwin/image.hpp"
#include "mrtwin/odd.hpp"
#include "mrtwin/rng.hpp"

namespace mrtwin {

enum class BackendKind { builtin, external };

inline std::string to_string(BackendKind k) {
  return k == BackendKind::builtin ? "builtin" : "external";
}

/// Environmental delta (epsilon): weather change with a density parameter.
struct EnvDelta {
  Weather weather = Weather::snow;
  double density = 0.0;

  friend bool operator==(const EnvDelta&, const EnvDelta&) = default;
};

/// Geometric delta (gamma): lane narrowing by a factor in (0,1].
struct GeomDelta {
  double lane_narrow = 1.0;

  friend bool operator==(const GeomDelta&, const GeomDelta&) = default;
};

/// A declarative transformation carried verbatim to a capable generator,
/// e.g. `GenerateAgent(x, new_type, preserve=(position, velocity, size_class))`.
struct Directive {
  std::string operation;
  std::string parameter;
  std::string value;
  std::vector<std::string> preserve;

  friend bool operator==(const Directive&, const Directive&) = default;
};

/// Semantic delta (sigma): background perturbation amplitude, or a
/// generator-only directive.
struct SemDelta {
  double amplitude = 0.0;
  std::optional<Directive> directive;

  friend bool operator==(const SemDelta&, const SemDelta&) = default;
};

/// tau: what to change in a source frame, and how reproducibly.
struct TransformationSpec {
  std::string id;
  std::optional<EnvDelta> environmental;
  std::optional<GeomDelta> geometric;
  std::optional<SemDelta> semantic;
  std::uint64_t seed = 0;
  BackendKind backend = BackendKind::builtin;

  friend bool operator==(const TransformationSpec&, const TransformationSpec&) = default;
};

inline void validate(const TransformationSpec& spec) {
  if (spec.id.empty()) {
    throw BadSpec("transformation spec needs an id");
  }
  if (!spec.environmental && !spec.geometric && !spec.semantic) {
    throw BadSpec("transformation spec '" + spec.id + "' has no delta");
  }
  if (spec.geometric && !(spec.geometric->lane_narrow > 0.0 && spec.geometric->lane_narrow <= 1.0)) {
    throw BadSpec("lane narrow factor must lie in (0,1]");
  }
  if (spec.semantic && !(spec.semantic->amplitude >= 0.0 && spec.semantic->amplitude <= 1.0)) {
    throw BadSpec("perturbation amplitude must lie in [0,1]");
  }
  if (spec.environmental &&
      !(spec.environmental->density >= 0.0 && spec.environmental->density <= 1.0)) {
    throw BadSpec("weather density must lie in [0,1]");
  }
}

/// Metadata of a twin frame: an environmental delta rewrites its weather tag.
inline FrameTags twin_tags(const FrameTags& source, const TransformationSpec& spec) {
  FrameTags out = source;
  if (spec.environmental) {
    out[std::string(tags::kWeather)] = to_string(spec.environmental->weather);
  }
  return out;
}

struct BuiltinOptions {
  /// Central vertical band left untouched by the background perturbation,
  /// as a fraction of image width.
  double lane_band_fraction = 0.4;
};

namespace builtin {

inline constexpr std::uint64_t kStreamBackground = 1;
inline constexpr std::uint64_t kStreamSnow = 2;
inline constexpr int kNoiseCell = 16;
inline constexpr int kNoiseGridMax = 1024;

inline std::uint8_t clamp_u8(long v) {
  return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

/// Horizontal scaling about the image's centre column by `factor`, nearest
/// neighbour, border columns replicated. Lane lines at column p move to
/// c + factor * (p - c).
inline ImageBuffer narrow_lanes(const ImageBuffer& x, double factor) {
  ImageBuffer out = x;
  const std::size_t w = x.width();
  const double centre = (static_cast<double>(w) - 1.0) / 2.0;
  std::vector<std::size_t> source_col(w);
  for (std::size_t col = 0; col < w; ++col) {
    const double offset = (static_cast<double>(col) - centre) / factor;
    const long src = std::lround(centre + offset);
    source_col[col] = static_cast<std::size_t>(std::clamp<long>(src, 0, static_cast<long>(w) - 1));
  }
  const std::size_t ch = x.channels();
  for (std::size_t row = 0; row < x.height(); ++row) {
    for (std::size_t col = 0; col < w; ++col) {
      for (std::size_t k = 0; k < ch; ++k) {
        out.at(row, col, k) = x.at(row, source_col[col], k);
      }
    }
  }
  return out;
}

/// Adds smooth value noise of the given amplitude (fraction of full scale)
/// to every pixel outside the central lane band.
inline void perturb_background(ImageBuffer& x, double amplitude, std::uint64_t seed,
                               double band_fraction) {
  if (amplitude == 0.0) return;
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  const std::size_t grid_w = w / kNoiseCell + 2;
  const std::size_t grid_h = h / kNoiseCell + 2;
  SplitMix64 rng(derive_seed(seed, kStreamBackground));
  std::vector<long> grid(grid_w * grid_h);
  for (auto& g : grid) g = rng.between(-kNoiseGridMax, kNoiseGridMax);

  const auto band_width = static_cast<std::size_t>(std::llround(static_cast<double>(w) * band_fraction));
  const std::size_t band_lo = (w - std::min(band_width, w)) / 2;
  const std::size_t band_hi = band_lo + std::min(band_width, w);
  const double scale = amplitude * 255.0;
  const double norm = static_cast<double>(kNoiseGridMax) * kNoiseCell * kNoiseCell;

  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t gy = row / kNoiseCell;
    const long fy = static_cast<long>(row % kNoiseCell);
    for (std::size_t col = 0; col < w; ++col) {
      if (col >= band_lo && col < band_hi) continue;
      const std::size_t gx = col / kNoiseCell;
      const long fx = static_cast<long>(col % kNoiseCell);
      const long g00 = grid[gy * grid_w + gx];
      const long g10 = grid[gy * grid_w + gx + 1];
      const long g01 = grid[(gy + 1) * grid_w + gx];
      const long g11 = grid[(gy + 1) * grid_w + gx + 1];
      const long n = (kNoiseCell - fx) * (kNoiseCell - fy) * g00 + fx * (kNoiseCell - fy) * g10 +
                     (kNoiseCell - fx) * fy * g01 + fx * fy * g11;
      const long delta = std::lround(scale * static_cast<double>(n) / norm);
      if (delta == 0) continue;
      for (std::size_t k = 0; k < x.channels(); ++k) {
        x.at(row, col, k) = clamp_u8(static_cast<long>(x.at(row, col, k)) + delta);
      }
    }
  }
}

/// Sets exactly round(density * h * w) distinct pixels to white.
inline void overlay_snow(ImageBuffer& x, double density, std::uint64_t seed) {
  const std::size_t n = x.pixel_count();
  const auto count = static_cast<std::size_t>(std::llround(density * static_cast<double>(n)));
  if (count == 0) return;
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  SplitMix64 rng(derive_seed(seed, kStreamSnow));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
    const std::size_t row = order[i] / x.width();
    const std::size_t col = order[i] % x.width();
    x.set_pixel(row, col, 255, 255, 255);
  }
}

}  // namespace builtin

/// Deterministic reference transforms standing in for a generative model.
/// Deltas apply in the order geometric, semantic, environmental.
inline ImageBuffer apply_builtin(const ImageBuffer& x, const TransformationSpec& spec,
                                 const BuiltinOptions& options = {}) {
  validate(spec);
  if (spec.backend != BackendKind::builtin) {
    throw BadSpec("spec '" + spec.id + "' targets an external backend");
  }
  if (spec.semantic && spec.semantic->directive) {
    throw BadSpec("spec '" + spec.id + "' carries directive '" +
                  spec.semantic->directive->operation + "', which only an external generator can apply");
  }
  if (spec.environmental && spec.environmental->weather != Weather::snow) {
    throw BadSpec("builtin backend renders snow only, not " +
                  to_string(spec.environmental->weather));
  }
  if (x.empty()) {
    throw InvalidImage("apply_builtin on an empty image");
  }
  ImageBuffer out = spec.geometric && spec.geometric->lane_narrow != 1.0
                        ? builtin::narrow_lanes(x, spec.geometric->lane_narrow)
                        : x;
  if (spec.semantic) {
    builtin::perturb_background(out, spec.semantic->amplitude, spec.seed,
                                options.lane_band_fraction);
  }
  if (spec.environmental) {
    builtin::overlay_snow(out, spec.environmental->density, spec.seed);
  }
  return out;
}

/// 1 - mean absolute sample difference / 255.
inline double image_similarity(const ImageBuffer& x, const ImageBuffer& y) {
  if (!x.same_shape(y)) {
    throw DimensionMismatch("image_similarity needs equal shapes");
  }
  if (x.empty()) return 1.0;
  std::uint64_t total = 0;
  const auto a = x.data();
  const auto b = y.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    total += static_cast<std::uint64_t>(std::abs(static_cast<int>(a[i]) - static_cast<int>(b[i])));
  }
  return 1.0 - static_cast<double>(total) / (255.0 * static_cast<double>(a.size()));
}

struct RetryPolicy {
  int max_attempts = 5;
  double similarity_floor = 0.85;
};

/// Where a candidate twin comes from. Paths are optional hints: backends that
/// work on files (external generators) use them, the builtin one ignores them.
class TwinBackend {
 public:
  virtual ~TwinBackend() = default;

  virtual ImageBuffer generate(const ImageBuffer& source,
                               const std::filesystem::path* source_path,
                               const TransformationSpec& spec,
                               const std::filesystem::path* output_path) = 0;

  virtual BackendKind kind() const = 0;

  /// Whether the backend can execute a given transformation id.
  virtual bool supports(const TransformationSpec& spec) const = 0;
};

class BuiltinBackend final : public TwinBackend {
 public:
  explicit BuiltinBackend(BuiltinOptions options = {}) : options_(options) {}

  ImageBuffer generate(const ImageBuffer& source, const std::filesystem::path*,
                       const TransformationSpec& spec,
                       const std::filesystem::path*) override {
    return apply_builtin(source, spec, options_);
  }

  BackendKind kind() const override { return BackendKind::builtin; }

  bool supports(const TransformationSpec& spec) const override {
    if (spec.semantic && spec.semantic->directive) return false;
    if (spec.environmental && spec.environmental->weather != Weather::snow) return false;
    return true;
  }

 private:
  BuiltinOptions options_;
};

struct TwinResult {
  ImageBuffer twin;
  FrameTags twin_tags;
  TransformationSpec spec_used;
  int attempts = 0;
  double similarity = 0.0;
  ComplianceResult compliance;
};

/// ODD-aware twin generation: generate a candidate, accept it when it lies in
/// the ODD and stays within the similarity floor of the source, otherwise
/// retry with seed + attempt_index up to `limits.max_attempts` times.
inline TwinResult generate_compliant(const ImageBuffer& x, const FrameTags& source_tags,
                                     const TransformationSpec& spec, const OddSpec& odd,
                                     const RetryPolicy& limits, TwinBackend& backend,
                                     const std::filesystem::path* source_path = nullptr,
                                     const std::filesystem::path* output_path = nullptr) {
  if (limits.max_attempts < 1) {
    throw BadSpec("max_attempts must be at least 1");
  }
  validate(spec);
  const ComplianceResult source_compliance = within_domain(x, source_tags, odd);
  if (!source_compliance.compliant) {
    std::string which;
    for (const auto& v : source_compliance.violated) which += (which.empty() ? "" : ",") + v;
    throw SourceOutOfDomain("source frame violates ODD constraints: " + which);
  }
  std::string last_reason;
  for (int attempt = 0; attempt < limits.max_attempts; ++attempt) {
    TransformationSpec candidate_spec = spec;
    candidate_spec.seed = spec.seed + static_cast<std::uint64_t>(attempt);
    ImageBuffer candidate = backend.generate(x, source_path, candidate_spec, output_path);
    if (!candidate.same_shape(x)) {
      throw DimensionMismatch("generator changed the frame shape");
    }
    const double similarity = image_similarity(x, candidate);
    FrameTags candidate_tags = twin_tags(source_tags, candidate_spec);
    ComplianceResult compliance = within_domain(candidate, candidate_tags, odd);
    if (compliance.compliant && similarity >= limits.similarity_floor) {
      return TwinResult{std::move(candidate), std::move(candidate_tags), candidate_spec,
                        attempt + 1, similarity, std::move(compliance)};
    }
    last_reason.clear();
    for (const auto& v : compliance.violated) last_reason += (last_reason.empty() ? "" : ",") + v;
    if (similarity < limits.similarity_floor) {
      last_reason += (last_reason.empty() ? "" : ",") + std::string("similarity");
    }
  }
  throw ExhaustedRetries("no compliant twin for '" + spec.id + "' after " +
                         std::to_string(limits.max_attempts) + " attempts (last: " +
                         last_reason + ")");
}

}  // namespace mrtwin
