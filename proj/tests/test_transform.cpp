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

#include "mrtwin/scenario.hpp"
#include "mrtwin/transform.hpp"
#include "support.hpp"

namespace {

using namespace mrtwin;

TransformationSpec mr1_spec(double amplitude, std::uint64_t seed = 1) {
  TransformationSpec s;
  s.id = "mr1.background";
  s.semantic = SemDelta{amplitude, std::nullopt};
  s.seed = seed;
  return s;
}

TransformationSpec snow_spec(double density, std::uint64_t seed = 1) {
  TransformationSpec s;
  s.id = "mr2.snow";
  s.environmental = EnvDelta{Weather::snow, density};
  s.seed = seed;
  return s;
}

TransformationSpec narrow_spec(double factor) {
  TransformationSpec s;
  s.id = "mr3.lane_narrow";
  s.geometric = GeomDelta{factor};
  return s;
}

OddSpec lighting_odd(double lo, double hi) {
  OddSpec odd;
  odd.environment.lighting = Range{lo, hi};
  return odd;
}

ImageBuffer sim_frame(const ScenarioScript& s = {}, std::size_t index = 0) {
  return LaneRenderer(s).render(index).frame;
}

std::size_t count_changed_to_white(const ImageBuffer& a, const ImageBuffer& b) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < a.height(); ++r) {
    for (std::size_t c = 0; c < a.width(); ++c) {
      const auto pa = a.pixel(r, c);
      const auto pb = b.pixel(r, c);
      if (!std::equal(pa.begin(), pa.end(), pb.begin()) && pb[0] == 255 && pb[1] == 255 && pb[2] == 255) ++n;
    }
  }
  return n;
}

TEST(ApplyBuiltin, ZeroAmplitudeIsIdentity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = testing_support::random_image(64, 96, seed);
    EXPECT_EQ(apply_builtin(x, mr1_spec(0.0, seed)), x);
    EXPECT_EQ(apply_builtin(x, snow_spec(0.0, seed)), x);
    EXPECT_EQ(apply_builtin(x, narrow_spec(1.0)), x);
  }
}

TEST(ApplyBuiltin, SnowCountIsExact) {
  const ImageBuffer gray(128, 128, 3, 128);
  auto spec = snow_spec(0.1, 7);
  const auto twin = apply_builtin(gray, spec);
  // round(0.1 * 128 * 128) = round(1638.4)
  EXPECT_EQ(count_changed_to_white(gray, twin), 1638U);
  for (double d : {0.0, 0.01, 0.25, 0.5, 1.0}) {
    spec.environmental->density = d;
    EXPECT_EQ(count_changed_to_white(gray, apply_builtin(gray, spec)),
              static_cast<std::size_t>(std::llround(d * 128 * 128)));
  }
}

// Outer extent of the lane mask in a road row.
double mask_width(const ImageBuffer& mask, std::size_t row) {
  long lo = -1;
  long hi = -1;
  for (std::size_t c = 0; c < mask.width(); ++c) {
    if (mask.at(row, c) > 127) {
      if (lo < 0) lo = static_cast<long>(c);
      hi = static_cast<long>(c);
    }
  }
  return lo < 0 ? 0.0 : static_cast<double>(hi - lo + 1);
}

TEST(ApplyBuiltin, LaneNarrowShrinksMaskWidth) {
  ScenarioScript s;
  const auto rendered = LaneRenderer(s).render(0);
  const double factor = 0.8;
  const auto narrowed = builtin::narrow_lanes(rendered.mask, factor);
  for (std::size_t row = s.height / 2; row < s.height; ++row) {
    const double before = mask_width(rendered.mask, row);
    ASSERT_GT(before, 10.0);
    EXPECT_NEAR(mask_width(narrowed, row), factor * before, 1.0) << "row " << row;
  }
}

TEST(ApplyBuiltin, PerturbationLeavesLaneBandAlone) {
  const auto x = testing_support::random_image(64, 100, 5);
  const auto y = apply_builtin(x, mr1_spec(0.3, 9));
  EXPECT_EQ(y.height(), x.height());
  std::size_t changed_outside = 0;
  for (std::size_t r = 0; r < x.height(); ++r) {
    for (std::size_t c = 0; c < x.width(); ++c) {
      const bool in_band = c >= 30 && c < 70;
      const bool same = x.at(r, c, 0) == y.at(r, c, 0) && x.at(r, c, 1) == y.at(r, c, 1) &&
                        x.at(r, c, 2) == y.at(r, c, 2);
      if (in_band) {
        ASSERT_TRUE(same) << r << "," << c;
      } else if (!same) {
        ++changed_outside;
      }
    }
  }
  EXPECT_GT(changed_outside, 0U);
}

TEST(ApplyBuiltin, PerturbationIsBounded) {
  const ImageBuffer gray(64, 64, 3, 128);
  const double amp = 0.05;
  const auto y = apply_builtin(gray, mr1_spec(amp, 3));
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    EXPECT_LE(std::abs(static_cast<int>(y.data()[i]) - 128), static_cast<int>(std::ceil(amp * 255)));
  }
}

TEST(ApplyBuiltin, DeterministicAndDimensionPreserving) {
  SplitMix64 rng(77);
  for (int i = 0; i < 30; ++i) {
    const auto x = testing_support::random_image(64 + rng.below(40), 64 + rng.below(40), rng.next());
    TransformationSpec spec;
    spec.id = "mix";
    spec.seed = rng.next();
    spec.geometric = GeomDelta{0.5 + static_cast<double>(rng.below(51)) / 100.0};
    spec.semantic = SemDelta{static_cast<double>(rng.below(20)) / 100.0, std::nullopt};
    spec.environmental = EnvDelta{Weather::snow, static_cast<double>(rng.below(10)) / 100.0};
    const auto a = apply_builtin(x, spec);
    const auto b = apply_builtin(x, spec);
    EXPECT_TRUE(a.same_shape(x));
    EXPECT_EQ(a, b);
  }
}

TEST(ApplyBuiltin, SeedChangesSnowPattern) {
  const ImageBuffer gray(64, 64, 3, 128);
  EXPECT_NE(apply_builtin(gray, snow_spec(0.1, 1)), apply_builtin(gray, snow_spec(0.1, 2)));
}

TEST(ApplyBuiltin, RejectsWhatItCannotRender) {
  const ImageBuffer x(64, 64, 3, 1);
  auto ext = mr1_spec(0.1);
  ext.backend = BackendKind::external;
  EXPECT_THROW(apply_builtin(x, ext), BadSpec);
  auto fog = snow_spec(0.1);
  fog.environmental->weather = Weather::fog;
  EXPECT_THROW(apply_builtin(x, fog), BadSpec);
  auto directive = mr1_spec(0.0);
  directive.semantic->directive = Directive{"GenerateAgent", "new_type", "", {"position"}};
  EXPECT_THROW(apply_builtin(x, directive), BadSpec);
  TransformationSpec empty;
  empty.id = "none";
  EXPECT_THROW(apply_builtin(x, empty), BadSpec);
  EXPECT_THROW(apply_builtin(x, narrow_spec(0.0)), BadSpec);
  EXPECT_THROW(apply_builtin(x, narrow_spec(1.5)), BadSpec);
  EXPECT_THROW(apply_builtin(x, mr1_spec(1.5)), BadSpec);
  EXPECT_THROW(apply_builtin(x, snow_spec(-0.1)), BadSpec);
}

TEST(ImageSimilarity, ClosedForms) {
  const ImageBuffer gray(64, 64, 3, 100);
  EXPECT_DOUBLE_EQ(image_similarity(gray, gray), 1.0);
  EXPECT_DOUBLE_EQ(image_similarity(ImageBuffer(8, 8, 3, 0), ImageBuffer(8, 8, 3, 255)), 0.0);
  EXPECT_NEAR(image_similarity(ImageBuffer(8, 8, 3, 128), ImageBuffer(8, 8, 3, 154)), 1.0 - 26.0 / 255.0, 1e-12);
  EXPECT_THROW(image_similarity(ImageBuffer(8, 8), ImageBuffer(8, 9)), DimensionMismatch);
}

TEST(ImageSimilarity, SymmetricAndOneOnlyWhenEqual) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = testing_support::random_image(8, 8, s);
    auto b = a;
    b.data()[s % b.data().size()] ^= 1;
    EXPECT_DOUBLE_EQ(image_similarity(a, b), image_similarity(b, a));
    EXPECT_LT(image_similarity(a, b), 1.0);
  }
}

class CountingBackend final : public TwinBackend {
 public:
  ImageBuffer generate(const ImageBuffer& x, const std::filesystem::path*, const TransformationSpec& spec,
                       const std::filesystem::path*) override {
    seeds.push_back(spec.seed);
    return apply_builtin(x, spec);
  }
  BackendKind kind() const override { return BackendKind::builtin; }
  bool supports(const TransformationSpec&) const override { return true; }
  std::vector<std::uint64_t> seeds;
};

TEST(GenerateCompliant, IdentitySucceedsFirstAttempt) {
  const auto x = sim_frame();
  CountingBackend backend;
  const auto odd = lighting_odd(0.2, 0.8);
  const auto r = generate_compliant(x, {}, mr1_spec(0.0, 5), odd, RetryPolicy{}, backend);
  EXPECT_EQ(r.attempts, 1);
  EXPECT_EQ(r.twin, x);
  EXPECT_DOUBLE_EQ(r.similarity, 1.0);
  EXPECT_TRUE(r.compliance.compliant);
}

TEST(GenerateCompliant, InfeasibleSpecExhaustsExactlyMaxAttempts) {
  const auto x = sim_frame();
  for (int max_attempts : {1, 3, 5, 8}) {
    CountingBackend backend;
    RetryPolicy policy;
    policy.max_attempts = max_attempts;
    EXPECT_THROW(generate_compliant(x, {}, snow_spec(1.0, 100), lighting_odd(0.3, 0.7), policy, backend),
                 ExhaustedRetries);
    ASSERT_EQ(backend.seeds.size(), static_cast<std::size_t>(max_attempts));
    for (int i = 0; i < max_attempts; ++i) EXPECT_EQ(backend.seeds[i], 100U + static_cast<std::uint64_t>(i));
  }
}

TEST(GenerateCompliant, SourceOutsideOddIsRejected) {
  CountingBackend backend;
  EXPECT_THROW(generate_compliant(ImageBuffer(64, 64, 3, 0), {}, mr1_spec(0.01), lighting_odd(0.3, 0.7),
                                  RetryPolicy{}, backend),
               SourceOutOfDomain);
  EXPECT_TRUE(backend.seeds.empty());
}

TEST(GenerateCompliant, Mr1OnSimulatorFrame) {
  const auto x = sim_frame();
  CountingBackend backend;
  RetryPolicy policy{3, 0.9};
  const auto odd = lighting_odd(0.3, 0.9);
  const auto r = generate_compliant(x, {}, mr1_spec(0.05, 11), odd, policy, backend);
  EXPECT_EQ(r.attempts, 1);
  EXPECT_TRUE(r.compliance.compliant);
  // Independent re-check of the acceptance predicate.
  EXPECT_TRUE(within_domain(r.twin, odd).compliant);
  EXPECT_GE(image_similarity(x, r.twin), 0.9);
  EXPECT_DOUBLE_EQ(r.similarity, image_similarity(x, r.twin));
}

TEST(GenerateCompliant, SimilarityFloorTriggersRetries) {
  const auto x = sim_frame();
  CountingBackend backend;
  RetryPolicy policy{4, 0.999};
  EXPECT_THROW(generate_compliant(x, {}, snow_spec(0.2, 1), lighting_odd(0.0, 1.0), policy, backend),
               ExhaustedRetries);
  EXPECT_EQ(backend.seeds.size(), 4U);
}

TEST(GenerateCompliant, SnowTwinCarriesSnowTag) {
  const auto x = sim_frame();
  BuiltinBackend backend;
  OddSpec odd = lighting_odd(0.2, 0.8);
  odd.environment.weather = std::set<Weather>{Weather::clear, Weather::snow};
  const auto r = generate_compliant(x, {{"weather", "clear"}}, snow_spec(0.01), odd, RetryPolicy{}, backend);
  EXPECT_EQ(r.twin_tags.at("weather"), "snow");
  odd.environment.weather = std::set<Weather>{Weather::clear};
  EXPECT_THROW(generate_compliant(x, {{"weather", "clear"}}, snow_spec(0.01), odd, RetryPolicy{}, backend),
               ExhaustedRetries);
}

// Property: success implies the returned twin independently passes both checks.
TEST(GenerateCompliantProperty, SuccessIsIndependentlyValid) {
  SplitMix64 rng(12);
  BuiltinBackend backend;
  const auto odd = lighting_odd(0.3, 0.7);
  for (int i = 0; i < 40; ++i) {
    ScenarioScript s;
    s.seed = rng.next();
    const auto x = sim_frame(s, rng.below(10));
    auto spec = snow_spec(static_cast<double>(rng.below(30)) / 100.0, rng.next());
    RetryPolicy policy{static_cast<int>(1 + rng.below(5)), 0.8 + static_cast<double>(rng.below(20)) / 100.0};
    try {
      const auto r = generate_compliant(x, {}, spec, odd, policy, backend);
      EXPECT_GE(r.attempts, 1);
      EXPECT_LE(r.attempts, policy.max_attempts);
      EXPECT_TRUE(within_domain(r.twin, odd).compliant);
      EXPECT_GE(image_similarity(x, r.twin), policy.similarity_floor);
    } catch (const ExhaustedRetries&) {
      // Every seed in the bound must then fail the predicate.
      for (int a = 0; a < policy.max_attempts; ++a) {
        auto s2 = spec;
        s2.seed = spec.seed + static_cast<std::uint64_t>(a);
        const auto twin = apply_builtin(x, s2);
        EXPECT_FALSE(within_domain(twin, odd).compliant && image_similarity(x, twin) >= policy.similarity_floor);
      }
    }
  }
}

}  // namespace
