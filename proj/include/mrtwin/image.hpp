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

#include <png.h>

#include <algorithm>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mrtwin/errors.hpp"

namespace mrtwin {

/// Row-major interleaved 8-bit image. Camera frames have three channels;
/// lane masks use one.
class ImageBuffer {
 public:
  ImageBuffer() = default;

  ImageBuffer(std::size_t height, std::size_t width, std::size_t channels = 3,
              std::uint8_t fill = 0)
      : height_(height), width_(width), channels_(channels),
        data_(height * width * channels, fill) {
    check_shape();
  }

  ImageBuffer(std::size_t height, std::size_t width, std::size_t channels,
              std::vector<std::uint8_t> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_shape();
    if (data_.size() != height_ * width_ * channels_) {
      throw InvalidImage("image data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(height_) + "x" +
                         std::to_string(width_) + "x" + std::to_string(channels_));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  std::uint8_t at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  std::uint8_t& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  std::span<const std::uint8_t> pixel(std::size_t row, std::size_t col) const {
    return std::span<const std::uint8_t>(data_).subspan((row * width_ + col) * channels_,
                                                        channels_);
  }

  void set_pixel(std::size_t row, std::size_t col, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b) {
    auto* px = &data_[(row * width_ + col) * channels_];
    if (channels_ == 1) {
      px[0] = r;
      return;
    }
    px[0] = r;
    px[1] = g;
    px[2] = b;
  }

  bool same_shape(const ImageBuffer& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  void check_shape() const {
    if (channels_ != 1 && channels_ != 3) {
      throw InvalidImage("unsupported channel count " + std::to_string(channels_));
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 3;
  std::vector<std::uint8_t> data_;
};

inline constexpr std::size_t kMinPipelineSide = 64;

/// Frames entering the pipeline must be RGB and at least 64x64.
inline void require_pipeline_frame(const ImageBuffer& image) {
  if (image.channels() != 3 || image.height() < kMinPipelineSide ||
      image.width() < kMinPipelineSide) {
    throw InvalidImage("pipeline frames must be RGB and at least 64x64, got " +
                       std::to_string(image.height()) + "x" +
                       std::to_string(image.width()) + "x" +
                       std::to_string(image.channels()));
  }
}

/// Rec.601 luma scaled by 1000 and kept integral: 299 R + 587 G + 114 B.
/// The range is [0, 255000].
inline std::uint32_t luma_milli(std::span<const std::uint8_t> px) noexcept {
  if (px.size() == 1) {
    return 1000U * px[0];
  }
  return 299U * px[0] + 587U * px[1] + 114U * px[2];
}

inline constexpr double kLumaScale = 255000.0;

/// Mean normalized luminance in [0,1].
inline double mean_luminance(const ImageBuffer& image) {
  if (image.empty()) {
    throw InvalidImage("mean_luminance of an empty image");
  }
  std::uint64_t total = 0;
  for (std::size_t r = 0; r < image.height(); ++r) {
    for (std::size_t c = 0; c < image.width(); ++c) {
      total += luma_milli(image.pixel(r, c));
    }
  }
  return static_cast<double>(total) / (kLumaScale * static_cast<double>(image.pixel_count()));
}

/// Michelson contrast (Lmax - Lmin) / (Lmax + Lmin) of the luminance channel;
/// 0 for an all-black image.
inline double michelson_contrast(const ImageBuffer& image) {
  if (image.empty()) {
    throw InvalidImage("michelson_contrast of an empty image");
  }
  std::uint32_t lo = UINT32_MAX;
  std::uint32_t hi = 0;
  for (std::size_t r = 0; r < image.height(); ++r) {
    for (std::size_t c = 0; c < image.width(); ++c) {
      const auto y = luma_milli(image.pixel(r, c));
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (hi + lo == 0) {
    return 0.0;
  }
  return static_cast<double>(hi - lo) / static_cast<double>(hi + lo);
}

namespace detail {

struct PngImageGuard {
  png_image image{};
  PngImageGuard() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImageGuard() { png_image_free(&image); }
  PngImageGuard(const PngImageGuard&) = delete;
  PngImageGuard& operator=(const PngImageGuard&) = delete;
};

}  // namespace detail

/// Reads a PNG and converts it to `channels` (1 = gray, 3 = RGB).
inline ImageBuffer read_png(const std::filesystem::path& path, std::size_t channels = 3) {
  detail::PngImageGuard guard;
  if (png_image_begin_read_from_file(&guard.image, path.c_str()) == 0) {
    throw IoFailure("cannot read PNG " + path.string() + ": " + guard.image.message);
  }
  guard.image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(guard.image));
  if (png_image_finish_read(&guard.image, nullptr, data.data(), 0, nullptr) == 0) {
    throw IoFailure("cannot decode PNG " + path.string() + ": " + guard.image.message);
  }
  return ImageBuffer(guard.image.height, guard.image.width, channels, std::move(data));
}

inline void write_png(const ImageBuffer& image, const std::filesystem::path& path) {
  detail::PngImageGuard guard;
  guard.image.width = static_cast<png_uint_32>(image.width());
  guard.image.height = static_cast<png_uint_32>(image.height());
  guard.image.format = image.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (png_image_write_to_file(&guard.image, path.c_str(), 0, image.data().data(), 0,
                              nullptr) == 0) {
    throw IoFailure("cannot write PNG " + path.string() + ": " + guard.image.message);
  }
}

}  // namespace mrtwin
