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
#include <cstddef>
#include <deque>
#include <initializer_list>

#include "mrtwin/errors.hpp"

namespace mrtwin {

/// The most recent `size` values of a stream, oldest first.
class SlidingWindow {
 public:
  explicit SlidingWindow(std::size_t size) : size_(size) {
    if (size == 0) throw SizeMismatch("window size must be at least 1");
  }

  SlidingWindow(std::size_t size, std::initializer_list<double> values) : SlidingWindow(size) {
    for (double v : values) push(v);
  }

  void push(double value) {
    contents_.push_back(value);
    if (contents_.size() > size_) contents_.pop_front();
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t count() const noexcept { return contents_.size(); }
  bool empty() const noexcept { return contents_.empty(); }
  const std::deque<double>& contents() const noexcept { return contents_; }

 private:
  std::size_t size_;
  std::deque<double> contents_;
};

/// Mean of the window; during warm-up, the mean of what has arrived.
inline double smooth(const SlidingWindow& window) {
  if (window.empty()) throw EmptyWindow("smooth on an empty window");
  double sum = 0.0;
  for (double v : window.contents()) sum += v;
  return sum / static_cast<double>(window.count());
}

inline bool validate_temporal(const SlidingWindow& src, const SlidingWindow& twin, double epsilon_t) {
  if (src.size() != twin.size()) {
    throw SizeMismatch("temporal windows have different sizes");
  }
  return std::abs(smooth(src) - smooth(twin)) <= epsilon_t;
}

struct UncertaintyEstimate {
  double value = 0.0;
  std::size_t sample_count = 0;
};

/// Population variance of the window contents (two-pass); 0 for at most one
/// sample.
inline UncertaintyEstimate estimate_uncertainty(const SlidingWindow& window) {
  UncertaintyEstimate u;
  u.sample_count = window.count();
  if (u.sample_count <= 1) return u;
  const double mean = smooth(window);
  double acc = 0.0;
  for (double v : window.contents()) acc += (v - mean) * (v - mean);
  u.value = acc / static_cast<double>(u.sample_count);
  return u;
}

}  // namespace mrtwin
