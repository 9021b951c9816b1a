// Copyright 2026 The deepmpc-vtr Authors
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
#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vtr/common.hpp"

namespace vtr {

/// Heap storage aligned for the widest SIMD loads Eigen uses. Eigen picks
/// different (numerically distinct) code paths for unaligned heads, so
/// alignment must be fixed for results to be reproducible run to run.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense NCHW tensor with value semantics.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : shape_{n, c, h, w},
        values_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  /// Elements per batch entry.
  std::size_t sample_size() const {
    return static_cast<std::size_t>(shape_[1]) * shape_[2] * shape_[3];
  }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(shape_[2]) * shape_[3];
  }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  std::span<T> sample(int i) {
    return {values_.data() + i * sample_size(), sample_size()};
  }
  std::span<const T> sample(int i) const {
    return {values_.data() + i * sample_size(), sample_size()};
  }

  T& operator()(int n, int c, int h, int w) {
    return values_[index(n, c, h, w)];
  }
  const T& operator()(int n, int c, int h, int w) const {
    return values_[index(n, c, h, w)];
  }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }

  std::array<int, 4> shape_{0, 0, 0, 0};
  AlignedVector<T> values_;
};

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
  Tensor<U> out(t.n(), t.c(), t.h(), t.w());
  std::transform(t.values().begin(), t.values().end(), out.values().begin(),
                 [](T v) { return static_cast<U>(v); });
  return out;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        std::string_view what) {
  if (!a.same_shape(b)) {
    raise<ShapeError>(what, ": shape mismatch [", a.n(), ",", a.c(), ",",
                      a.h(), ",", a.w(), "] vs [", b.n(), ",", b.c(), ",",
                      b.h(), ",", b.w(), "]");
  }
}

/// Concatenates two tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    raise<ShapeError>("concat_channels: incompatible shapes");
  }
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int i = 0; i < a.n(); ++i) {
    auto dst = out.sample(i);
    std::copy(a.sample(i).begin(), a.sample(i).end(), dst.begin());
    std::copy(b.sample(i).begin(), b.sample(i).end(),
              dst.begin() + a.sample_size());
  }
  return out;
}

/// Inverse of concat_channels: the first `first_c` channels and the rest.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t,
                                               int first_c) {
  Tensor<T> a(t.n(), first_c, t.h(), t.w());
  Tensor<T> b(t.n(), t.c() - first_c, t.h(), t.w());
  for (int i = 0; i < t.n(); ++i) {
    auto src = t.sample(i);
    std::copy(src.begin(), src.begin() + a.sample_size(), a.sample(i).begin());
    std::copy(src.begin() + a.sample_size(), src.end(), b.sample(i).begin());
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(),
                     [](T x) { return std::isfinite(x); });
}

}  // namespace vtr
