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

/**
 * \file warp.hpp
 * \brief Backward bilinear warping of an image by a residual flow field.
 *
 * Flow channel 0 holds horizontal offsets, channel 1 vertical offsets, both
 * in normalized units where the image spans [-1, 1]: an offset of 1 moves
 * the sample point by (size - 1) / 2 pixels. Output pixel (r, c) samples
 * the input at (r + dy * (H-1)/2, c + dx * (W-1)/2), clamped to the border.
 */

#pragma once

#include <cmath>

#include "vtr/image.hpp"
#include "vtr/tensor.hpp"

namespace vtr {

namespace detail {

/// Sample location along one axis after clamping.
template <typename T>
struct AxisSample {
  int i0, i1;
  T frac;        // weight of i1
  bool inside;   // false when the raw coordinate was clamped
};

template <typename T>
AxisSample<T> axis_sample(int base, T offset, int size) {
  const T scale = T(size - 1) / T(2);
  const T raw = T(base) + offset * scale;
  const T hi = T(size - 1);
  const bool inside = raw >= T(0) && raw <= hi;
  const T p = std::clamp(raw, T(0), hi);
  if (size == 1) return {0, 0, T(0), inside};
  int i0 = static_cast<int>(std::floor(p));
  if (i0 >= size - 1) i0 = size - 2;
  return {i0, i0 + 1, p - T(i0), inside};
}

}  // namespace detail

/// Warps a batch (N, C, H, W) by flow (N, 2, H, W).
template <typename T>
Tensor<T> warp(const Tensor<T>& image, const Tensor<T>& flow) {
  if (flow.n() != image.n() || flow.c() != 2 || flow.h() != image.h() ||
      flow.w() != image.w()) {
    raise<ShapeError>("warp: flow shape does not match image");
  }
  const int n = image.n(), ch = image.c(), h = image.h(), w = image.w();
  Tensor<T> out(n, ch, h, w);
  for (int b = 0; b < n; ++b) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto sx = detail::axis_sample<T>(c, flow(b, 0, r, c), w);
        const auto sy = detail::axis_sample<T>(r, flow(b, 1, r, c), h);
        for (int k = 0; k < ch; ++k) {
          const T top = (T(1) - sx.frac) * image(b, k, sy.i0, sx.i0) +
                        sx.frac * image(b, k, sy.i0, sx.i1);
          const T bot = (T(1) - sx.frac) * image(b, k, sy.i1, sx.i0) +
                        sx.frac * image(b, k, sy.i1, sx.i1);
          out(b, k, r, c) = (T(1) - sy.frac) * top + sy.frac * bot;
        }
      }
    }
  }
  return out;
}

/// Gradients of a scalar loss through `warp`. Either output pointer may be
/// null; non-null outputs are overwritten.
template <typename T>
void warp_backward(const Tensor<T>& image, const Tensor<T>& flow,
                   const Tensor<T>& grad_out, Tensor<T>* grad_image,
                   Tensor<T>* grad_flow) {
  const int n = image.n(), ch = image.c(), h = image.h(), w = image.w();
  if (grad_image) *grad_image = Tensor<T>(n, ch, h, w);
  if (grad_flow) *grad_flow = Tensor<T>(n, 2, h, w);
  const T sx_scale = T(w - 1) / T(2);
  const T sy_scale = T(h - 1) / T(2);
  for (int b = 0; b < n; ++b) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto sx = detail::axis_sample<T>(c, flow(b, 0, r, c), w);
        const auto sy = detail::axis_sample<T>(r, flow(b, 1, r, c), h);
        T gdx = 0, gdy = 0;
        for (int k = 0; k < ch; ++k) {
          const T g = grad_out(b, k, r, c);
          if (g == T(0)) continue;
          const T v00 = image(b, k, sy.i0, sx.i0), v01 = image(b, k, sy.i0, sx.i1);
          const T v10 = image(b, k, sy.i1, sx.i0), v11 = image(b, k, sy.i1, sx.i1);
          if (grad_image) {
            Tensor<T>& gi = *grad_image;
            gi(b, k, sy.i0, sx.i0) += g * (T(1) - sy.frac) * (T(1) - sx.frac);
            gi(b, k, sy.i0, sx.i1) += g * (T(1) - sy.frac) * sx.frac;
            gi(b, k, sy.i1, sx.i0) += g * sy.frac * (T(1) - sx.frac);
            gi(b, k, sy.i1, sx.i1) += g * sy.frac * sx.frac;
          }
          gdx += g * ((T(1) - sy.frac) * (v01 - v00) + sy.frac * (v11 - v10));
          gdy += g * ((T(1) - sx.frac) * (v10 - v00) + sx.frac * (v11 - v01));
        }
        if (grad_flow) {
          (*grad_flow)(b, 0, r, c) = sx.inside ? gdx * sx_scale : T(0);
          (*grad_flow)(b, 1, r, c) = sy.inside ? gdy * sy_scale : T(0);
        }
      }
    }
  }
}

/// Per-pixel sampling offsets for one image, shape (1, 2, H, W).
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width) : offsets_(1, 2, height, width) {}
  explicit FlowField(Tensor<float> offsets) : offsets_(std::move(offsets)) {
    if (offsets_.n() != 1 || offsets_.c() != 2) {
      raise<ShapeError>("FlowField: expected shape (1, 2, H, W)");
    }
  }

  int height() const { return offsets_.h(); }
  int width() const { return offsets_.w(); }
  float& dx(int r, int c) { return offsets_(0, 0, r, c); }
  float& dy(int r, int c) { return offsets_(0, 1, r, c); }
  float dx(int r, int c) const { return offsets_(0, 0, r, c); }
  float dy(int r, int c) const { return offsets_(0, 1, r, c); }
  const Tensor<float>& tensor() const { return offsets_; }

 private:
  Tensor<float> offsets_;
};

/// Single-image convenience wrapper; rejects non-finite flows.
inline Image warp(const Image& image, const FlowField& flow) {
  if (flow.height() != image.height() || flow.width() != image.width()) {
    raise<ShapeError>("warp: flow and image sizes differ");
  }
  if (!all_finite(flow.tensor().values())) {
    raise<ArgumentError>("warp: flow contains non-finite values");
  }
  return to_image(warp(to_tensor<float>(image), flow.tensor()));
}

}  // namespace vtr
