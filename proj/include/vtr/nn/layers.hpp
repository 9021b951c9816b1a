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
 * \file layers.hpp
 * \brief Minimal CNN building blocks with hand-written backward passes.
 *
 * Layers are stateless with respect to a particular forward call: forward
 * returns its output and the caller keeps whatever the backward pass needs
 * (inputs, batch-norm caches). This lets one network be evaluated several
 * times inside a single loss (rollouts) and differentiated through each
 * evaluation independently.
 */

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <vector>

#include "vtr/tensor.hpp"

namespace vtr::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Trainable parameter with gradient and Adam moments.
template <typename T>
struct Param {
  AlignedVector<T> value;
  AlignedVector<T> grad;
  AlignedVector<T> m;
  AlignedVector<T> v;

  void resize(std::size_t n, T fill = T(0)) {
    value.assign(n, fill);
    grad.assign(n, T(0));
    m.assign(n, T(0));
    v.assign(n, T(0));
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// ---------------------------------------------------------------------------
// im2col / col2im over a whole batch. Column index = b * (Ho*Wo) + pixel.

struct ConvGeometry {
  int channels, height, width;  // input of the (forward) convolution
  int kernel, stride, pad;
  int out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
  int rows() const { return channels * kernel * kernel; }
};

template <typename T>
void im2col(const T* x, int batch, const ConvGeometry& g, T* cols) {
  const int ho = g.out_h(), wo = g.out_w();
  const std::size_t ncols = static_cast<std::size_t>(batch) * ho * wo;
  const std::size_t in_plane = static_cast<std::size_t>(g.height) * g.width;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(c) * g.kernel + ky) *
                             g.kernel + kx) * ncols;
        for (int b = 0; b < batch; ++b) {
          const T* src = x + (static_cast<std::size_t>(b) * g.channels + c) * in_plane;
          T* dst = row + static_cast<std::size_t>(b) * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.height) {
              std::fill(dst + oy * wo, dst + (oy + 1) * wo, T(0));
              continue;
            }
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              dst[oy * wo + ox] =
                  (ix >= 0 && ix < g.width) ? src[iy * g.width + ix] : T(0);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-adds columns back into x (x must be zeroed).
template <typename T>
void col2im(const T* cols, int batch, const ConvGeometry& g, T* x) {
  const int ho = g.out_h(), wo = g.out_w();
  const std::size_t ncols = static_cast<std::size_t>(batch) * ho * wo;
  const std::size_t in_plane = static_cast<std::size_t>(g.height) * g.width;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(c) * g.kernel + ky) *
                                   g.kernel + kx) * ncols;
        for (int b = 0; b < batch; ++b) {
          T* dst = x + (static_cast<std::size_t>(b) * g.channels + c) * in_plane;
          const T* src = row + static_cast<std::size_t>(b) * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.height) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.width) dst[iy * g.width + ix] += src[oy * wo + ox];
            }
          }
        }
      }
    }
  }
}

/// (C, B*P) row-major matrix  <->  (B, C, P) tensor layout.
template <typename T>
void channel_major_to_nchw(const T* src, int batch, int channels, int plane, T* dst) {
  for (int c = 0; c < channels; ++c) {
    for (int b = 0; b < batch; ++b) {
      std::copy_n(src + (static_cast<std::size_t>(c) * batch + b) * plane, plane,
                  dst + (static_cast<std::size_t>(b) * channels + c) * plane);
    }
  }
}
template <typename T>
void nchw_to_channel_major(const T* src, int batch, int channels, int plane, T* dst) {
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      std::copy_n(src + (static_cast<std::size_t>(b) * channels + c) * plane, plane,
                  dst + (static_cast<std::size_t>(c) * batch + b) * plane);
    }
  }
}

template <typename T>
void he_init(Param<T>& p, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (T& w : p.value) w = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------------------

/// Strided 2-D convolution, weight shape (out, in * k * k).
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad)
      : in_(in_channels), out_(out_channels), k_(kernel), s_(stride), p_(pad) {
    weight.resize(static_cast<std::size_t>(out_) * in_ * k_ * k_);
    bias.resize(out_);
  }

  void init(std::mt19937_64& rng) { he_init(weight, in_ * k_ * k_, rng); }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.c() != in_) raise<ShapeError>("Conv2d: expected ", in_, " channels, got ", x.c());
    const ConvGeometry g{in_, x.h(), x.w(), k_, s_, p_};
    const int b = x.n(), ho = g.out_h(), wo = g.out_w();
    const int ncols = b * ho * wo;
    AlignedVector<T> cols(static_cast<std::size_t>(g.rows()) * ncols);
    im2col(x.data(), b, g, cols.data());
    AlignedVector<T> y(static_cast<std::size_t>(out_) * ncols);
    MatrixMap<T> ym(y.data(), out_, ncols);
    ym.noalias() = ConstMatrixMap<T>(weight.value.data(), out_, g.rows()) *
                   ConstMatrixMap<T>(cols.data(), g.rows(), ncols);
    for (int o = 0; o < out_; ++o) ym.row(o).array() += bias.value[o];
    Tensor<T> out(b, out_, ho, wo);
    channel_major_to_nchw(y.data(), b, out_, ho * wo, out.data());
    return out;
  }

  /// dL/dx for upstream gradient gy.
  Tensor<T> input_grad(const Tensor<T>& x, const Tensor<T>& gy) const {
    const ConvGeometry g{in_, x.h(), x.w(), k_, s_, p_};
    const int b = x.n();
    const int ncols = b * g.out_h() * g.out_w();
    const AlignedVector<T> gym = channel_major(gy);
    AlignedVector<T> gcols(static_cast<std::size_t>(g.rows()) * ncols);
    MatrixMap<T>(gcols.data(), g.rows(), ncols).noalias() =
        ConstMatrixMap<T>(weight.value.data(), out_, g.rows()).transpose() *
        ConstMatrixMap<T>(gym.data(), out_, ncols);
    Tensor<T> gx(b, in_, x.h(), x.w());
    col2im(gcols.data(), b, g, gx.data());
    return gx;
  }

  /// Accumulates dL/dW and dL/db.
  void accumulate_grads(const Tensor<T>& x, const Tensor<T>& gy) {
    const ConvGeometry g{in_, x.h(), x.w(), k_, s_, p_};
    const int b = x.n();
    const int ncols = b * g.out_h() * g.out_w();
    const AlignedVector<T> gym = channel_major(gy);
    ConstMatrixMap<T> gyM(gym.data(), out_, ncols);
    AlignedVector<T> cols(static_cast<std::size_t>(g.rows()) * ncols);
    im2col(x.data(), b, g, cols.data());
    MatrixMap<T>(weight.grad.data(), out_, g.rows()).noalias() +=
        gyM * ConstMatrixMap<T>(cols.data(), g.rows(), ncols).transpose();
    for (int o = 0; o < out_; ++o) bias.grad[o] += gyM.row(o).sum();
  }

  Param<T> weight;
  Param<T> bias;

 private:
  AlignedVector<T> channel_major(const Tensor<T>& gy) const {
    AlignedVector<T> m(gy.size());
    nchw_to_channel_major(gy.data(), gy.n(), out_, static_cast<int>(gy.plane_size()), m.data());
    return m;
  }

  int in_ = 0, out_ = 0, k_ = 1, s_ = 1, p_ = 0;
};

/// Transposed convolution (fractionally strided), weight shape
/// (in, out * k * k). With k=4, s=2, p=1 it exactly doubles H and W.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad)
      : in_(in_channels), out_(out_channels), k_(kernel), s_(stride), p_(pad) {
    weight.resize(static_cast<std::size_t>(in_) * out_ * k_ * k_);
    bias.resize(out_);
  }

  void init(std::mt19937_64& rng) {
    // Each output pixel sees in * (k/s)^2 taps.
    he_init(weight, std::max(1, in_ * (k_ / s_) * (k_ / s_)), rng);
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  ConvGeometry output_geometry(int h, int w) const {
    return {out_, (h - 1) * s_ - 2 * p_ + k_, (w - 1) * s_ - 2 * p_ + k_, k_, s_, p_};
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.c() != in_) raise<ShapeError>("ConvTranspose2d: expected ", in_, " channels");
    const ConvGeometry g = output_geometry(x.h(), x.w());
    const int b = x.n();
    const int ncols = b * x.h() * x.w();
    AlignedVector<T> xm(static_cast<std::size_t>(in_) * ncols);
    nchw_to_channel_major(x.data(), b, in_, x.h() * x.w(), xm.data());
    AlignedVector<T> cols(static_cast<std::size_t>(g.rows()) * ncols);
    MatrixMap<T>(cols.data(), g.rows(), ncols).noalias() =
        ConstMatrixMap<T>(weight.value.data(), in_, g.rows()).transpose() *
        ConstMatrixMap<T>(xm.data(), in_, ncols);
    Tensor<T> out(b, out_, g.height, g.width);
    col2im(cols.data(), b, g, out.data());
    const std::size_t plane = out.plane_size();
    for (int i = 0; i < b; ++i) {
      for (int o = 0; o < out_; ++o) {
        T* p = out.data() + (static_cast<std::size_t>(i) * out_ + o) * plane;
        for (std::size_t j = 0; j < plane; ++j) p[j] += bias.value[o];
      }
    }
    return out;
  }

  Tensor<T> input_grad(const Tensor<T>& x, const Tensor<T>& gy) const {
    const ConvGeometry g = output_geometry(x.h(), x.w());
    const int b = x.n();
    const int ncols = b * x.h() * x.w();
    AlignedVector<T> gcols(static_cast<std::size_t>(g.rows()) * ncols);
    im2col(gy.data(), b, g, gcols.data());
    AlignedVector<T> gxm(static_cast<std::size_t>(in_) * ncols);
    MatrixMap<T>(gxm.data(), in_, ncols).noalias() =
        ConstMatrixMap<T>(weight.value.data(), in_, g.rows()) *
        ConstMatrixMap<T>(gcols.data(), g.rows(), ncols);
    Tensor<T> gx(b, in_, x.h(), x.w());
    channel_major_to_nchw(gxm.data(), b, in_, x.h() * x.w(), gx.data());
    return gx;
  }

  void accumulate_grads(const Tensor<T>& x, const Tensor<T>& gy) {
    const ConvGeometry g = output_geometry(x.h(), x.w());
    const int b = x.n();
    const int ncols = b * x.h() * x.w();
    AlignedVector<T> gcols(static_cast<std::size_t>(g.rows()) * ncols);
    im2col(gy.data(), b, g, gcols.data());
    AlignedVector<T> xm(static_cast<std::size_t>(in_) * ncols);
    nchw_to_channel_major(x.data(), b, in_, x.h() * x.w(), xm.data());
    MatrixMap<T>(weight.grad.data(), in_, g.rows()).noalias() +=
        ConstMatrixMap<T>(xm.data(), in_, ncols) *
        ConstMatrixMap<T>(gcols.data(), g.rows(), ncols).transpose();
    const std::size_t plane = gy.plane_size();
    for (int i = 0; i < b; ++i) {
      for (int o = 0; o < out_; ++o) {
        const T* p = gy.data() + (static_cast<std::size_t>(i) * out_ + o) * plane;
        T acc = 0;
        for (std::size_t j = 0; j < plane; ++j) acc += p[j];
        bias.grad[o] += acc;
      }
    }
  }

  Param<T> weight;
  Param<T> bias;

 private:
  int in_ = 0, out_ = 0, k_ = 4, s_ = 2, p_ = 1;
};

/// Per-channel batch normalization over (N, H, W).
template <typename T>
class BatchNorm2d {
 public:
  struct Cache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
    bool training = false;
  };

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, T momentum = T(0.1), T eps = T(1e-5))
      : c_(channels), momentum_(momentum), eps_(eps) {
    gamma.resize(c_, T(1));
    beta.resize(c_, T(0));
    running_mean.assign(c_, T(0));
    running_var.assign(c_, T(1));
  }

  /// Training mode: normalizes with batch statistics and updates the
  /// running averages.
  Tensor<T> forward_train(const Tensor<T>& x, Cache* cache) {
    if (x.c() != c_) raise<ShapeError>("BatchNorm2d: channel mismatch");
    const std::size_t plane = x.plane_size();
    const double count = static_cast<double>(x.n()) * plane;
    std::vector<double> mean(c_), var(c_);
    for (int c = 0; c < c_; ++c) {
      double s = 0.0;
      for_channel(x, c, [&](T v) { s += v; });
      mean[c] = s / count;
      double ss = 0.0;
      for_channel(x, c, [&](T v) { ss += (v - mean[c]) * (v - mean[c]); });
      var[c] = ss / count;
      const double unbiased = count > 1 ? ss / (count - 1) : var[c];
      running_mean[c] = static_cast<T>((1 - momentum_) * running_mean[c] + momentum_ * mean[c]);
      running_var[c] = static_cast<T>((1 - momentum_) * running_var[c] + momentum_ * unbiased);
    }
    return normalize(x, mean, var, true, cache);
  }

  /// Inference mode: running statistics, no state change.
  Tensor<T> forward_eval(const Tensor<T>& x, Cache* cache) const {
    if (x.c() != c_) raise<ShapeError>("BatchNorm2d: channel mismatch");
    const std::vector<double> mean(running_mean.begin(), running_mean.end());
    const std::vector<double> var(running_var.begin(), running_var.end());
    return normalize(x, mean, var, false, cache);
  }

  Tensor<T> input_grad(const Cache& cache, const Tensor<T>& gy) const {
    const std::size_t plane = gy.plane_size();
    const double count = static_cast<double>(gy.n()) * plane;
    Tensor<T> gx(gy.n(), gy.c(), gy.h(), gy.w());
    for (int c = 0; c < c_; ++c) {
      const double scale = static_cast<double>(gamma.value[c]) * cache.inv_std[c];
      double mean_g = 0.0, mean_gx = 0.0;
      if (cache.training) {
        const auto [sg, sgx] = grad_sums(cache, gy, c);
        mean_g = sg / count;
        mean_gx = sgx / count;
      }
      for (int i = 0; i < gy.n(); ++i) {
        const std::size_t off = (static_cast<std::size_t>(i) * c_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          gx[off + j] = static_cast<T>(
              scale * (gy[off + j] - mean_g - cache.xhat[off + j] * mean_gx));
        }
      }
    }
    return gx;
  }

  void accumulate_grads(const Cache& cache, const Tensor<T>& gy) {
    for (int c = 0; c < c_; ++c) {
      const auto [sg, sgx] = grad_sums(cache, gy, c);
      gamma.grad[c] += static_cast<T>(sgx);
      beta.grad[c] += static_cast<T>(sg);
    }
  }

  int channels() const { return c_; }

  Param<T> gamma;
  Param<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;

 private:
  template <typename F>
  void for_channel(const Tensor<T>& x, int c, F&& f) const {
    const std::size_t plane = x.plane_size();
    for (int i = 0; i < x.n(); ++i) {
      const T* p = x.data() + (static_cast<std::size_t>(i) * c_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) f(p[j]);
    }
  }

  std::pair<double, double> grad_sums(const Cache& cache, const Tensor<T>& gy,
                                      int c) const {
    const std::size_t plane = gy.plane_size();
    double sg = 0.0, sgx = 0.0;
    for (int i = 0; i < gy.n(); ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sg += gy[off + j];
        sgx += static_cast<double>(gy[off + j]) * cache.xhat[off + j];
      }
    }
    return {sg, sgx};
  }

  Tensor<T> normalize(const Tensor<T>& x, const std::vector<double>& mean,
                      const std::vector<double>& var, bool training,
                      Cache* cache) const {
    const std::size_t plane = x.plane_size();
    Tensor<T> y(x.n(), x.c(), x.h(), x.w());
    if (cache) {
      cache->xhat = Tensor<T>(x.n(), x.c(), x.h(), x.w());
      cache->inv_std.assign(c_, T(0));
      cache->training = training;
    }
    for (int c = 0; c < c_; ++c) {
      const double inv_std = 1.0 / std::sqrt(var[c] + eps_);
      const double g = gamma.value[c];
      const double bt = beta.value[c];
      if (cache) cache->inv_std[c] = static_cast<T>(inv_std);
      for (int i = 0; i < x.n(); ++i) {
        const std::size_t off = (static_cast<std::size_t>(i) * c_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          const double xh = (x[off + j] - mean[c]) * inv_std;
          if (cache) cache->xhat[off + j] = static_cast<T>(xh);
          y[off + j] = static_cast<T>(g * xh + bt);
        }
      }
    }
    return y;
  }

  int c_ = 0;
  T momentum_ = T(0.1);
  T eps_ = T(1e-5);
};

template <typename T>
inline constexpr T kLeakySlope = T(0.2);

template <typename T>
Tensor<T> leaky_relu(Tensor<T> x) {
  for (T& v : x.values()) v = v > T(0) ? v : kLeakySlope<T> * v;
  return x;
}

/// dL/dx given the pre-activation input x.
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, Tensor<T> gy) {
  for (std::size_t i = 0; i < gy.size(); ++i) {
    if (!(x[i] > T(0))) gy[i] *= kLeakySlope<T>;
  }
  return gy;
}

/// Adam with bias correction.
template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Param<T>*>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (Param<T>* p : params) {
      for (std::size_t i = 0; i < p->size(); ++i) {
        const double g = p->grad[i];
        const double m = b1_ * p->m[i] + (1 - b1_) * g;
        const double v = b2_ * p->v[i] + (1 - b2_) * g * g;
        p->m[i] = static_cast<T>(m);
        p->v[i] = static_cast<T>(v);
        p->value[i] -= static_cast<T>(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
      }
    }
  }

  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

}  // namespace vtr::nn
