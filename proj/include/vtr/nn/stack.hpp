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

#include <bit>
#include <string>
#include <vector>

#include "vtr/nn/layers.hpp"

namespace vtr::nn {

/// Shape of the convolutional trunks shared by both networks.
///
/// Every trunk has `stages` layers. The first log2(image_size) layers are
/// 4x4 stride-2 convolutions halving the resolution down to 1x1 with widths
/// base, 2*base, ... capped at feature_dim (the last of them is exactly
/// feature_dim); the remaining layers are 1x1 convolutions at 1x1.
struct ArchConfig {
  int image_size = 128;
  int stages = 8;
  int base_channels = 8;
  int feature_dim = 512;

  int down_stages() const { return std::countr_zero(static_cast<unsigned>(image_size)); }

  /// Output width of down-sampling stage i.
  int down_width(int i) const {
    if (i >= down_stages() - 1) return feature_dim;
    return std::min(base_channels << i, feature_dim);
  }

  void validate() const {
    if (image_size < 2 || !std::has_single_bit(static_cast<unsigned>(image_size))) {
      raise<ArgumentError>("ArchConfig: image_size must be a power of two >= 2");
    }
    if (stages <= down_stages()) {
      raise<ArgumentError>("ArchConfig: need more than log2(image_size) stages");
    }
    if (base_channels < 1 || feature_dim < 1) {
      raise<ArgumentError>("ArchConfig: channel widths must be positive");
    }
  }

  std::string describe() const {
    return detail::concat("img", image_size, "_st", stages, "_b", base_channels,
                          "_f", feature_dim);
  }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

enum class StageKind { kDown, kPointwise, kUp };

template <typename T>
struct Stage {
  StageKind kind = StageKind::kDown;
  Conv2d<T> conv;           // kDown, kPointwise
  ConvTranspose2d<T> up;    // kUp
  bool norm = true;
  BatchNorm2d<T> bn;
  bool act = true;

  int out_channels() const {
    return kind == StageKind::kUp ? up.out_channels() : conv.out_channels();
  }
};

template <typename T>
Stage<T> make_stage(StageKind kind, int in, int out, bool norm_act) {
  Stage<T> s;
  s.kind = kind;
  switch (kind) {
    case StageKind::kDown: s.conv = Conv2d<T>(in, out, 4, 2, 1); break;
    case StageKind::kPointwise: s.conv = Conv2d<T>(in, out, 1, 1, 0); break;
    case StageKind::kUp: s.up = ConvTranspose2d<T>(in, out, 4, 2, 1); break;
  }
  s.norm = norm_act;
  s.act = norm_act;
  if (norm_act) s.bn = BatchNorm2d<T>(out);
  return s;
}

/// Feed-forward chain of conv [-> batch norm -> leaky ReLU] stages.
template <typename T>
class ConvStack {
 public:
  struct Trace {
    std::vector<Tensor<T>> inputs;   // input to each stage's conv
    std::vector<typename BatchNorm2d<T>::Cache> bn;
    std::vector<Tensor<T>> pre_act;  // input to each stage's activation
  };

  ConvStack() = default;
  explicit ConvStack(std::vector<Stage<T>> stages) : stages_(std::move(stages)) {}

  void init(std::mt19937_64& rng) {
    for (auto& s : stages_) {
      if (s.kind == StageKind::kUp) {
        s.up.init(rng);
      } else {
        s.conv.init(rng);
      }
    }
  }

  Tensor<T> forward_train(const Tensor<T>& x, Trace* trace) {
    return run<true>(*this, x, trace);
  }
  Tensor<T> forward_eval(const Tensor<T>& x, Trace* trace) const {
    return run<false>(*this, x, trace);
  }

  /// Backpropagates gy, accumulating parameter gradients. Returns dL/dx
  /// when `want_input_grad`, otherwise an empty tensor.
  Tensor<T> backward(const Trace& trace, Tensor<T> gy, bool want_input_grad) {
    for (int i = static_cast<int>(stages_.size()) - 1; i >= 0; --i) {
      auto& s = stages_[i];
      if (s.act) gy = leaky_relu_backward(trace.pre_act[i], std::move(gy));
      if (s.norm) {
        s.bn.accumulate_grads(trace.bn[i], gy);
        gy = s.bn.input_grad(trace.bn[i], gy);
      }
      const Tensor<T>& x = trace.inputs[i];
      if (s.kind == StageKind::kUp) {
        s.up.accumulate_grads(x, gy);
        if (i > 0 || want_input_grad) gy = s.up.input_grad(x, gy);
      } else {
        s.conv.accumulate_grads(x, gy);
        if (i > 0 || want_input_grad) gy = s.conv.input_grad(x, gy);
      }
    }
    return want_input_grad ? gy : Tensor<T>{};
  }

  /// dL/dx without touching parameter gradients (frozen network).
  Tensor<T> input_grad(const Trace& trace, Tensor<T> gy) const {
    for (int i = static_cast<int>(stages_.size()) - 1; i >= 0; --i) {
      const auto& s = stages_[i];
      if (s.act) gy = leaky_relu_backward(trace.pre_act[i], std::move(gy));
      if (s.norm) gy = s.bn.input_grad(trace.bn[i], gy);
      const Tensor<T>& x = trace.inputs[i];
      gy = s.kind == StageKind::kUp ? s.up.input_grad(x, gy) : s.conv.input_grad(x, gy);
    }
    return gy;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& s : stages_) {
      if (s.kind == StageKind::kUp) {
        out.push_back(&s.up.weight);
        out.push_back(&s.up.bias);
      } else {
        out.push_back(&s.conv.weight);
        out.push_back(&s.conv.bias);
      }
      if (s.norm) {
        out.push_back(&s.bn.gamma);
        out.push_back(&s.bn.beta);
      }
    }
    return out;
  }

  /// Non-trainable state (batch-norm running statistics).
  std::vector<std::vector<T>*> buffers() {
    std::vector<std::vector<T>*> out;
    for (auto& s : stages_) {
      if (s.norm) {
        out.push_back(&s.bn.running_mean);
        out.push_back(&s.bn.running_var);
      }
    }
    return out;
  }

  std::vector<Stage<T>>& stages() { return stages_; }
  const std::vector<Stage<T>>& stages() const { return stages_; }

 private:
  template <bool Train, typename Self>
  static Tensor<T> run(Self& self, const Tensor<T>& x, Trace* trace) {
    if (trace) {
      trace->inputs.clear();
      trace->bn.assign(self.stages_.size(), {});
      trace->pre_act.assign(self.stages_.size(), {});
    }
    Tensor<T> h = x;
    for (std::size_t i = 0; i < self.stages_.size(); ++i) {
      auto& s = self.stages_[i];
      Tensor<T> y = s.kind == StageKind::kUp ? s.up.forward(h) : s.conv.forward(h);
      if (trace) trace->inputs.push_back(std::move(h));
      if (s.norm) {
        auto* cache = trace ? &trace->bn[i] : nullptr;
        if constexpr (Train) {
          y = s.bn.forward_train(y, cache);
        } else {
          y = s.bn.forward_eval(y, cache);
        }
      }
      if (s.act) {
        if (trace) trace->pre_act[i] = y;
        y = leaky_relu(std::move(y));
      }
      h = std::move(y);
    }
    return h;
  }

  std::vector<Stage<T>> stages_;
};

/// Total number of trainable scalars.
template <typename T>
std::size_t parameter_count(const std::vector<Param<T>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

template <typename T>
void zero_grads(const std::vector<Param<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace vtr::nn
