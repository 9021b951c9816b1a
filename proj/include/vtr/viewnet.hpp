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
 * \file viewnet.hpp
 * \brief Action-conditioned next-view prediction.
 *
 * image -> encoder -> 512-d feature; feature ++ (v / v_max, w / w_max)
 * -> decoder -> residual flow field (bounded by a scaled tanh) -> bilinear
 * warp of the input image. The decoder's last stage is zero-initialized, so
 * a fresh network predicts the identity.
 */

#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "vtr/dataio.hpp"
#include "vtr/hyperparams.hpp"
#include "vtr/nn/serialize.hpp"
#include "vtr/nn/stack.hpp"
#include "vtr/warp.hpp"

namespace vtr {

/// Packs commands into an (N, 2, 1, 1) tensor in physical units.
template <typename T>
Tensor<T> commands_to_tensor(std::span<const VelocityCommand> cmds) {
  Tensor<T> t(static_cast<int>(cmds.size()), 2, 1, 1);
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    t(static_cast<int>(i), 0, 0, 0) = static_cast<T>(cmds[i].v);
    t(static_cast<int>(i), 1, 0, 0) = static_cast<T>(cmds[i].omega);
  }
  return t;
}

template <typename T = float>
class ViewNet {
 public:
  /// Flow offsets are bounded to +/- this many normalized units.
  static constexpr double kMaxOffset = 2.0;

  struct Trace {
    Tensor<T> image;
    typename nn::ConvStack<T>::Trace encoder;
    typename nn::ConvStack<T>::Trace decoder;
    Tensor<T> flow_tanh;  // tanh of the decoder output
    Tensor<T> flow;
    Tensor<T> feature_mask;  // empty without dropout
  };

  struct InputGrads {
    Tensor<T> image;  // empty unless requested
    Tensor<T> cmd;    // (N, 2, 1, 1), physical units
  };

  /// Uninitialized; predict() on it raises StateError.
  ViewNet() = default;

  ViewNet(const nn::ArchConfig& arch, double v_max, double omega_max, std::uint64_t seed)
      : arch_(arch), v_max_(v_max), omega_max_(omega_max) {
    arch_.validate();
    const int nd = arch_.down_stages();
    const int f = arch_.feature_dim;
    std::vector<nn::Stage<T>> enc;
    int in = Image::kChannels;
    for (int i = 0; i < arch_.stages; ++i) {
      const bool down = i < nd;
      const int out = down ? arch_.down_width(i) : f;
      enc.push_back(nn::make_stage<T>(down ? nn::StageKind::kDown : nn::StageKind::kPointwise,
                                      in, out, true));
      in = out;
    }
    std::vector<nn::Stage<T>> dec;
    in = f + 2;
    for (int i = 0; i < arch_.stages - nd; ++i) {
      dec.push_back(nn::make_stage<T>(nn::StageKind::kPointwise, in, f, true));
      in = f;
    }
    for (int j = 0; j < nd; ++j) {
      const bool last = j == nd - 1;
      // Mirror the encoder: the stage producing resolution 2^(j+1) has the
      // width of the encoder stage at that resolution.
      const int out = last ? 2 : arch_.down_width(nd - 2 - j);
      dec.push_back(nn::make_stage<T>(nn::StageKind::kUp, in, out, !last));
      in = out;
    }
    encoder_ = nn::ConvStack<T>(std::move(enc));
    decoder_ = nn::ConvStack<T>(std::move(dec));
    std::mt19937_64 rng(seed);
    encoder_.init(rng);
    decoder_.init(rng);
    // Image features start silent so that early training has to explain the
    // motion through the command; without this the decoder memorizes
    // per-image flow and does not generalize.
    auto& feature_bn = encoder_.stages().back().bn;
    std::fill(feature_bn.gamma.value.begin(), feature_bn.gamma.value.end(), T(0));
    auto& final_stage = decoder_.stages().back().up;
    std::fill(final_stage.weight.value.begin(), final_stage.weight.value.end(), T(0));
    std::fill(final_stage.bias.value.begin(), final_stage.bias.value.end(), T(0));
  }

  bool initialized() const { return !encoder_.stages().empty(); }
  const nn::ArchConfig& arch() const { return arch_; }
  double v_max() const { return v_max_; }
  double omega_max() const { return omega_max_; }

  /// Training-mode forward pass (batch statistics, running stats updated).
  /// `feature_mask`, shaped like the image features, scales them
  /// elementwise (dropout).
  Tensor<T> forward_train(const Tensor<T>& images, const Tensor<T>& cmds, Trace* trace,
                          const Tensor<T>* feature_mask = nullptr) {
    return run<true>(*this, images, cmds, trace, feature_mask);
  }
  /// Inference-mode forward pass.
  Tensor<T> forward_eval(const Tensor<T>& images, const Tensor<T>& cmds,
                         Trace* trace = nullptr) const {
    return run<false>(*this, images, cmds, trace);
  }

  /// Backpropagates into the parameters (training).
  void backward(const Trace& tr, const Tensor<T>& grad_out) {
    Tensor<T> g_flow;
    warp_backward<T>(tr.image, tr.flow, grad_out, nullptr, &g_flow);
    Tensor<T> g_dec = decoder_.backward(tr.decoder, flow_pre_grad(tr, std::move(g_flow)), true);
    auto [g_feat, g_cmd] = split_channels(g_dec, arch_.feature_dim);
    if (!tr.feature_mask.empty()) {
      for (std::size_t k = 0; k < g_feat.size(); ++k) g_feat[k] *= tr.feature_mask[k];
    }
    encoder_.backward(tr.encoder, std::move(g_feat), false);
  }

  /// Gradients with respect to the inputs of a (frozen) evaluation.
  InputGrads input_grads(const Trace& tr, const Tensor<T>& grad_out, bool want_image) const {
    Tensor<T> g_img_warp, g_flow;
    warp_backward<T>(tr.image, tr.flow, grad_out, want_image ? &g_img_warp : nullptr, &g_flow);
    Tensor<T> g_dec = decoder_.input_grad(tr.decoder, flow_pre_grad(tr, std::move(g_flow)));
    auto [g_feat, g_cmd_norm] = split_channels(g_dec, arch_.feature_dim);
    InputGrads out;
    out.cmd = std::move(g_cmd_norm);
    for (int i = 0; i < out.cmd.n(); ++i) {
      out.cmd(i, 0, 0, 0) /= static_cast<T>(v_max_);
      out.cmd(i, 1, 0, 0) /= static_cast<T>(omega_max_);
    }
    if (want_image) {
      Tensor<T> g_img_enc = encoder_.input_grad(tr.encoder, std::move(g_feat));
      for (std::size_t k = 0; k < g_img_warp.size(); ++k) g_img_warp[k] += g_img_enc[k];
      out.image = std::move(g_img_warp);
    }
    return out;
  }

  std::vector<nn::Param<T>*> params() {
    auto p = encoder_.params();
    auto d = decoder_.params();
    p.insert(p.end(), d.begin(), d.end());
    return p;
  }
  std::vector<std::vector<T>*> buffers() {
    auto b = encoder_.buffers();
    auto d = decoder_.buffers();
    b.insert(b.end(), d.begin(), d.end());
    return b;
  }

  std::string fingerprint_source() const {
    return detail::concat("ViewNet/v1/", arch_.describe(), "/vmax", v_max_, "/wmax",
                          omega_max_);
  }

  void save(const std::filesystem::path& path) {
    nn::save_weights<T>(path, fingerprint_source(), params(), buffers());
  }
  void load(const std::filesystem::path& path) {
    nn::load_weights<T>(path, fingerprint_source(), params(), buffers());
  }
  std::uint64_t hash() { return nn::weights_hash<T>(params(), buffers()); }

  nn::ConvStack<T>& encoder() { return encoder_; }
  nn::ConvStack<T>& decoder() { return decoder_; }

 private:
  template <bool Train, typename Self>
  static Tensor<T> run(Self& self, const Tensor<T>& images, const Tensor<T>& cmds,
                       Trace* trace, const Tensor<T>* feature_mask = nullptr) {
    if (!self.initialized()) raise<StateError>("ViewNet: parameters not initialized");
    if (images.c() != Image::kChannels || images.h() != self.arch_.image_size ||
        images.w() != self.arch_.image_size) {
      raise<ShapeError>("ViewNet: expected (N, 3, ", self.arch_.image_size, ", ",
                        self.arch_.image_size, ") images");
    }
    if (cmds.n() != images.n() || cmds.c() != 2) {
      raise<ShapeError>("ViewNet: expected one (v, omega) per image");
    }
    typename nn::ConvStack<T>::Trace* enc_tr = trace ? &trace->encoder : nullptr;
    typename nn::ConvStack<T>::Trace* dec_tr = trace ? &trace->decoder : nullptr;
    Tensor<T> feat;
    if constexpr (Train) {
      feat = self.encoder_.forward_train(images, enc_tr);
      if (feature_mask) {
        if (feature_mask->n() != feat.n() || feature_mask->c() != feat.c() ||
            feature_mask->size() != feat.size()) {
          raise<ShapeError>("ViewNet: feature mask does not match the features");
        }
        for (std::size_t k = 0; k < feat.size(); ++k) feat[k] *= (*feature_mask)[k];
        if (trace) trace->feature_mask = *feature_mask;
      }
    } else {
      feat = self.encoder_.forward_eval(images, enc_tr);
    }
    Tensor<T> vel(cmds.n(), 2, 1, 1);
    for (int i = 0; i < cmds.n(); ++i) {
      vel(i, 0, 0, 0) = cmds(i, 0, 0, 0) / static_cast<T>(self.v_max_);
      vel(i, 1, 0, 0) = cmds(i, 1, 0, 0) / static_cast<T>(self.omega_max_);
    }
    Tensor<T> z = concat_channels(feat, vel);
    Tensor<T> raw;
    if constexpr (Train) {
      raw = self.decoder_.forward_train(z, dec_tr);
    } else {
      raw = self.decoder_.forward_eval(z, dec_tr);
    }
    Tensor<T> th = raw;
    Tensor<T> flow = raw;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      th[k] = std::tanh(raw[k]);
      flow[k] = static_cast<T>(kMaxOffset) * th[k];
    }
    Tensor<T> out = warp<T>(images, flow);
    if (trace) {
      trace->image = images;
      trace->flow_tanh = std::move(th);
      trace->flow = std::move(flow);
    }
    return out;
  }

  static Tensor<T> flow_pre_grad(const Trace& tr, Tensor<T> g_flow) {
    for (std::size_t k = 0; k < g_flow.size(); ++k) {
      const T t = tr.flow_tanh[k];
      g_flow[k] *= static_cast<T>(kMaxOffset) * (T(1) - t * t);
    }
    return g_flow;
  }

  nn::ArchConfig arch_;
  double v_max_ = kDefaultVMax;
  double omega_max_ = kDefaultOmegaMax;
  nn::ConvStack<T> encoder_;
  nn::ConvStack<T> decoder_;
};

namespace detail {

inline void check_command(const VelocityCommand& cmd, double v_max, double omega_max) {
  if (!cmd.finite()) raise<ArgumentError>("non-finite velocity command");
  if (!cmd.within(v_max + 1e-12, omega_max + 1e-12)) {
    raise<ArgumentError>("velocity command (", cmd.v, ", ", cmd.omega,
                         ") outside bounds (", v_max, ", ", omega_max, ")");
  }
}

}  // namespace detail

/// Predicted next view after executing `cmd` from `image`.
template <typename T>
Image predict(const ViewNet<T>& net, const Image& image, const VelocityCommand& cmd) {
  if (!net.initialized()) raise<StateError>("ViewNet: parameters not initialized");
  detail::check_command(cmd, net.v_max(), net.omega_max());
  const Tensor<T> out =
      net.forward_eval(to_tensor<T>(image), commands_to_tensor<T>(std::span(&cmd, 1)));
  return to_image(out);
}

/// The flow field the network would use for (image, cmd).
template <typename T>
FlowField predict_flow(const ViewNet<T>& net, const Image& image, const VelocityCommand& cmd) {
  detail::check_command(cmd, net.v_max(), net.omega_max());
  typename ViewNet<T>::Trace tr;
  net.forward_eval(to_tensor<T>(image), commands_to_tensor<T>(std::span(&cmd, 1)), &tr);
  return FlowField(tensor_cast<float>(tr.flow));
}

/// Feeds each prediction back as the next input.
template <typename T>
std::vector<Image> rollout(const ViewNet<T>& net, const Image& image,
                           std::span<const VelocityCommand> cmds) {
  if (cmds.empty()) raise<ArgumentError>("rollout: need at least one command");
  std::vector<Image> out;
  out.reserve(cmds.size());
  const Image* current = &image;
  for (const auto& c : cmds) {
    out.push_back(predict(net, *current, c));
    current = &out.back();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training.

inline double mean_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) raise<ShapeError>("mean_abs_diff: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

struct ViewNetEpoch {
  int epoch = 0;
  double train_l1 = 0.0;       // mean over training pairs, training mode
  double heldout_l1 = 0.0;     // mean over held-out pairs, inference mode
  double identity_l1 = 0.0;    // held-out error of predicting I_k for I_{k+1}
};

struct ViewNetTrainResult {
  ViewNet<float> net;
  std::vector<ViewNetEpoch> trace;
};

/// Index split over consecutive pairs (k, k+1): the trailing
/// `validation_fraction` of pairs is held out.
struct PairSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> heldout;
};

inline PairSplit split_pairs(std::size_t pairs, double validation_fraction) {
  PairSplit s;
  const auto held = static_cast<std::size_t>(std::floor(pairs * validation_fraction));
  for (std::size_t k = 0; k < pairs; ++k) (k < pairs - held ? s.train : s.heldout).push_back(k);
  return s;
}

/// Held-out one-step L1 of `net` and of the identity predictor.
inline std::pair<double, double> evaluate_viewnet(const ViewNet<float>& net,
                                                  const TeachDataset& ds,
                                                  std::span<const std::size_t> pairs,
                                                  int batch_size = 16) {
  double model = 0.0, ident = 0.0;
  for (std::size_t b0 = 0; b0 < pairs.size(); b0 += batch_size) {
    const std::size_t b1 = std::min(pairs.size(), b0 + batch_size);
    std::vector<const Image*> imgs;
    std::vector<VelocityCommand> cmds;
    for (std::size_t j = b0; j < b1; ++j) {
      imgs.push_back(&ds.frames[pairs[j]].image);
      cmds.push_back(ds.frames[pairs[j]].command);
    }
    const Tensor<float> pred = net.forward_eval(to_tensor<float>(imgs), commands_to_tensor<float>(cmds));
    for (std::size_t j = b0; j < b1; ++j) {
      const auto& target = ds.frames[pairs[j] + 1].image.values();
      model += mean_abs_diff(pred.sample(static_cast<int>(j - b0)), target);
      ident += mean_abs_diff(ds.frames[pairs[j]].image.values(), target);
    }
  }
  const double n = std::max<std::size_t>(1, pairs.size());
  return {model / n, ident / n};
}

using EpochCallback = std::function<void(const ViewNetEpoch&)>;

/// One-step L1 training on consecutive pairs (I_k, cmd_k) -> I_{k+1}.
inline ViewNetTrainResult train_viewnet(const TeachDataset& ds, const Hyperparams& hp,
                                        const nn::ArchConfig& arch,
                                        const EpochCallback& on_epoch = {}) {
  hp.validate();
  if (ds.frames.size() < 2) raise<ArgumentError>("train_viewnet: need at least 2 frames");
  ViewNetTrainResult res{ViewNet<float>(arch, hp.v_max, hp.omega_max, hp.rng_seed), {}};
  ViewNet<float>& net = res.net;
  const PairSplit split = split_pairs(ds.frames.size() - 1, hp.validation_fraction);
  if (split.train.empty()) raise<ArgumentError>("train_viewnet: no training pairs");
  nn::Adam<float> adam(hp.learning_rate);
  auto params = net.params();
  std::mt19937_64 rng(hp.rng_seed + 0x5157);
  std::vector<std::size_t> order = split.train;
  for (int epoch = 0; epoch < hp.viewnet_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += hp.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + hp.batch_size);
      // Batch statistics need at least two entries.
      if (b1 - b0 < 2 && b0 > 0) break;
      std::vector<const Image*> imgs, targets;
      std::vector<VelocityCommand> cmds;
      for (std::size_t j = b0; j < b1; ++j) {
        imgs.push_back(&ds.frames[order[j]].image);
        targets.push_back(&ds.frames[order[j] + 1].image);
        cmds.push_back(ds.frames[order[j]].command);
      }
      const auto x = to_tensor<float>(imgs);
      const auto y = to_tensor<float>(targets);
      ViewNet<float>::Trace tr;
      const auto pred = net.forward_train(x, commands_to_tensor<float>(cmds), &tr);
      Tensor<float> g(pred.n(), pred.c(), pred.h(), pred.w());
      double batch_loss = 0.0;
      const double inv = 1.0 / static_cast<double>(pred.size());
      for (std::size_t k = 0; k < pred.size(); ++k) {
        const double d = static_cast<double>(pred[k]) - y[k];
        batch_loss += std::abs(d);
        g[k] = static_cast<float>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv);
      }
      batch_loss *= inv;
      if (!std::isfinite(batch_loss)) {
        raise<DivergenceError>("train_viewnet: non-finite loss at epoch ", epoch, ", batch ",
                               b0 / hp.batch_size);
      }
      nn::zero_grads(params);
      net.backward(tr, g);
      adam.step(params);
      loss_sum += batch_loss * static_cast<double>(b1 - b0);
      count += b1 - b0;
    }
    ViewNetEpoch e;
    e.epoch = epoch;
    e.train_l1 = count ? loss_sum / static_cast<double>(count) : 0.0;
    std::tie(e.heldout_l1, e.identity_l1) = evaluate_viewnet(net, ds, split.heldout);
    res.trace.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return res;
}

}  // namespace vtr
