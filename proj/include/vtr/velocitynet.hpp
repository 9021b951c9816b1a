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
 * \file velocitynet.hpp
 * \brief Goal-conditioned velocity policy and its offline MPC training.
 *
 * The policy maps (current, goal) images, stacked as 6 channels in that
 * order, to N bounded commands. Training evaluates every sampled triple
 * (I_i, I_i+1, I_i+2) twice:
 *
 *   pass 1: commands = policy(I_i, I_i+2), rolled out through the frozen
 *           ViewNet from I_i, scored against (I_i+1, I_i+2) and against the
 *           recorded commands (c_i, c_i+1);
 *   pass 2: commands = policy(I_i+2, I_i), rolled out from I_i+2, scored
 *           against (I_i+1, I_i) and against (-c_i+1, -c_i).
 *
 * J_j = w1 * image term + w2 * velocity term and J = (J_1 + J_2) / 2.
 * Gradients flow through both ViewNet evaluations of each rollout into the
 * policy only.
 */

#pragma once

#include <functional>
#include <random>
#include <tuple>

#include "vtr/losses.hpp"
#include "vtr/viewnet.hpp"

namespace vtr {

template <typename T = float>
class VelocityNet {
 public:
  struct Trace {
    typename nn::ConvStack<T>::Trace trunk;
    Tensor<T> tanh_out;  // (N_batch, 2H, 1, 1)
  };

  VelocityNet() = default;

  VelocityNet(const nn::ArchConfig& arch, int horizon, double v_max, double omega_max,
              std::uint64_t seed)
      : arch_(arch), horizon_(horizon), v_max_(v_max), omega_max_(omega_max) {
    arch_.validate();
    if (horizon_ < 1) raise<ArgumentError>("VelocityNet: horizon must be >= 1");
    const int nd = arch_.down_stages();
    std::vector<nn::Stage<T>> st;
    int in = 2 * Image::kChannels;
    for (int i = 0; i < arch_.stages; ++i) {
      const bool last = i == arch_.stages - 1;
      const bool down = i < nd;
      const int out = last ? 2 * horizon_ : (down ? arch_.down_width(i) : arch_.feature_dim);
      st.push_back(nn::make_stage<T>(down ? nn::StageKind::kDown : nn::StageKind::kPointwise,
                                     in, out, !last));
      in = out;
    }
    trunk_ = nn::ConvStack<T>(std::move(st));
    std::mt19937_64 rng(seed);
    trunk_.init(rng);
    // Start near the linear regime of the output tanh.
    auto& head = trunk_.stages().back().conv.weight.value;
    for (T& w : head) w *= T(0.1);
  }

  bool initialized() const { return !trunk_.stages().empty(); }
  int horizon() const { return horizon_; }
  double v_max() const { return v_max_; }
  double omega_max() const { return omega_max_; }
  const nn::ArchConfig& arch() const { return arch_; }

  /// Bounded outputs (N, 2H, 1, 1): channels [v_1..v_H, w_1..w_H].
  Tensor<T> forward_train(const Tensor<T>& current, const Tensor<T>& goal, Trace* trace) {
    return run<true>(*this, current, goal, trace);
  }
  Tensor<T> forward_eval(const Tensor<T>& current, const Tensor<T>& goal,
                         Trace* trace = nullptr) const {
    return run<false>(*this, current, goal, trace);
  }

  /// Backpropagates dL/d(outputs) into the parameters.
  void backward(const Trace& tr, Tensor<T> grad_out) {
    for (int i = 0; i < grad_out.n(); ++i) {
      for (int k = 0; k < 2 * horizon_; ++k) {
        const T t = tr.tanh_out(i, k, 0, 0);
        grad_out(i, k, 0, 0) *= static_cast<T>(scale(k)) * (T(1) - t * t);
      }
    }
    trunk_.backward(tr.trunk, std::move(grad_out), false);
  }

  std::vector<nn::Param<T>*> params() { return trunk_.params(); }
  std::vector<std::vector<T>*> buffers() { return trunk_.buffers(); }

  std::string fingerprint_source() const {
    return detail::concat("VelocityNet/v1/", arch_.describe(), "/N", horizon_, "/vmax", v_max_,
                          "/wmax", omega_max_);
  }
  void save(const std::filesystem::path& path) {
    nn::save_weights<T>(path, fingerprint_source(), params(), buffers());
  }
  void load(const std::filesystem::path& path) {
    nn::load_weights<T>(path, fingerprint_source(), params(), buffers());
  }
  std::uint64_t hash() { return nn::weights_hash<T>(params(), buffers()); }

  nn::ConvStack<T>& trunk() { return trunk_; }

 private:
  double scale(int k) const { return k < horizon_ ? v_max_ : omega_max_; }

  template <bool Train, typename Self>
  static Tensor<T> run(Self& self, const Tensor<T>& current, const Tensor<T>& goal,
                       Trace* trace) {
    if (!self.initialized()) raise<StateError>("VelocityNet: parameters not initialized");
    require_same_shape(current, goal, "VelocityNet");
    if (current.c() != Image::kChannels || current.h() != self.arch_.image_size ||
        current.w() != self.arch_.image_size) {
      raise<ShapeError>("VelocityNet: expected (N, 3, ", self.arch_.image_size, ", ",
                        self.arch_.image_size, ") images");
    }
    const Tensor<T> x = concat_channels(current, goal);
    Tensor<T> raw;
    if constexpr (Train) {
      raw = self.trunk_.forward_train(x, trace ? &trace->trunk : nullptr);
    } else {
      raw = self.trunk_.forward_eval(x, trace ? &trace->trunk : nullptr);
    }
    Tensor<T> out = raw;
    for (int i = 0; i < raw.n(); ++i) {
      for (int k = 0; k < 2 * self.horizon_; ++k) {
        raw(i, k, 0, 0) = std::tanh(raw(i, k, 0, 0));
        out(i, k, 0, 0) = static_cast<T>(self.scale(k)) * raw(i, k, 0, 0);
      }
    }
    if (trace) trace->tanh_out = std::move(raw);
    return out;
  }

  nn::ArchConfig arch_;
  int horizon_ = 2;
  double v_max_ = kDefaultVMax;
  double omega_max_ = kDefaultOmegaMax;
  nn::ConvStack<T> trunk_;
};

/// Command n of batch entry i from a policy output tensor.
template <typename T>
VelocityCommand output_command(const Tensor<T>& outs, int i, int n) {
  const int h = outs.c() / 2;
  return {static_cast<double>(outs(i, n, 0, 0)), static_cast<double>(outs(i, h + n, 0, 0))};
}

/// The N commands the policy proposes for reaching `goal` from `current`.
template <typename T>
std::vector<VelocityCommand> infer(const VelocityNet<T>& net, const Image& current,
                                   const Image& goal) {
  require_same_shape(current, goal, "infer");
  const Tensor<T> out = net.forward_eval(to_tensor<T>(current), to_tensor<T>(goal));
  std::vector<VelocityCommand> cmds;
  for (int n = 0; n < net.horizon(); ++n) cmds.push_back(output_command(out, 0, n));
  return cmds;
}

// ---------------------------------------------------------------------------
// MPC objective.

/// Per-sample terms of one forward calculation.
struct PassTerms {
  std::vector<double> image;     // J_img_j
  std::vector<double> velocity;  // J_vel_j
  std::vector<double> total;     // w1 * image + w2 * velocity
};

/// Scores policy outputs for pass `j` (1 = forward, 2 = reverse) of a batch.
/// When `grad_outs` is non-null it receives d(grad_scale * sum_b J_j)/d(outs).
template <typename T>
PassTerms mpc_pass(const ViewNet<T>& view, std::span<const TrainingSample> batch, int j,
                   const Tensor<T>& outs, const Hyperparams& hp, double grad_scale,
                   Tensor<T>* grad_outs) {
  const int horizon = outs.c() / 2;
  if (horizon != 2) raise<ArgumentError>("mpc_pass: the image objective needs horizon 2");
  const int b = static_cast<int>(batch.size());
  std::vector<const Image*> cur, t1, t2;
  for (const auto& s : batch) {
    cur.push_back(j == 1 ? s.image_i : s.image_i2);
    t1.push_back(s.image_i1);
    t2.push_back(j == 1 ? s.image_i2 : s.image_i);
  }
  Tensor<T> c1(b, 2, 1, 1), c2(b, 2, 1, 1);
  for (int i = 0; i < b; ++i) {
    c1(i, 0, 0, 0) = outs(i, 0, 0, 0);
    c1(i, 1, 0, 0) = outs(i, horizon, 0, 0);
    c2(i, 0, 0, 0) = outs(i, 1, 0, 0);
    c2(i, 1, 0, 0) = outs(i, horizon + 1, 0, 0);
  }
  const Tensor<T> x = to_tensor<T>(cur);
  const Tensor<T> y1 = to_tensor<T>(t1);
  const Tensor<T> y2 = to_tensor<T>(t2);
  typename ViewNet<T>::Trace tr1, tr2;
  const Tensor<T> p1 = view.forward_eval(x, c1, grad_outs ? &tr1 : nullptr);
  const Tensor<T> p2 = view.forward_eval(p1, c2, grad_outs ? &tr2 : nullptr);

  PassTerms terms;
  const std::size_t npix = p1.sample_size();
  Tensor<T> g1, g2;
  if (grad_outs) {
    g1 = Tensor<T>(p1.n(), p1.c(), p1.h(), p1.w());
    g2 = Tensor<T>(p2.n(), p2.c(), p2.h(), p2.w());
  }
  const double img_coef = grad_scale * hp.w_image * 0.5 / static_cast<double>(npix);
  for (int i = 0; i < b; ++i) {
    double s1 = 0.0, s2 = 0.0;
    const std::size_t off = static_cast<std::size_t>(i) * npix;
    for (std::size_t k = 0; k < npix; ++k) {
      const double d1 = static_cast<double>(p1[off + k]) - y1[off + k];
      const double d2 = static_cast<double>(p2[off + k]) - y2[off + k];
      s1 += std::abs(d1);
      s2 += std::abs(d2);
      if (grad_outs) {
        g1[off + k] = static_cast<T>(img_coef * ((d1 > 0) - (d1 < 0)));
        g2[off + k] = static_cast<T>(img_coef * ((d2 > 0) - (d2 < 0)));
      }
    }
    terms.image.push_back(0.5 * (s1 / npix + s2 / npix));

    const std::array<VelocityCommand, 2> rec{batch[i].cmd_i, batch[i].cmd_i1};
    const std::array<VelocityCommand, 2> o{output_command(outs, i, 0), output_command(outs, i, 1)};
    terms.velocity.push_back(j == 1 ? velocity_loss_forward(rec, o) : velocity_loss_reverse(rec, o));
    terms.total.push_back(hp.w_image * terms.image.back() + hp.w_velocity * terms.velocity.back());
  }

  if (grad_outs) {
    *grad_outs = Tensor<T>(b, 2 * horizon, 1, 1);
    // Second prediction depends on the first through its input image.
    const auto gr2 = view.input_grads(tr2, g2, true);
    for (std::size_t k = 0; k < g1.size(); ++k) g1[k] += gr2.image[k];
    const auto gr1 = view.input_grads(tr1, g1, false);
    const double vel_coef = grad_scale * hp.w_velocity * 2.0 / horizon;
    for (int i = 0; i < b; ++i) {
      const std::array<VelocityCommand, 2> rec{batch[i].cmd_i, batch[i].cmd_i1};
      for (int n = 0; n < horizon; ++n) {
        const VelocityCommand o = output_command(outs, i, n);
        // Forward: d/do (c_n - o)^2 = -2 (c_n - o). Reverse: 2 (c_{N-1-n} + o).
        double dv, dw;
        if (j == 1) {
          dv = -(rec[n].v - o.v);
          dw = -(rec[n].omega - o.omega);
        } else {
          dv = rec[horizon - 1 - n].v + o.v;
          dw = rec[horizon - 1 - n].omega + o.omega;
        }
        const auto& gc = n == 0 ? gr1.cmd : gr2.cmd;
        (*grad_outs)(i, n, 0, 0) = static_cast<T>(gc(i, 0, 0, 0) + vel_coef * dv);
        (*grad_outs)(i, horizon + n, 0, 0) = static_cast<T>(gc(i, 1, 0, 0) + vel_coef * dw);
      }
    }
  }
  return terms;
}

struct MpcLoss {
  double j = 0.0;      // mean of (J_1 + J_2) / 2
  double j1 = 0.0;
  double j2 = 0.0;
  double image = 0.0;     // mean of (J_img1 + J_img2) / 2
  double velocity = 0.0;  // mean of (J_vel1 + J_vel2) / 2
};

namespace detail {

inline void add_pass(MpcLoss& loss, const PassTerms& terms, int j) {
  const double nb = static_cast<double>(terms.total.size());
  double sj = 0.0, si = 0.0, sv = 0.0;
  for (std::size_t i = 0; i < terms.total.size(); ++i) {
    sj += terms.total[i];
    si += terms.image[i];
    sv += terms.velocity[i];
  }
  (j == 1 ? loss.j1 : loss.j2) = sj / nb;
  loss.image += 0.5 * si / nb;
  loss.velocity += 0.5 * sv / nb;
  loss.j = 0.5 * (loss.j1 + loss.j2);
}

/// Current and goal images of pass j.
inline std::pair<std::vector<const Image*>, std::vector<const Image*>> pass_inputs(
    std::span<const TrainingSample> batch, int j) {
  std::vector<const Image*> cur, goal;
  for (const auto& s : batch) {
    cur.push_back(j == 1 ? s.image_i : s.image_i2);
    goal.push_back(j == 1 ? s.image_i2 : s.image_i);
  }
  return {cur, goal};
}

}  // namespace detail

/// Mean MPC loss of `vel` over a batch with the policy in inference mode.
template <typename T>
MpcLoss mpc_batch_loss(const ViewNet<T>& view, const VelocityNet<T>& vel,
                       std::span<const TrainingSample> batch, const Hyperparams& hp) {
  MpcLoss loss;
  for (int j = 1; j <= 2; ++j) {
    const auto [cur, goal] = detail::pass_inputs(batch, j);
    const Tensor<T> outs = vel.forward_eval(to_tensor<T>(cur), to_tensor<T>(goal));
    detail::add_pass(loss, mpc_pass<T>(view, batch, j, outs, hp, 0.0, nullptr), j);
  }
  return loss;
}

/// Training-mode variant: batch-norm uses batch statistics and the gradient
/// of the returned mean J is accumulated into `vel`'s parameters.
template <typename T>
MpcLoss mpc_batch_train(const ViewNet<T>& view, VelocityNet<T>& vel,
                        std::span<const TrainingSample> batch, const Hyperparams& hp) {
  MpcLoss loss;
  const double nb = static_cast<double>(batch.size());
  for (int j = 1; j <= 2; ++j) {
    const auto [cur, goal] = detail::pass_inputs(batch, j);
    typename VelocityNet<T>::Trace vtr;
    const Tensor<T> outs = vel.forward_train(to_tensor<T>(cur), to_tensor<T>(goal), &vtr);
    Tensor<T> g;
    detail::add_pass(loss, mpc_pass(view, batch, j, outs, hp, 0.5 / nb, &g), j);
    vel.backward(vtr, std::move(g));
  }
  return loss;
}

/// (J, J_1, J_2) for one sample with the policy in inference mode.
template <typename T>
std::tuple<double, double, double> mpc_step_loss(const ViewNet<T>& view, const VelocityNet<T>& vel,
                                                 const TrainingSample& sample, const Hyperparams& hp) {
  const MpcLoss l = mpc_batch_loss(view, vel, std::span(&sample, 1), hp);
  return {l.j, l.j1, l.j2};
}

/// Mean J of the policy that always outputs the null command.
template <typename T>
double zero_policy_loss(const ViewNet<T>& view, std::span<const TrainingSample> samples,
                        const Hyperparams& hp, int batch_size = 16) {
  double total = 0.0;
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += batch_size) {
    const auto batch = samples.subspan(b0, std::min<std::size_t>(batch_size, samples.size() - b0));
    const Tensor<T> zeros(static_cast<int>(batch.size()), 2 * hp.horizon, 1, 1);
    for (int j = 1; j <= 2; ++j) {
      const auto terms = mpc_pass<T>(view, batch, j, zeros, hp, 0.0, nullptr);
      for (double t : terms.total) total += 0.5 * t;
    }
  }
  return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

template <typename T>
MpcLoss mean_mpc_loss(const ViewNet<T>& view, const VelocityNet<T>& vel,
                      std::span<const TrainingSample> samples, const Hyperparams& hp,
                      int batch_size = 16) {
  MpcLoss acc;
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += batch_size) {
    const auto batch = samples.subspan(b0, std::min<std::size_t>(batch_size, samples.size() - b0));
    const MpcLoss l = mpc_batch_loss(view, vel, batch, hp);
    const double w = static_cast<double>(batch.size());
    acc.j += l.j * w;
    acc.j1 += l.j1 * w;
    acc.j2 += l.j2 * w;
    acc.image += l.image * w;
    acc.velocity += l.velocity * w;
  }
  const double n = std::max<std::size_t>(1, samples.size());
  acc.j /= n;
  acc.j1 /= n;
  acc.j2 /= n;
  acc.image /= n;
  acc.velocity /= n;
  return acc;
}

// ---------------------------------------------------------------------------
// Training.

struct VelocityNetEpoch {
  int epoch = 0;
  MpcLoss train;       // mean over training samples (training mode)
  double heldout_j = 0.0;
};

struct VelocityNetTrainResult {
  VelocityNet<float> net;
  std::vector<VelocityNetEpoch> trace;
};

inline VelocityNetTrainResult train_velocitynet(
    const TeachDataset& ds, const ViewNet<float>& viewnet, const Hyperparams& hp,
    const nn::ArchConfig& arch, const std::function<void(const VelocityNetEpoch&)>& on_epoch = {}) {
  hp.validate();
  if (!viewnet.initialized()) raise<StateError>("train_velocitynet: ViewNet is not initialized");
  const auto samples = extract_samples(ds);
  if (samples.empty()) raise<ArgumentError>("train_velocitynet: dataset has fewer than 3 frames");
  const auto held = static_cast<std::size_t>(std::floor(samples.size() * hp.validation_fraction));
  const std::span<const TrainingSample> all(samples);
  const auto heldout = all.last(held);
  std::vector<TrainingSample> train_set(samples.begin(), samples.end() - held);
  // Left-right mirrored copy of the training split: same v, negated omega.
  TeachDataset mirrored;
  if (hp.mirror_augment) {
    mirrored = ds;
    for (auto& f : mirrored.frames) {
      f.image = mirror_horizontal(f.image);
      f.command.omega = -f.command.omega;
    }
    const auto extra = extract_samples(mirrored);
    train_set.insert(train_set.end(), extra.begin(), extra.end() - held);
  }

  VelocityNetTrainResult res{
      VelocityNet<float>(arch, hp.horizon, hp.v_max, hp.omega_max, hp.rng_seed + 0x7e1), {}};
  VelocityNet<float>& net = res.net;
  auto params = net.params();
  nn::Adam<float> adam(hp.learning_rate);
  std::mt19937_64 rng(hp.rng_seed + 0xa11ce);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < hp.velocitynet_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    VelocityNetEpoch e;
    e.epoch = epoch;
    std::size_t count = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += hp.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + hp.batch_size);
      if (b1 - b0 < 2 && b0 > 0) break;
      std::vector<TrainingSample> batch;
      for (std::size_t k = b0; k < b1; ++k) batch.push_back(train_set[order[k]]);
      nn::zero_grads(params);
      const MpcLoss l = mpc_batch_train<float>(viewnet, net, batch, hp);
      if (!std::isfinite(l.j)) {
        raise<DivergenceError>("train_velocitynet: non-finite loss at epoch ", epoch,
                               ", batch ", b0 / hp.batch_size);
      }
      adam.step(params);
      const double w = static_cast<double>(b1 - b0);
      e.train.j += l.j * w;
      e.train.j1 += l.j1 * w;
      e.train.j2 += l.j2 * w;
      e.train.image += l.image * w;
      e.train.velocity += l.velocity * w;
      count += b1 - b0;
    }
    if (count) {
      const double n = static_cast<double>(count);
      e.train.j /= n;
      e.train.j1 /= n;
      e.train.j2 /= n;
      e.train.image /= n;
      e.train.velocity /= n;
    }
    e.heldout_j = heldout.empty() ? 0.0 : mean_mpc_loss(viewnet, net, heldout, hp).j;
    res.trace.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return res;
}

}  // namespace vtr
