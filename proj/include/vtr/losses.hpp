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
 * \file losses.hpp
 * \brief Image and velocity terms of the offline MPC objective.
 *
 * Image terms average |target - prediction| over all 3*H*W values of each
 * image and then over the two predicted steps, on the [0, 1] pixel scale.
 * Velocity terms are mean squared errors over the horizon with v and omega
 * summed unweighted.
 */

#pragma once

#include <span>
#include <vector>

#include "vtr/image.hpp"
#include "vtr/simworld.hpp"

namespace vtr {

inline double mean_abs_error(const Image& target, const Image& prediction) {
  require_same_shape(target, prediction, "mean_abs_error");
  const auto a = target.values();
  const auto b = prediction.values();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return s / static_cast<double>(a.size());
}

/// Forward pass image term: targets (I_{i+1}, I_{i+2}).
inline double image_loss_forward(const Image& image_i1, const Image& image_i2,
                                 const Image& pred_1, const Image& pred_2) {
  return 0.5 * (mean_abs_error(image_i1, pred_1) + mean_abs_error(image_i2, pred_2));
}

/// Reverse pass image term: targets (I_{i+1}, I_i).
inline double image_loss_reverse(const Image& image_i1, const Image& image_i,
                                 const Image& pred_1, const Image& pred_2) {
  return image_loss_forward(image_i1, image_i, pred_1, pred_2);
}

/// Forward pass velocity term: step n is compared with recorded command n.
inline double velocity_loss_forward(std::span<const VelocityCommand> recorded,
                                    std::span<const VelocityCommand> outputs) {
  if (recorded.size() != outputs.size() || outputs.empty()) {
    raise<ArgumentError>("velocity_loss_forward: need equal, non-zero lengths (got ",
                         recorded.size(), " and ", outputs.size(), ")");
  }
  double s = 0.0;
  for (std::size_t n = 0; n < outputs.size(); ++n) {
    const double dv = recorded[n].v - outputs[n].v;
    const double dw = recorded[n].omega - outputs[n].omega;
    s += dv * dv + dw * dw;
  }
  return s / static_cast<double>(outputs.size());
}

/// Reverse pass velocity term: step n is compared with the negated recorded
/// command N-1-n (the teach motion played backwards).
inline double velocity_loss_reverse(std::span<const VelocityCommand> recorded,
                                    std::span<const VelocityCommand> outputs) {
  if (recorded.size() != outputs.size() || outputs.empty()) {
    raise<ArgumentError>("velocity_loss_reverse: need equal, non-zero lengths (got ",
                         recorded.size(), " and ", outputs.size(), ")");
  }
  const std::size_t n_steps = outputs.size();
  double s = 0.0;
  for (std::size_t n = 0; n < n_steps; ++n) {
    const VelocityCommand& c = recorded[n_steps - 1 - n];
    const double dv = c.v + outputs[n].v;
    const double dw = c.omega + outputs[n].omega;
    s += dv * dv + dw * dw;
  }
  return s / static_cast<double>(n_steps);
}

}  // namespace vtr
