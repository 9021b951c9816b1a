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

#include <cstdint>

#include "vtr/common.hpp"
#include "vtr/simworld.hpp"

namespace vtr {

/// Training and control constants shared by both networks and the
/// controller.
struct Hyperparams {
  int horizon = 2;              // N, MPC steps predicted per inference
  double w_image = 0.8;         // w1
  double w_velocity = 0.3;      // w2
  double learning_rate = 1e-4;  // Adam
  int batch_size = 8;
  int viewnet_epochs = 10;
  int velocitynet_epochs = 10;
  double validation_fraction = 0.1;  // trailing share of samples held out
  double switch_threshold = 17.0;    // e_m, mean |I_t - I_i| on the 0..255 scale
  double v_max = kDefaultVMax;
  double omega_max = kDefaultOmegaMax;
  std::uint64_t rng_seed = 1;
  bool mirror_augment = true;  // VelocityNet also trains on left-right mirrored samples

  void validate() const {
    if (horizon < 1) raise<ArgumentError>("Hyperparams: horizon must be >= 1");
    if (w_image < 0 || w_velocity < 0) raise<ArgumentError>("Hyperparams: weights must be >= 0");
    if (!(switch_threshold > 0)) raise<ArgumentError>("Hyperparams: e_m must be > 0");
    if (!(learning_rate > 0)) raise<ArgumentError>("Hyperparams: learning_rate must be > 0");
    if (batch_size < 1) raise<ArgumentError>("Hyperparams: batch_size must be >= 1");
    if (!(v_max > 0) || !(omega_max > 0)) raise<ArgumentError>("Hyperparams: velocity bounds must be > 0");
    if (validation_fraction < 0 || validation_fraction >= 1) {
      raise<ArgumentError>("Hyperparams: validation_fraction must be in [0, 1)");
    }
  }
};

}  // namespace vtr
