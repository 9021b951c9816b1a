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

// vtr: teach-and-repeat pipeline driver.
//
//   vtr --config configs/desk.ini collect
//   vtr --config configs/desk.ini train-viewnet
//   vtr --config configs/desk.ini train-velocitynet
//   vtr --config configs/desk.ini repeat
//   vtr --config configs/desk.ini eval
//   vtr --config configs/smoke.ini smoke

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "vtr/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Visual teach and repeat with learned view prediction and MPC-trained velocities"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string policy = "learned";
  bool print_config = false;
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides [train] seed");
  app.add_option("--out", out_dir, "overrides [paths] out");
  app.add_option("--policy", policy)
      ->check(CLI::IsMember({"learned", "oracle"}))
      ->group("");  // testing backdoor
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");
  app.set_help_all_flag("--help-all");

  auto* collect = app.add_subcommand("collect", "record the teach dataset and trajectory");
  auto* train_view = app.add_subcommand("train-viewnet", "train the view predictor");
  auto* train_vel = app.add_subcommand("train-velocitynet", "train the velocity policy");
  auto* repeat = app.add_subcommand("repeat", "follow the trajectory, write run_log.csv");
  auto* eval = app.add_subcommand("eval", "score the last repeat run");
  auto* smoke = app.add_subcommand("smoke", "collect, train, repeat and eval in sequence");
  app.fallthrough();
  app.require_subcommand(0, 1);

  CLI11_PARSE(app, argc, argv);
  if (app.get_subcommands().empty() && !print_config) {
    std::cerr << app.help();
    return 2;
  }

  try {
    vtr::Config cfg = config_path.empty() ? vtr::Config{} : vtr::load_config(config_path);
    if (seed) cfg.hp.rng_seed = *seed;
    if (!out_dir.empty()) cfg.out = out_dir;
    cfg.validate();
    if (print_config) {
      std::cout << vtr::config_reference(cfg);
      return 0;
    }
    const auto kind = policy == "oracle" ? vtr::PolicyKind::kOracle : vtr::PolicyKind::kLearned;
    if (collect->parsed()) {
      vtr::collect(cfg);
    } else if (train_view->parsed()) {
      vtr::run_train_viewnet(cfg);
    } else if (train_vel->parsed()) {
      vtr::run_train_velocitynet(cfg);
    } else if (repeat->parsed()) {
      const auto run = vtr::run_repeat(cfg, kind);
      if (!run.converged) return 3;
    } else if (eval->parsed()) {
      vtr::run_eval(cfg);
    } else if (smoke->parsed()) {
      vtr::run_smoke(cfg, kind);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
