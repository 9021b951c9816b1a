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
 * \file pipeline.hpp
 * \brief The stages behind each CLI subcommand.
 *
 * Output layout under `paths.out`:
 *
 *   dataset/       manifest.tsv + images/    (collect)
 *   trajectory/    trajectory.tsv + images/  (collect)
 *   viewnet/       weights.bin, train_log.csv
 *   velocitynet/   weights.bin, train_log.csv
 *   repeat/        run_log.csv
 *   report/        errors.csv, stats.csv, *.png
 */

#pragma once

#include <iostream>
#include <ostream>

#include "vtr/config.hpp"
#include "vtr/evalstats.hpp"

namespace vtr {

enum class PolicyKind { kLearned, kOracle };

struct CollectResult {
  std::size_t dataset_frames = 0;
  std::size_t trajectory_subgoals = 0;
};

/// Records the teach scenario as a dataset and the repeat scenario as a
/// visual trajectory.
inline CollectResult collect(const Config& cfg, std::ostream& log = std::cout) {
  const WorldSpec world = make_world(cfg);
  const TeachDataset ds =
      make_dataset(run_scripted(world, make_script(cfg.teach, cfg), cfg.sampling_period, {}),
                   cfg.sampling_period, world_ref(cfg));
  save_dataset(ds, cfg.dataset_dir());
  const TeachDataset teach_run =
      make_dataset(run_scripted(world, make_script(cfg.repeat, cfg), cfg.sampling_period, {}),
                   cfg.sampling_period, world_ref(cfg));
  const VisualTrajectory traj = dataset_to_trajectory(teach_run, cfg.stride);
  save_trajectory(traj, cfg.trajectory_dir());
  log << "collected " << ds.size() << " frames (" << cfg.teach.name << ") -> "
      << cfg.dataset_dir().string() << "\n"
      << "trajectory of " << traj.size() << " subgoals (" << cfg.repeat.name << ") -> "
      << cfg.trajectory_dir().string() << "\n";
  return {ds.size(), traj.size()};
}

namespace detail {

inline TeachDataset require_dataset(const Config& cfg) {
  const auto dir = cfg.dataset_dir();
  if (!std::filesystem::exists(dir / "manifest.tsv")) {
    raise<IoError>("missing dataset ", (dir / "manifest.tsv").string(), "; run 'collect' first");
  }
  return load_dataset(dir);
}

inline void require_file(const std::filesystem::path& p, std::string_view what,
                         std::string_view producer) {
  if (!std::filesystem::exists(p)) {
    raise<IoError>("missing ", what, " ", p.string(), "; run '", producer, "' first");
  }
}

inline std::ofstream open_log(const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) raise<IoError>("cannot write ", file.string());
  return out;
}

}  // namespace detail

inline ViewNet<float> load_viewnet(const Config& cfg) {
  const auto file = cfg.viewnet_dir() / "weights.bin";
  detail::require_file(file, "ViewNet weights", "train-viewnet");
  ViewNet<float> net(cfg.network_arch(), cfg.hp.v_max, cfg.hp.omega_max, cfg.hp.rng_seed);
  net.load(file);
  return net;
}

inline VelocityNet<float> load_velocitynet(const Config& cfg) {
  const auto file = cfg.velocitynet_dir() / "weights.bin";
  detail::require_file(file, "VelocityNet weights", "train-velocitynet");
  VelocityNet<float> net(cfg.network_arch(), cfg.hp.horizon, cfg.hp.v_max, cfg.hp.omega_max,
                         cfg.hp.rng_seed);
  net.load(file);
  return net;
}

inline std::vector<ViewNetEpoch> run_train_viewnet(const Config& cfg,
                                                   std::ostream& log = std::cout) {
  const TeachDataset ds = detail::require_dataset(cfg);
  auto csv = detail::open_log(cfg.viewnet_dir() / "train_log.csv");
  csv << "epoch,train_l1,heldout_l1,identity_l1\n";
  auto res = train_viewnet(ds, cfg.hp, cfg.network_arch(), [&](const ViewNetEpoch& e) {
    csv << e.epoch << ',' << format_number(e.train_l1) << ',' << format_number(e.heldout_l1)
        << ',' << format_number(e.identity_l1) << '\n';
    log << "viewnet epoch " << e.epoch << ": train L1 " << format_number(e.train_l1)
        << ", held-out L1 " << format_number(e.heldout_l1) << " (identity "
        << format_number(e.identity_l1) << ")" << std::endl;
  });
  res.net.save(cfg.viewnet_dir() / "weights.bin");
  return res.trace;
}

inline std::vector<VelocityNetEpoch> run_train_velocitynet(const Config& cfg,
                                                           std::ostream& log = std::cout) {
  const TeachDataset ds = detail::require_dataset(cfg);
  const ViewNet<float> view = load_viewnet(cfg);
  auto csv = detail::open_log(cfg.velocitynet_dir() / "train_log.csv");
  csv << "epoch,J,J_img,J_vel,heldout_J\n";
  auto res = train_velocitynet(ds, view, cfg.hp, cfg.network_arch(), [&](const VelocityNetEpoch& e) {
    csv << e.epoch << ',' << format_number(e.train.j) << ',' << format_number(e.train.image)
        << ',' << format_number(e.train.velocity) << ',' << format_number(e.heldout_j) << '\n';
    log << "velocitynet epoch " << e.epoch << ": J " << format_number(e.train.j) << " (img "
        << format_number(e.train.image) << ", vel " << format_number(e.train.velocity)
        << "), held-out J " << format_number(e.heldout_j) << std::endl;
  });
  res.net.save(cfg.velocitynet_dir() / "weights.bin");
  return res.trace;
}

inline RunLog run_repeat(const Config& cfg, PolicyKind kind, std::ostream& log = std::cout) {
  const auto traj_file = cfg.trajectory_dir() / "trajectory.tsv";
  detail::require_file(traj_file, "trajectory", "collect");
  const VisualTrajectory traj = load_trajectory(cfg.trajectory_dir());
  const Pose start = traj.has_ground_truth() ? traj.ground_truth_poses().front() : Pose{};
  SimRobot robot(make_world(cfg), start);
  RunLog run;
  if (kind == PolicyKind::kOracle) {
    run = follow_trajectory(oracle_policy(robot, traj.ground_truth_poses(), cfg.hp.v_max,
                                          cfg.hp.omega_max, cfg.controller.pulse),
                            traj, robot, cfg.hp, cfg.controller);
  } else {
    const VelocityNet<float> net = load_velocitynet(cfg);
    run = follow_trajectory(learned_policy(net), traj, robot, cfg.hp, cfg.controller);
  }
  std::filesystem::create_directories(cfg.repeat_dir());
  save_run_log(run, cfg.repeat_dir() / "run_log.csv");
  log << "repeat: " << run.subgoals_reached << "/" << traj.size() << " subgoals in "
      << run.records.size() << " iterations";
  if (!run.converged) log << " (not converged: " << run.message << ")";
  log << "\n";
  return run;
}

inline Report run_eval(const Config& cfg, std::ostream& log = std::cout) {
  detail::require_file(cfg.trajectory_dir() / "trajectory.tsv", "trajectory", "collect");
  detail::require_file(cfg.repeat_dir() / "run_log.csv", "run log", "repeat");
  const VisualTrajectory traj = load_trajectory(cfg.trajectory_dir());
  const RunLog run = load_run_log(cfg.repeat_dir() / "run_log.csv");
  const Report rep = emit_report(run, traj, cfg.report_dir());
  log << "position error\n"
      << format_stats_table(rep.position_stats, ErrorMode::kPosition) << "yaw error\n"
      << format_stats_table(rep.yaw_stats, ErrorMode::kYaw) << "report -> "
      << cfg.report_dir().string() << "\n";
  return rep;
}

/// collect, both training stages, repeat and eval in sequence.
inline Report run_smoke(const Config& cfg, PolicyKind kind, std::ostream& log = std::cout) {
  collect(cfg, log);
  run_train_viewnet(cfg, log);
  run_train_velocitynet(cfg, log);
  run_repeat(cfg, kind, log);
  return run_eval(cfg, log);
}

}  // namespace vtr
