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
 * \file controller.hpp
 * \brief Repeat-phase loop: photometric subgoal switching and pulsed motion.
 *
 * Each iteration captures a frame and compares it with the active subgoal.
 * Above e_m the policy is queried and only its first command is applied for
 * 0.1 s, followed by the null command; at or below e_m the next subgoal
 * becomes active.
 */

#pragma once

#include <fstream>
#include <functional>
#include <optional>

#include "vtr/dataio.hpp"
#include "vtr/hyperparams.hpp"
#include "vtr/velocitynet.hpp"

namespace vtr {

/// Mean absolute per-channel difference on the 0..255 scale.
inline double image_error(const Image& current, const Image& subgoal) {
  require_same_shape(current, subgoal, "image_error");
  const auto a = current.values();
  const auto b = subgoal.values();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::abs(255.0 * static_cast<double>(a[i]) - 255.0 * static_cast<double>(b[i]));
  }
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

/// Synchronous robot: commands are applied for an exact simulated duration.
class Robot {
 public:
  virtual ~Robot() = default;
  virtual Image capture() = 0;
  virtual void apply(const VelocityCommand& cmd, double duration) = 0;
  /// Ground truth, for logging and evaluation only.
  virtual Pose pose() const = 0;
  virtual double time() const = 0;
};

class SimRobot final : public Robot {
 public:
  SimRobot(WorldSpec world, Pose start) : world_(std::move(world)), pose_(start) {
    world_.validate();
  }

  Image capture() override { return quantize_8bit(render_camera(pose_, world_)); }
  void apply(const VelocityCommand& cmd, double duration) override {
    if (!cmd.is_null()) pose_ = step_kinematics(pose_, cmd, duration);
    time_ += duration;
  }
  Pose pose() const override { return pose_; }
  double time() const override { return time_; }

 private:
  WorldSpec world_;
  Pose pose_;
  double time_ = 0.0;
};

struct PolicyQuery {
  const Image& current;
  const Image& subgoal;
  std::size_t subgoal_index;
};

/// Returns the N commands proposed for the query; only the first is used.
using Policy = std::function<std::vector<VelocityCommand>(const PolicyQuery&)>;

inline Policy learned_policy(const VelocityNet<float>& net) {
  return [&net](const PolicyQuery& q) { return infer(net, q.current, q.subgoal); };
}

/// Ground-truth stub: proportional command toward the subgoal's recorded
/// pose, bounded by (v_max, omega_max). Reads the robot's true pose.
inline Policy oracle_policy(const Robot& robot, std::vector<Pose> subgoal_poses,
                            double v_max, double omega_max, double pulse = 0.1) {
  return [&robot, poses = std::move(subgoal_poses), v_max, omega_max,
          pulse](const PolicyQuery& q) -> std::vector<VelocityCommand> {
    const Pose p = robot.pose();
    const Pose& g = poses.at(q.subgoal_index);
    const double dx = g.x - p.x;
    const double dy = g.y - p.y;
    const double fwd = std::cos(p.yaw) * dx + std::sin(p.yaw) * dy;
    const double lat = -std::sin(p.yaw) * dx + std::cos(p.yaw) * dy;
    const double dyaw = wrap_angle(g.yaw - p.yaw);
    // Close half of the remaining error per pulse; steer toward the goal
    // point while it is clearly ahead, otherwise toward its heading.
    const double dist = std::hypot(fwd, lat);
    const double heading = dist > 0.02 && fwd > 0 ? wrap_angle(std::atan2(lat, fwd)) : 0.0;
    const double turn = dist > 0.02 && fwd > 0 ? 0.5 * heading + 0.5 * dyaw : dyaw;
    const VelocityCommand c{std::clamp(0.5 * fwd / pulse, -v_max, v_max),
                            std::clamp(0.5 * turn / pulse, -omega_max, omega_max)};
    return {c, c};
  };
}

struct ControllerOptions {
  double pulse = 0.1;              // s, duration of each nonzero command
  double pause = 0.02;             // s, null command between evaluations
  std::size_t max_iterations = 50000;
};

struct RunRecord {
  double timestamp = 0.0;  // at capture
  Pose pose;               // at capture
  std::size_t subgoal_index = 0;
  VelocityCommand command;  // applied this iteration (null when switching)
  double image_error = 0.0;
};

struct PublishedCommand {
  double timestamp = 0.0;
  VelocityCommand command;
};

struct RunLog {
  std::vector<RunRecord> records;
  std::vector<PublishedCommand> published;
  bool converged = false;
  std::size_t subgoals_reached = 0;
  std::string message;  // set when the iteration cap fired
};

/// Drives `robot` through `traj` until every subgoal has been reached or
/// the iteration cap fires.
inline RunLog follow_trajectory(const Policy& policy, const VisualTrajectory& traj, Robot& robot,
                                const Hyperparams& hp, const ControllerOptions& opt = {}) {
  hp.validate();
  if (traj.empty()) raise<ArgumentError>("follow_trajectory: empty trajectory");
  if (!(opt.pulse > 0) || !(opt.pause > 0)) {
    raise<ArgumentError>("follow_trajectory: pulse and pause must be > 0");
  }
  RunLog log;
  std::size_t i = 0;
  std::size_t iter = 0;
  while (i < traj.size()) {
    if (iter++ == opt.max_iterations) {
      log.message = detail::concat("iteration cap of ", opt.max_iterations,
                                   " reached while stuck on subgoal ", i);
      log.subgoals_reached = i;
      return log;
    }
    const double t = robot.time();
    const Pose pose = robot.pose();
    const Image img = robot.capture();
    const double e = image_error(img, traj.subgoal(i));
    RunRecord rec{t, pose, i, {}, e};
    if (e > hp.switch_threshold) {
      const auto cmds = policy({img, traj.subgoal(i), i});
      if (cmds.empty()) raise<StateError>("follow_trajectory: policy returned no command");
      const VelocityCommand c = cmds.front();
      if (!c.finite()) raise<StateError>("follow_trajectory: non-finite command");
      rec.command = c;
      log.published.push_back({robot.time(), c});
      robot.apply(c, opt.pulse);
      log.published.push_back({robot.time(), {}});
      robot.apply({}, opt.pause);
    } else {
      ++i;
      robot.apply({}, opt.pause);
    }
    log.records.push_back(rec);
  }
  log.converged = true;
  log.subgoals_reached = traj.size();
  return log;
}

inline void save_run_log(const RunLog& log, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) raise<IoError>("cannot write ", file.string());
  out << "timestamp,x,y,yaw,subgoal_index,v,omega,image_error\n";
  for (const auto& r : log.records) {
    out << format_number(r.timestamp) << ',' << format_number(r.pose.x) << ','
        << format_number(r.pose.y) << ',' << format_number(r.pose.yaw) << ','
        << r.subgoal_index << ',' << format_number(r.command.v) << ','
        << format_number(r.command.omega) << ',' << format_number(r.image_error) << '\n';
  }
  if (!out) raise<IoError>("write failed for ", file.string());
}

inline RunLog load_run_log(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) raise<IoError>("cannot open ", file.string());
  RunLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1 || line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream is(line);
    for (std::string c; std::getline(is, c, ',');) cells.push_back(c);
    if (cells.size() != 8) raise<IoError>(file.string(), ":", lineno, ": expected 8 columns");
    RunRecord r;
    r.timestamp = detail::parse_number(cells[0], file, lineno);
    r.pose = {detail::parse_number(cells[1], file, lineno),
              detail::parse_number(cells[2], file, lineno),
              detail::parse_number(cells[3], file, lineno)};
    r.subgoal_index = detail::parse_index(cells[4], file, lineno);
    r.command = {detail::parse_number(cells[5], file, lineno),
                 detail::parse_number(cells[6], file, lineno)};
    r.image_error = detail::parse_number(cells[7], file, lineno);
    log.records.push_back(r);
  }
  return log;
}

}  // namespace vtr
