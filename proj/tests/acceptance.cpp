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

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "vtr/pipeline.hpp"

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
//   acceptance <work_dir> [criterion numbers...]

namespace {

using namespace vtr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. Warp against a naive per-pixel bilinear oracle.

double naive_sample(const Image& img, int ch, double y, double x) {
  const int h = img.height(), w = img.width();
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  const auto px = [&](int r, int c) { return static_cast<double>(img.at(ch, r, c)); };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
         fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
}

Verdict warp_oracle() {
  constexpr double kTol = 1e-6;
  constexpr double kBudget = 10.0;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2101);
  std::uniform_real_distribution<float> pix(0.0f, 1.0f);
  double worst = 0.0;
  bool identity_exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    Image img(8, 8);
    for (auto& v : img.values()) v = pix(rng);
    const float range = trial % 2 ? 1.5f : 0.4f;
    std::uniform_real_distribution<float> off(-range, range);
    FlowField f(8, 8);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        f.dx(r, c) = off(rng);
        f.dy(r, c) = off(rng);
      }
    const Image out = warp(img, f);
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
          const double ref = naive_sample(img, ch, r + f.dy(r, c) * 3.5, c + f.dx(r, c) * 3.5);
          worst = std::max(worst, std::abs(out.at(ch, r, c) - ref));
        }
    const Image same = warp(img, FlowField(8, 8));
    identity_exact = identity_exact && std::equal(same.values().begin(), same.values().end(),
                                                  img.values().begin());
  }
  const double secs = seconds_since(t0);
  return {worst <= kTol && identity_exact && secs < kBudget,
          "max |warp - oracle| " + fmt(worst) + " (<= 1e-6), identity bit-exact " +
              (identity_exact ? "yes" : "no") + ", " + fmt(secs) + " s (< 10 s)"};
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients against central differences.

struct ProbeCount {
  int probed = 0;
  int good = 0;
  void add(double analytic, double numeric) {
    constexpr double kRel = 1e-2;
    ++probed;
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    if (rel <= kRel) ++good;
  }
  bool ok() const { return probed > 0 && good * 100 >= probed * 95; }
  std::string str() const { return std::to_string(good) + "/" + std::to_string(probed); }
};

ProbeCount warp_gradient_probes() {
  constexpr double h = 1e-3;
  std::mt19937_64 rng(2201);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  ProbeCount pc;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6;
    Tensor<double> img(2, 3, n, n), flow(2, 2, n, n), weights(2, 3, n, n);
    for (auto& v : img.values()) v = u(rng) + 0.5;
    for (auto& v : flow.values()) v = u(rng);
    for (auto& v : weights.values()) v = u(rng);
    const auto loss = [&] {
      const auto out = warp(img, flow);
      double s = 0;
      for (std::size_t i = 0; i < out.size(); ++i) s += weights[i] * out[i];
      return s;
    };
    Tensor<double> gi, gf;
    warp_backward(img, flow, weights, &gi, &gf);
    const auto probe = [&](Tensor<double>& t, const Tensor<double>& g) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double keep = t[i];
        t[i] = keep + h;
        const double up = loss();
        t[i] = keep - h;
        const double dn = loss();
        t[i] = keep;
        pc.add(g[i], (up - dn) / (2 * h));
      }
    };
    probe(img, gi);
    probe(flow, gf);
  }
  return pc;
}

Image smooth_image(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 2 * std::numbers::pi);
  const double a = u(rng), b = u(rng), c = u(rng);
  Image img(size, size);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < size; ++r)
      for (int col = 0; col < size; ++col) {
        img.at(ch, r, col) = static_cast<float>(
            0.5 + 0.2 * std::sin(0.7 * r + a + ch) + 0.2 * std::cos(0.9 * col + b * (ch + 1)) +
            0.05 * std::sin(0.3 * r * col + c));
      }
  return img;
}

// Gradient of the per-sample MPC objective with respect to the commands and
// to the policy parameters.
std::pair<ProbeCount, ProbeCount> mpc_gradient_probes() {
  constexpr double h = 1e-3;
  const nn::ArchConfig toy{8, 4, 2, 4};
  std::mt19937_64 rng(2301);
  ViewNet<double> view(toy, 0.5, 1.0, 4);
  {
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto& w : view.decoder().stages().back().up.weight.value) w = nd(rng);
    Tensor<double> imgs(6, 3, 8, 8), cmds(6, 2, 1, 1);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& v : imgs.values()) v = u(rng) + 0.5;
    for (auto& v : cmds.values()) v = u(rng);
    for (int k = 0; k < 5; ++k) view.forward_train(imgs, cmds, nullptr);
  }
  const Hyperparams hp;
  std::vector<Image> frames;
  for (int i = 0; i < 12; ++i) frames.push_back(smooth_image(8, rng));
  std::vector<TrainingSample> batch;
  for (int i = 0; i < 4; ++i) {
    batch.push_back({static_cast<std::size_t>(i), &frames[3 * i], &frames[3 * i + 1],
                     &frames[3 * i + 2], {0.1 * i, -0.2}, {0.3, 0.1 * i}});
  }
  ProbeCount pc, pp;

  // Commands: J = (J_1 + J_2) / 2 for each sample alone.
  std::uniform_real_distribution<double> cmd(-0.4, 0.4);
  for (int draw = 0; draw < 16; ++draw) {
    const std::span<const TrainingSample> one(&batch[draw % batch.size()], 1);
    Tensor<double> outs(1, 4, 1, 1);
    for (auto& v : outs.values()) v = cmd(rng);
    const auto objective = [&] {
      double j = 0;
      for (int pass = 1; pass <= 2; ++pass)
        j += 0.5 * mpc_pass<double>(view, one, pass, outs, hp, 0.0, nullptr).total[0];
      return j;
    };
    Tensor<double> grad(1, 4, 1, 1), g;
    for (int pass = 1; pass <= 2; ++pass) {
      mpc_pass<double>(view, one, pass, outs, hp, 0.5, &g);
      for (std::size_t k = 0; k < g.size(); ++k) grad[k] += g[k];
    }
    for (std::size_t k = 0; k < outs.size(); ++k) {
      const double keep = outs[k];
      outs[k] = keep + h;
      const double up = objective();
      outs[k] = keep - h;
      const double dn = objective();
      outs[k] = keep;
      pc.add(grad[k], (up - dn) / (2 * h));
    }
  }

  // Parameters, through the policy network.
  VelocityNet<double> vel(toy, 2, 0.5, 1.0, 6);
  for (auto& w : vel.trunk().stages().back().conv.weight.value) w *= 10.0;
  VelocityNet<double> work = vel;
  nn::zero_grads(work.params());
  mpc_batch_train<double>(view, work, batch, hp);
  const auto analytic = work.params();
  auto params = vel.params();
  std::mt19937_64 pick(2302);
  for (std::size_t p = 0; p < params.size(); ++p) {
    // Up to 12 distinct coordinates per tensor.
    std::vector<std::size_t> coords(params[p]->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::shuffle(coords.begin(), coords.end(), pick);
    coords.resize(std::min<std::size_t>(coords.size(), 12));
    for (const std::size_t idx : coords) {
      double& x = params[p]->value[idx];
      const double keep = x;
      x = keep + h;
      VelocityNet<double> a = vel;
      const double up = mpc_batch_train<double>(view, a, batch, hp).j;
      x = keep - h;
      VelocityNet<double> b = vel;
      const double dn = mpc_batch_train<double>(view, b, batch, hp).j;
      x = keep;
      pp.add(analytic[p]->grad[idx], (up - dn) / (2 * h));
    }
  }
  return {pc, pp};
}

Verdict gradient_checks() {
  constexpr double kBudget = 120.0;
  const auto t0 = Clock::now();
  const ProbeCount w = warp_gradient_probes();
  const auto [mc, mp] = mpc_gradient_probes();
  const double secs = seconds_since(t0);
  return {w.ok() && mc.ok() && mp.ok() && secs < kBudget,
          "warp " + w.str() + ", MPC objective wrt commands " + mc.str() + " and parameters " +
              mp.str() + " probes within 1e-2 (>= 95% each), " + fmt(secs) + " s (< 120 s)"};
}

// ---------------------------------------------------------------------------
// 3. Loss algebra.

Verdict loss_algebra() {
  std::mt19937_64 rng(2401);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> len(1, 6);
  double duality = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    std::vector<VelocityCommand> rec(n), out(n), mirrored(n);
    for (auto& c : rec) c = {u(rng), u(rng)};
    for (auto& c : out) c = {u(rng), u(rng)};
    // The reverse pass equals the forward pass against the negated,
    // time-reversed recording.
    for (int k = 0; k < n; ++k) mirrored[k] = {-rec[n - 1 - k].v, -rec[n - 1 - k].omega};
    duality = std::max(duality, std::abs(velocity_loss_reverse(rec, out) -
                                          velocity_loss_forward(mirrored, out)));
  }
  const std::vector<VelocityCommand> cmds{{0.5, 0.2}, {0.3, -0.1}}, zeros{{0, 0}, {0, 0}};
  const bool hand = velocity_loss_forward(cmds, zeros) == 0.195 &&
                    velocity_loss_reverse(cmds, zeros) == 0.195;

  double elementwise = 0.0;
  std::uniform_real_distribution<float> pix(0.0f, 1.0f);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<Image, 4> im{Image(16, 16), Image(16, 16), Image(16, 16), Image(16, 16)};
    for (auto& i : im)
      for (auto& v : i.values()) v = pix(rng);
    double s1 = 0, s2 = 0;
    for (std::size_t k = 0; k < im[0].values().size(); ++k) {
      s1 += std::abs(static_cast<double>(im[0].values()[k]) - im[2].values()[k]);
      s2 += std::abs(static_cast<double>(im[1].values()[k]) - im[3].values()[k]);
    }
    const double npx = static_cast<double>(im[0].values().size());
    elementwise = std::max(elementwise, std::abs(image_loss_forward(im[0], im[1], im[2], im[3]) -
                                                 0.5 * (s1 / npx + s2 / npx)));
    const int n = len(rng);
    std::vector<VelocityCommand> rec(n), out(n);
    for (auto& c : rec) c = {u(rng), u(rng)};
    for (auto& c : out) c = {u(rng), u(rng)};
    double sv = 0;
    for (int k = 0; k < n; ++k) {
      sv += std::pow(rec[k].v - out[k].v, 2) + std::pow(rec[k].omega - out[k].omega, 2);
    }
    elementwise = std::max(elementwise, std::abs(velocity_loss_forward(rec, out) - sv / n));
  }
  return {duality <= 1e-12 && hand && elementwise <= 1e-9,
          "duality gap " + fmt(duality) + " (<= 1e-12), hand value 0.195 " +
              (hand ? "exact" : "WRONG") + ", elementwise gap " + fmt(elementwise) +
              " (<= 1e-9)"};
}

// ---------------------------------------------------------------------------
// 4. Nearest-point and nearest-yaw errors against brute force.

Verdict error_oracles() {
  std::mt19937_64 rng(2501);
  std::uniform_real_distribution<double> u(-3.0, 3.0), ang(-12.0, 12.0);
  int mismatches = 0;
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<Point2> tp(200), rp(200);
    std::vector<double> ty(200), ry(200);
    for (auto& p : tp) p = {u(rng), u(rng)};
    for (auto& p : rp) p = {u(rng), u(rng)};
    for (auto& a : ty) a = ang(rng);
    for (auto& a : ry) a = ang(rng);
    const auto pe = position_errors(tp, rp);
    const auto ye = yaw_errors(ty, ry);
    for (std::size_t i = 0; i < 200; ++i) {
      double best_d = 1e300, best_a = 1e300;
      for (std::size_t j = 0; j < 200; ++j) {
        best_d = std::min(best_d, std::hypot(tp[i].x - rp[j].x, tp[i].y - rp[j].y));
        // IEEE remainder folds exactly into [-pi, pi].
        best_a = std::min(best_a, std::abs(std::remainder(ty[i] - ry[j], 2 * std::numbers::pi)));
      }
      if (pe[i] != best_d) ++mismatches;
      if (ye[i] != best_a * 180.0 / std::numbers::pi) ++mismatches;
    }
  }
  return {mismatches == 0,
          std::to_string(mismatches) + " mismatches over 50 x 200 points (== 0)"};
}

// ---------------------------------------------------------------------------
// 5. Controller with the ground-truth stub policy.

Verdict controller_contract() {
  constexpr double kBudget = 60.0;
  const auto t0 = Clock::now();
  const Config cfg;
  const WorldSpec world = make_world(cfg);
  const VisualTrajectory traj = dataset_to_trajectory(
      make_dataset(run_scripted(world, pure_translation_script(), cfg.sampling_period, {}),
                   cfg.sampling_period, world_ref(cfg)),
      1);
  SimRobot robot(world, traj.ground_truth_poses().front());
  const RunLog log = follow_trajectory(
      oracle_policy(robot, traj.ground_truth_poses(), cfg.hp.v_max, cfg.hp.omega_max,
                    cfg.controller.pulse),
      traj, robot, cfg.hp, cfg.controller);
  constexpr double kEm = 17.0;
  bool monotone = true;
  std::size_t switches = 0;
  double worst_switch = 0.0;
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto& r = log.records[k];
    const bool last = k + 1 == log.records.size();
    if (!last && log.records[k + 1].subgoal_index < r.subgoal_index) monotone = false;
    const bool advanced = last ? log.converged : log.records[k + 1].subgoal_index > r.subgoal_index;
    if (advanced) {
      ++switches;
      worst_switch = std::max(worst_switch, r.image_error);
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = traj.size() == 150 && log.converged && switches == 150 &&
                  worst_switch <= kEm && monotone && secs < kBudget;
  return {ok, std::to_string(log.subgoals_reached) + "/" + std::to_string(traj.size()) +
                  " subgoals, " + std::to_string(switches) + " switches, worst switch error " +
                  fmt(worst_switch) + " (<= 17), monotone " + (monotone ? "yes" : "no") + ", " +
                  fmt(secs) + " s (< 60 s)"};
}

// ---------------------------------------------------------------------------
// 6 and 7. Desk-scale training and repeat runs.

Config desk_config(const fs::path& work) {
  Config cfg;
  cfg.teach = {"exploration", {}, 2000};
  cfg.out = work / "desk";
  return cfg;
}

struct DeskModels {
  bool trained = false;
  std::vector<ViewNetEpoch> view_trace;
  double view_seconds = 0.0;
};

DeskModels& desk_models(const fs::path& work) {
  static DeskModels m;
  if (m.trained) return m;
  const Config cfg = desk_config(work);
  const auto t0 = Clock::now();
  collect(cfg, std::cerr);
  m.view_trace = run_train_viewnet(cfg, std::cerr);
  m.view_seconds = seconds_since(t0);
  run_train_velocitynet(cfg, std::cerr);
  m.trained = true;
  return m;
}

Verdict viewnet_signal(const fs::path& work) {
  constexpr double kRatio = 0.6;
  constexpr double kBudget = 2 * 3600.0;
  const DeskModels& m = desk_models(work);
  const ViewNetEpoch& last = m.view_trace.back();
  const double ratio = last.heldout_l1 / last.identity_l1;
  return {ratio <= kRatio && m.view_seconds <= kBudget,
          "held-out L1 " + fmt(last.heldout_l1) + " vs identity " + fmt(last.identity_l1) +
              ", ratio " + fmt(ratio) + " (<= 0.6), " + fmt(m.view_seconds) + " s (<= 7200 s)"};
}

struct Repeat {
  RunLog log;
  Report report;
  double seconds = 0.0;
  std::size_t subgoals = 0;
};

Repeat desk_repeat(const fs::path& work, const std::string& scenario) {
  desk_models(work);
  const Config cfg = desk_config(work);
  const WorldSpec world = make_world(cfg);
  const VisualTrajectory traj = dataset_to_trajectory(
      make_dataset(run_scripted(world, make_script({scenario, {}, 0}, cfg), cfg.sampling_period,
                                {}),
                   cfg.sampling_period, world_ref(cfg)),
      cfg.stride);
  const VelocityNet<float> net = load_velocitynet(cfg);
  SimRobot robot(world, traj.ground_truth_poses().front());
  Repeat r;
  const auto t0 = Clock::now();
  r.log = follow_trajectory(learned_policy(net), traj, robot, cfg.hp, cfg.controller);
  r.seconds = seconds_since(t0);
  r.subgoals = traj.size();
  r.report = evaluate_run(r.log, traj);
  const fs::path dir = work / "desk" / ("repeat_" + scenario);
  fs::create_directories(dir);
  save_run_log(r.log, dir / "run_log.csv");
  emit_report(r.log, traj, dir / "report");
  return r;
}

Verdict end_to_end(const fs::path& work) {
  constexpr double kMeanPosition = 0.05;  // meters
  constexpr double kYawMae = 5.0;         // degrees
  constexpr double kBudget = 300.0;       // per scenario
  const Repeat a = desk_repeat(work, "pure_translation");
  const Repeat b = desk_repeat(work, "pure_rotation");
  const Repeat c = desk_repeat(work, "translation_rotation");
  const bool ok_a = a.report.position_stats.mean <= kMeanPosition && a.seconds < kBudget;
  const bool ok_b = b.report.yaw_stats.mse_or_mae <= kYawMae && b.seconds < kBudget;
  const bool ok_c = c.log.converged && c.seconds < kBudget;
  const auto reached = [](const Repeat& r) {
    return std::to_string(r.log.subgoals_reached) + "/" + std::to_string(r.subgoals);
  };
  return {ok_a && ok_b && ok_c,
          std::string("(a) ") + (ok_a ? "ok" : "FAIL") + " mean position error " +
              fmt(a.report.position_stats.mean) + " m (<= 0.05), " + reached(a) + ", " +
              fmt(a.seconds) + " s; (b) " + (ok_b ? "ok" : "FAIL") + " yaw MAE " +
              fmt(b.report.yaw_stats.mse_or_mae) + " deg (<= 5), " + reached(b) + ", " +
              fmt(b.seconds) + " s; (c) " + (ok_c ? "ok" : "FAIL") + " " + reached(c) +
              (c.log.converged ? "" : " (" + c.log.message + ")") + ", " + fmt(c.seconds) +
              " s (each < 300 s)"};
}

// ---------------------------------------------------------------------------
// 8. Determinism of the whole pipeline.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism(const fs::path& work) {
  Config cfg;
  cfg.image_size = 32;
  cfg.arch = {32, 6, 8, 32};
  cfg.teach = {"exploration", {}, 200};
  cfg.hp.viewnet_epochs = 2;
  cfg.hp.velocitynet_epochs = 2;
  cfg.hp.rng_seed = 17;
  cfg.repeat = {"translation_rotation", {}, 0};
  cfg.stride = 5;
  cfg.controller.max_iterations = 300;
  std::ostringstream quiet;
  for (const char* run : {"a", "b"}) {
    cfg.out = work / "determinism" / run;
    fs::remove_all(cfg.out);
    collect(cfg, quiet);
    run_train_viewnet(cfg, quiet);
    run_train_velocitynet(cfg, quiet);
    run_repeat(cfg, PolicyKind::kLearned, quiet);
  }
  const fs::path a = work / "determinism" / "a", b = work / "determinism" / "b";
  std::vector<std::string> differing;
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a / "dataset")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    ++compared;
    if (slurp(a / rel) != slurp(b / rel)) differing.push_back(rel.string());
  }
  for (const char* f : {"viewnet/train_log.csv", "velocitynet/train_log.csv", "repeat/run_log.csv"}) {
    ++compared;
    if (slurp(a / f).empty() || slurp(a / f) != slurp(b / f)) differing.push_back(f);
  }
  std::string detail = std::to_string(compared) + " files compared, " +
                       std::to_string(differing.size()) + " differ";
  if (!differing.empty()) detail += " (first: " + differing.front() + ")";
  return {differing.empty() && compared > 200, detail};
}

// ---------------------------------------------------------------------------
// 9. Policy outputs stay within the velocity bounds.

Verdict output_bounds() {
  constexpr double kVMax = 0.5, kOmegaMax = 1.0;
  const nn::ArchConfig arch;
  std::mt19937_64 rng(2901);
  std::uniform_real_distribution<float> pix(0.0f, 1.0f);
  std::uniform_real_distribution<double> gain(1.0, 200.0);
  int count = 0, violations = 0;
  double peak_v = 0.0, peak_w = 0.0;
  for (int net_id = 0; net_id < 20; ++net_id) {
    VelocityNet<float> net(arch, 2, kVMax, kOmegaMax, 100 + net_id);
    // Most networks get a scaled-up head so that outputs saturate.
    const double g = net_id < 4 ? 1.0 : gain(rng);
    for (auto& w : net.trunk().stages().back().conv.weight.value) w *= static_cast<float>(g);
    for (int batch = 0; batch < 10; ++batch) {
      const int n = 50;
      Tensor<float> cur(n, 3, arch.image_size, arch.image_size), goal = cur;
      for (auto& v : cur.values()) v = pix(rng);
      for (auto& v : goal.values()) v = pix(rng);
      const Tensor<float> out = net.forward_eval(cur, goal);
      for (int i = 0; i < n; ++i) {
        ++count;
        bool ok = true;
        for (int k = 0; k < net.horizon(); ++k) {
          const VelocityCommand c = output_command(out, i, k);
          peak_v = std::max(peak_v, std::abs(c.v));
          peak_w = std::max(peak_w, std::abs(c.omega));
          ok = ok && std::abs(c.v) <= kVMax && std::abs(c.omega) <= kOmegaMax;
        }
        if (!ok) ++violations;
      }
    }
  }
  return {count == 10000 && violations == 0,
          std::to_string(count) + " inferences, " + std::to_string(violations) +
              " out of bounds, peak |v| " + fmt(peak_v) + " (<= 0.5), peak |omega| " +
              fmt(peak_w) + " (<= 1.0)"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"warp oracle", warp_oracle},
      {"gradient checks", gradient_checks},
      {"loss algebra", loss_algebra},
      {"nearest-point and nearest-yaw oracles", error_oracles},
      {"controller contract", controller_contract},
      {"ViewNet learning signal", [&] { return viewnet_signal(work); }},
      {"end-to-end repeat", [&] { return end_to_end(work); }},
      {"determinism", [&] { return determinism(work); }},
      {"output bounds", output_bounds},
  };
  fs::create_directories(work);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": "
              << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
