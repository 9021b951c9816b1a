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
 * \file simworld.hpp
 * \brief Planar unicycle robot with a forward-looking pinhole camera that
 *        looks at an infinite, periodically tiled, textured floor.
 *
 * World frame: x forward at yaw 0, y to the left, z up. The floor is the
 * plane z = 0; texel (col, row) of the floor texture covers the square
 * [col, col+1) x [row, row+1) scaled by `texel_size`, with texel centres at
 * integer-plus-half positions.
 */

#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vtr/common.hpp"
#include "vtr/image.hpp"

namespace vtr {

/// Robot state in the world frame. Yaw lives in (-pi, pi].
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(yaw);
  }
  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Twist command: longitudinal velocity (m/s) and yaw rate (rad/s).
struct VelocityCommand {
  double v = 0.0;
  double omega = 0.0;

  bool finite() const { return std::isfinite(v) && std::isfinite(omega); }
  bool is_null() const { return v == 0.0 && omega == 0.0; }
  bool within(double v_max, double omega_max) const {
    return std::abs(v) <= v_max && std::abs(omega) <= omega_max;
  }
  VelocityCommand operator-() const { return {-v, -omega}; }
  friend bool operator==(const VelocityCommand&,
                         const VelocityCommand&) = default;
};

inline constexpr double kDefaultVMax = 0.5;
inline constexpr double kDefaultOmegaMax = 1.0;

/// Exact-arc unicycle integration over `dt` seconds.
inline Pose step_kinematics(const Pose& pose, const VelocityCommand& cmd,
                            double dt) {
  if (!pose.finite() || !cmd.finite() || !std::isfinite(dt)) {
    raise<StateError>("step_kinematics: non-finite input");
  }
  if (dt <= 0.0) raise<ArgumentError>("step_kinematics: dt must be > 0");
  Pose out;
  const double yaw1 = pose.yaw + cmd.omega * dt;
  if (std::abs(cmd.omega) > 1e-9) {
    const double r = cmd.v / cmd.omega;
    out.x = pose.x + r * (std::sin(yaw1) - std::sin(pose.yaw));
    out.y = pose.y - r * (std::cos(yaw1) - std::cos(pose.yaw));
  } else {
    out.x = pose.x + cmd.v * dt * std::cos(pose.yaw);
    out.y = pose.y + cmd.v * dt * std::sin(pose.yaw);
  }
  out.yaw = wrap_angle(yaw1);
  return out;
}

// ---------------------------------------------------------------------------
// Floor texture.

/// Planar RGB raster laid on the floor, tiling periodically in both axes.
struct FloorTexture {
  int width = 0;
  int height = 0;
  double texel_size = 0.01;  // meters per texel
  std::vector<float> rgb;    // CHW, values in [0, 1]

  float at(int c, int row, int col) const {
    return rgb[(static_cast<std::size_t>(c) * height + row) * width + col];
  }
  float& at(int c, int row, int col) {
    return rgb[(static_cast<std::size_t>(c) * height + row) * width + col];
  }

  /// Bilinear lookup at a floor point (meters), periodic wrap.
  std::array<double, 3> sample(double fx, double fy) const {
    const double u = fx / texel_size - 0.5;
    const double v = fy / texel_size - 0.5;
    const double u0f = std::floor(u);
    const double v0f = std::floor(v);
    const double au = u - u0f;
    const double av = v - v0f;
    const auto wrap = [](double i, int n) {
      long long k = static_cast<long long>(i) % n;
      return static_cast<int>(k < 0 ? k + n : k);
    };
    const int c0 = wrap(u0f, width);
    const int c1 = (c0 + 1) % width;
    const int r0 = wrap(v0f, height);
    const int r1 = (r0 + 1) % height;
    std::array<double, 3> out{};
    for (int ch = 0; ch < 3; ++ch) {
      const double top = (1.0 - au) * at(ch, r0, c0) + au * at(ch, r0, c1);
      const double bot = (1.0 - au) * at(ch, r1, c0) + au * at(ch, r1, c1);
      out[ch] = (1.0 - av) * top + av * bot;
    }
    return out;
  }
};

inline FloorTexture uniform_texture(float gray, int size = 4,
                                    double texel_size = 0.05) {
  FloorTexture t;
  t.width = t.height = size;
  t.texel_size = texel_size;
  t.rgb.assign(static_cast<std::size_t>(3) * size * size, gray);
  return t;
}

inline FloorTexture checkerboard_texture(int squares, double texel_size,
                                         float dark = 0.1f, float light = 0.9f) {
  FloorTexture t;
  t.width = t.height = squares;
  t.texel_size = texel_size;
  t.rgb.resize(static_cast<std::size_t>(3) * squares * squares);
  for (int r = 0; r < squares; ++r) {
    for (int c = 0; c < squares; ++c) {
      const float v = ((r + c) % 2 == 0) ? dark : light;
      t.at(0, r, c) = v;
      t.at(1, r, c) = ((r + c) % 2 == 0) ? light : dark;
      t.at(2, r, c) = 0.5f * v + 0.25f;
    }
  }
  return t;
}

/// Seamless colored mosaic: periodic Voronoi tiles with softened grout
/// lines, plus a gentle low-frequency shading so that neighbouring tiles of
/// similar color remain distinguishable.
inline FloorTexture mosaic_texture(std::uint64_t seed, int size = 512,
                                   double texel_size = 0.01,
                                   double tile_size = 0.2,
                                   double blur_sigma_texels = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double extent = size * texel_size;
  const int n_sites = std::max(
      4, static_cast<int>(std::lround((extent / tile_size) *
                                      (extent / tile_size))));
  struct Site {
    double x, y;
    std::array<float, 3> color;
  };
  std::vector<Site> sites(n_sites);
  for (auto& s : sites) {
    s.x = uni(rng) * size;
    s.y = uni(rng) * size;
    // Saturated hue, randomized value.
    const double hue = uni(rng) * 6.0;
    const double val = 0.35 + 0.6 * uni(rng);
    const double sat = 0.45 + 0.5 * uni(rng);
    const int sector = static_cast<int>(hue) % 6;
    const double f = hue - std::floor(hue);
    const double p = val * (1 - sat);
    const double q = val * (1 - sat * f);
    const double t = val * (1 - sat * (1 - f));
    std::array<double, 3> rgb{};
    switch (sector) {
      case 0: rgb = {val, t, p}; break;
      case 1: rgb = {q, val, p}; break;
      case 2: rgb = {p, val, t}; break;
      case 3: rgb = {p, q, val}; break;
      case 4: rgb = {t, p, val}; break;
      default: rgb = {val, p, q}; break;
    }
    s.color = {static_cast<float>(rgb[0]), static_cast<float>(rgb[1]),
               static_cast<float>(rgb[2])};
  }

  FloorTexture tex;
  tex.width = tex.height = size;
  tex.texel_size = texel_size;
  tex.rgb.assign(static_cast<std::size_t>(3) * size * size, 0.0f);
  const double half = 0.5 * size;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      double best = 1e300;
      double second = 1e300;
      const Site* nearest = nullptr;
      for (const auto& s : sites) {
        double dx = std::abs(c + 0.5 - s.x);
        double dy = std::abs(r + 0.5 - s.y);
        if (dx > half) dx = size - dx;
        if (dy > half) dy = size - dy;
        const double d = dx * dx + dy * dy;
        if (d < best) {
          second = best;
          best = d;
          nearest = &s;
        } else if (d < second) {
          second = d;
        }
      }
      // Dark grout where the two nearest sites are nearly equidistant.
      const double gap = std::sqrt(second) - std::sqrt(best);
      const float grout = gap < 1.5 ? 0.35f : 1.0f;
      for (int ch = 0; ch < 3; ++ch) {
        tex.at(ch, r, c) = nearest->color[ch] * grout;
      }
    }
  }

  // Separable periodic Gaussian blur.
  if (blur_sigma_texels > 0.0) {
    const int radius = static_cast<int>(std::ceil(3.0 * blur_sigma_texels));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int k = -radius; k <= radius; ++k) {
      kernel[k + radius] =
          std::exp(-0.5 * k * k / (blur_sigma_texels * blur_sigma_texels));
      norm += kernel[k + radius];
    }
    for (double& k : kernel) k /= norm;
    std::vector<float> tmp(tex.rgb.size());
    for (int ch = 0; ch < 3; ++ch) {
      for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k) {
            acc += kernel[k + radius] * tex.at(ch, r, (c + k + size) % size);
          }
          tmp[(static_cast<std::size_t>(ch) * size + r) * size + c] =
              static_cast<float>(acc);
        }
      }
      for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k) {
            acc += kernel[k + radius] *
                   tmp[(static_cast<std::size_t>(ch) * size +
                        (r + k + size) % size) *
                           size +
                       c];
          }
          tex.at(ch, r, c) = static_cast<float>(acc);
        }
      }
    }
  }

  // Low-frequency shading, periodic over the tile.
  const double ph1 = uni(rng) * 2 * std::numbers::pi;
  const double ph2 = uni(rng) * 2 * std::numbers::pi;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double s =
          1.0 + 0.15 * std::sin(2 * std::numbers::pi * 2 * c / size + ph1) *
                    std::cos(2 * std::numbers::pi * 3 * r / size + ph2);
      for (int ch = 0; ch < 3; ++ch) {
        tex.at(ch, r, c) =
            std::clamp(static_cast<float>(tex.at(ch, r, c) * s), 0.0f, 1.0f);
      }
    }
  }
  return tex;
}

inline FloorTexture load_texture_png(const std::filesystem::path& path,
                                     double texel_size) {
  const Image img = load_png(path);
  FloorTexture t;
  t.width = img.width();
  t.height = img.height();
  t.texel_size = texel_size;
  t.rgb.assign(img.values().begin(), img.values().end());
  return t;
}

// ---------------------------------------------------------------------------
// World and camera.

struct WorldSpec {
  std::shared_ptr<const FloorTexture> floor_texture;
  double camera_height = 0.2;   // m
  double camera_pitch = 0.35;   // rad, downward tilt
  double horizontal_fov = 1.3;  // rad
  int image_size = 128;
  std::array<float, 3> background_color{0.62f, 0.66f, 0.72f};
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!floor_texture || floor_texture->width <= 0 ||
        floor_texture->height <= 0 || !(floor_texture->texel_size > 0.0)) {
      raise<ArgumentError>("WorldSpec: floor texture must have positive extent");
    }
    if (!(horizontal_fov > 0.0 && horizontal_fov < std::numbers::pi)) {
      raise<ArgumentError>("WorldSpec: horizontal_fov must be in (0, pi)");
    }
    if (image_size <= 0) raise<ArgumentError>("WorldSpec: image_size <= 0");
    if (!(camera_height > 0.0) || !std::isfinite(camera_pitch)) {
      raise<ArgumentError>("WorldSpec: camera height must be > 0");
    }
  }
};

/// Desk-scale world with the default mosaic floor for `seed`.
inline WorldSpec default_world(std::uint64_t seed) {
  WorldSpec w;
  w.rng_seed = seed;
  w.floor_texture = std::make_shared<const FloorTexture>(mosaic_texture(seed));
  return w;
}

/// Renders the floor as seen by the robot camera. Values are continuous
/// (not 8-bit quantized); see `quantize_8bit` for the sensor model.
inline Image render_camera(const Pose& pose, const WorldSpec& world) {
  if (!pose.finite()) raise<StateError>("render_camera: non-finite pose");
  world.validate();
  const int n = world.image_size;
  // Resolve heading to 1 nrad so that yaw and yaw + 2*pi render identically.
  const double yaw = std::round(wrap_angle(pose.yaw) * 1e9) * 1e-9;
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(world.camera_pitch);
  const double sp = std::sin(world.camera_pitch);
  const std::array<double, 3> fwd{cy * cp, sy * cp, -sp};
  const std::array<double, 3> right{sy, -cy, 0.0};
  const std::array<double, 3> up{cy * sp, sy * sp, cp};
  const double focal = 0.5 * n / std::tan(0.5 * world.horizontal_fov);
  const double h = world.camera_height;

  // Lowest pixel row must look below the horizon.
  {
    const double yc = (n - 0.5) - 0.5 * n;
    const double dz = fwd[2] * focal - up[2] * yc;
    if (!(dz < 0.0)) {
      raise<RenderError>("render_camera: no camera ray intersects the floor");
    }
  }

  Image img(n, n);
  const FloorTexture& tex = *world.floor_texture;
  for (int r = 0; r < n; ++r) {
    const double yc = (r + 0.5) - 0.5 * n;
    for (int c = 0; c < n; ++c) {
      const double xc = (c + 0.5) - 0.5 * n;
      const double dx = fwd[0] * focal + right[0] * xc - up[0] * yc;
      const double dy = fwd[1] * focal + right[1] * xc - up[1] * yc;
      const double dz = fwd[2] * focal + right[2] * xc - up[2] * yc;
      if (dz >= 0.0) {
        for (int ch = 0; ch < 3; ++ch) {
          img.at(ch, r, c) = world.background_color[ch];
        }
        continue;
      }
      const double t = -h / dz;
      const auto rgb = tex.sample(pose.x + t * dx, pose.y + t * dy);
      for (int ch = 0; ch < 3; ++ch) {
        img.at(ch, r, c) =
            static_cast<float>(std::clamp(rgb[ch], 0.0, 1.0));
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Scripted driving.

struct ScriptSegment {
  VelocityCommand cmd;
  double duration = 0.0;  // seconds
};
using Script = std::vector<ScriptSegment>;

struct ScriptedRecord {
  Pose pose;
  Image image;
  VelocityCommand cmd;  // in force over the following period
  double timestamp = 0.0;
};

/// Drives `script` from `start`, recording a quantized camera frame every
/// `period` seconds.
inline std::vector<ScriptedRecord> run_scripted(const WorldSpec& world,
                                                const Script& script,
                                                double period,
                                                Pose start = {}) {
  if (!(period > 0.0)) raise<ArgumentError>("run_scripted: period must be > 0");
  std::vector<ScriptedRecord> out;
  Pose pose = start;
  std::size_t k = 0;
  for (const auto& seg : script) {
    const double steps_f = seg.duration / period;
    const long long steps = std::llround(steps_f);
    if (steps < 0 || std::abs(steps_f - static_cast<double>(steps)) > 1e-6) {
      raise<ArgumentError>("run_scripted: duration ", seg.duration,
                           " is not a multiple of the period ", period);
    }
    for (long long s = 0; s < steps; ++s, ++k) {
      out.push_back({pose, quantize_8bit(render_camera(pose, world)), seg.cmd,
                     static_cast<double>(k) * period});
      pose = step_kinematics(pose, seg.cmd, period);
    }
  }
  return out;
}

// Named teach scripts. Desk-scale: ~1.5 m of travel or a +/-90 degree sweep
// over 60 s, i.e. 150 frames at the default 0.4 s period.

inline Script pure_translation_script() { return {{{0.025, 0.0}, 60.0}}; }

inline Script pure_rotation_script() {
  constexpr double w = std::numbers::pi / 40.0;  // 90 degrees in 20 s
  return {{{0.0, -w}, 20.0}, {{0.0, w}, 40.0}};
}

inline Script translation_rotation_script() {
  constexpr double w = std::numbers::pi / 40.0;
  return {{{0.025, 0.0}, 20.0}, {{0.0, w}, 20.0}, {{0.025, 0.0}, 20.0}};
}

/// Random piecewise-constant driving used to build training datasets: a mix
/// of stops, straight runs, spins and arcs at widely varying speeds, biased
/// toward slow motion. Produces exactly `frames` records at `period`.
inline Script exploration_script(std::size_t frames, double period,
                                 std::uint64_t seed, double v_max,
                                 double omega_max) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<int> len(3, 12);
  // Log-uniform magnitude in [lo, hi], random sign.
  const auto magnitude = [&](double lo, double hi, double p_neg) {
    const double m = lo * std::pow(hi / lo, uni(rng));
    return uni(rng) < p_neg ? -m : m;
  };
  Script script;
  std::size_t left = frames;
  while (left > 0) {
    const std::size_t n =
        std::min<std::size_t>(left, static_cast<std::size_t>(len(rng)));
    VelocityCommand cmd;
    const double kind = uni(rng);
    if (kind < 0.08) {
      cmd = {0.0, 0.0};
    } else if (kind < 0.38) {
      cmd = {magnitude(0.01, v_max, 0.25), 0.0};
    } else if (kind < 0.63) {
      cmd = {0.0, magnitude(0.02, omega_max, 0.5)};
    } else {
      cmd = {magnitude(0.01, v_max, 0.2), magnitude(0.02, omega_max, 0.5)};
    }
    script.push_back({cmd, static_cast<double>(n) * period});
    left -= n;
  }
  return script;
}

/// Reads a custom script: one `v omega duration` triple per line, `#`
/// comments allowed.
inline Script load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise<IoError>("cannot open script ", path.string());
  Script s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto p = line.find('#'); p != std::string::npos) line.resize(p);
    std::istringstream is(line);
    ScriptSegment seg;
    if (!(is >> seg.cmd.v)) continue;
    if (!(is >> seg.cmd.omega >> seg.duration)) {
      raise<IoError>(path.string(), ":", lineno, ": expected 'v omega duration'");
    }
    s.push_back(seg);
  }
  return s;
}

}  // namespace vtr
