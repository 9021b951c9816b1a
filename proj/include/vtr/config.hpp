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
 * \file config.hpp
 * \brief INI configuration for the command-line pipeline.
 *
 * Sections: [world], [teach], [train], [repeat], [paths]. Every key is
 * optional; unknown sections or keys are rejected so that typos fail loudly.
 * `config_reference()` renders the full key list with the defaults.
 */

#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "vtr/controller.hpp"
#include "vtr/hyperparams.hpp"
#include "vtr/nn/stack.hpp"
#include "vtr/simworld.hpp"

namespace vtr {

/// A named teach script or a custom script file.
struct ScenarioSpec {
  std::string name = "pure_translation";
  std::filesystem::path script;  // for name == "custom"
  std::size_t frames = 2000;     // for name == "exploration"
  // Exploration speed limits. Kept well below the policy bounds so that
  // consecutive frames overlap at 0.4 s sampling.
  double v_max = 0.1;
  double omega_max = 0.25;
};

struct Config {
  // [world]
  std::string texture = "mosaic";  // mosaic | checkerboard | <png path>
  std::uint64_t texture_seed = 7;
  double texel_size = 0.01;
  double camera_height = 0.2;
  double camera_pitch = 0.35;
  double horizontal_fov = 1.3;
  int image_size = 128;
  // [teach]
  ScenarioSpec teach{"exploration", {}, 2000, 0.1, 0.25};
  double sampling_period = 0.4;
  // [train]
  Hyperparams hp;
  nn::ArchConfig arch;
  // [repeat]
  ScenarioSpec repeat{"pure_translation", {}, 150, 0.1, 0.25};
  int stride = 1;
  ControllerOptions controller;
  // [paths]
  std::filesystem::path out = "runs/default";
  std::filesystem::path dataset;     // default <out>/dataset
  std::filesystem::path trajectory;  // default <out>/trajectory

  std::filesystem::path dataset_dir() const { return dataset.empty() ? out / "dataset" : dataset; }
  std::filesystem::path trajectory_dir() const {
    return trajectory.empty() ? out / "trajectory" : trajectory;
  }
  std::filesystem::path viewnet_dir() const { return out / "viewnet"; }
  std::filesystem::path velocitynet_dir() const { return out / "velocitynet"; }
  std::filesystem::path repeat_dir() const { return out / "repeat"; }
  std::filesystem::path report_dir() const { return out / "report"; }

  nn::ArchConfig network_arch() const {
    nn::ArchConfig a = arch;
    a.image_size = image_size;
    return a;
  }

  void validate() const {
    hp.validate();
    network_arch().validate();
    if (!(sampling_period > 0)) raise<ArgumentError>("config: teach.sampling_period must be > 0");
    if (stride < 1) raise<ArgumentError>("config: repeat.stride must be >= 1");
    if (!(texel_size > 0)) raise<ArgumentError>("config: world.texel_size must be > 0");
    for (const auto* s : {&teach, &repeat}) {
      static const std::array<std::string_view, 5> kNames{
          "pure_translation", "pure_rotation", "translation_rotation", "exploration", "custom"};
      if (std::find(kNames.begin(), kNames.end(), s->name) == kNames.end()) {
        raise<ArgumentError>("config: unknown scenario '", s->name, "'");
      }
      if (!(s->v_max > 0) || !(s->omega_max > 0)) {
        raise<ArgumentError>("config: exploration speed limits must be > 0");
      }
      if (s->name == "custom" && s->script.empty()) {
        raise<ArgumentError>("config: scenario 'custom' needs a script path");
      }
    }
  }
};

namespace detail {

/// Binds every config key to a reader and a writer, in reference order.
struct KeyBinding {
  std::string section;
  std::string key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
  std::string help;
};

template <typename V>
V parse_value(const std::string& s, const std::string& name) {
  try {
    std::size_t used = 0;
    V v{};
    if constexpr (std::is_same_v<V, bool>) {
      if (s == "true") return true;
      if (s == "false") return false;
      throw std::invalid_argument(s);
    } else if constexpr (std::is_same_v<V, double>) {
      v = std::stod(s, &used);
    } else if constexpr (std::is_same_v<V, std::uint64_t> || std::is_same_v<V, std::size_t>) {
      if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
      v = static_cast<V>(std::stoull(s, &used));
    } else {
      v = static_cast<V>(std::stoll(s, &used));
    }
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    raise<ArgumentError>("config: ", name, ": cannot parse '", s, "'");
  }
}

template <typename V>
std::string show_value(const V& v) {
  if constexpr (std::is_same_v<V, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<V, double>) {
    return format_number(v);
  } else if constexpr (std::is_same_v<V, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<V, std::filesystem::path>) {
    return v.string();
  } else {
    return std::to_string(v);
  }
}

template <typename V>
KeyBinding binding(std::string section, std::string key, V Config::*member, std::string help) {
  const std::string name = section + "." + key;
  return {section, key,
          [member, name](Config& c, const std::string& s) {
            if constexpr (std::is_same_v<V, std::string> ||
                          std::is_same_v<V, std::filesystem::path>) {
              c.*member = V(s);
            } else {
              c.*member = parse_value<V>(s, name);
            }
          },
          [member](const Config& c) { return show_value(c.*member); }, std::move(help)};
}

/// Same, for a field nested one level down (e.g. Config::hp.w_image).
template <typename Outer, typename V>
KeyBinding binding(std::string section, std::string key, Outer Config::*outer, V Outer::*member,
                std::string help) {
  const std::string name = section + "." + key;
  return {section, key,
          [outer, member, name](Config& c, const std::string& s) {
            if constexpr (std::is_same_v<V, std::string> ||
                          std::is_same_v<V, std::filesystem::path>) {
              (c.*outer).*member = V(s);
            } else {
              (c.*outer).*member = parse_value<V>(s, name);
            }
          },
          [outer, member](const Config& c) { return show_value((c.*outer).*member); },
          std::move(help)};
}

inline const std::vector<KeyBinding>& key_bindings() {
  static const std::vector<KeyBinding> keys = {
      binding("world", "texture", &Config::texture, "mosaic | checkerboard | path to a PNG"),
      binding("world", "texture_seed", &Config::texture_seed, "seed of the mosaic floor"),
      binding("world", "texel_size", &Config::texel_size, "meters per texel"),
      binding("world", "camera_height", &Config::camera_height, "meters above the floor"),
      binding("world", "camera_pitch", &Config::camera_pitch, "downward tilt, radians"),
      binding("world", "horizontal_fov", &Config::horizontal_fov, "radians"),
      binding("world", "image_size", &Config::image_size, "square camera resolution, power of two"),
      binding("teach", "scenario", &Config::teach, &ScenarioSpec::name,
           "exploration | pure_translation | pure_rotation | translation_rotation | custom"),
      binding("teach", "script", &Config::teach, &ScenarioSpec::script,
           "custom script: lines of 'v omega duration'"),
      binding("teach", "frames", &Config::teach, &ScenarioSpec::frames, "exploration length"),
      binding("teach", "explore_v_max", &Config::teach, &ScenarioSpec::v_max,
              "exploration speed limit, m/s"),
      binding("teach", "explore_omega_max", &Config::teach, &ScenarioSpec::omega_max,
              "exploration turn-rate limit, rad/s"),
      binding("teach", "sampling_period", &Config::sampling_period, "seconds between frames"),
      binding("train", "seed", &Config::hp, &Hyperparams::rng_seed,
           "exploration script, initialization and shuffling"),
      binding("train", "horizon", &Config::hp, &Hyperparams::horizon, "MPC steps N"),
      binding("train", "w_image", &Config::hp, &Hyperparams::w_image, "image loss weight"),
      binding("train", "w_velocity", &Config::hp, &Hyperparams::w_velocity, "velocity loss weight"),
      binding("train", "learning_rate", &Config::hp, &Hyperparams::learning_rate, "Adam"),
      binding("train", "batch_size", &Config::hp, &Hyperparams::batch_size, ""),
      binding("train", "viewnet_epochs", &Config::hp, &Hyperparams::viewnet_epochs, ""),
      binding("train", "velocitynet_epochs", &Config::hp, &Hyperparams::velocitynet_epochs, ""),
      binding("train", "validation_fraction", &Config::hp, &Hyperparams::validation_fraction,
           "trailing share of samples held out"),
      binding("train", "mirror_augment", &Config::hp, &Hyperparams::mirror_augment,
              "VelocityNet also trains on mirrored samples (omega negated)"),
      binding("train", "v_max", &Config::hp, &Hyperparams::v_max, "m/s"),
      binding("train", "omega_max", &Config::hp, &Hyperparams::omega_max, "rad/s"),
      binding("train", "stages", &Config::arch, &nn::ArchConfig::stages, "convolution stages"),
      binding("train", "base_channels", &Config::arch, &nn::ArchConfig::base_channels,
           "width of the first stage"),
      binding("train", "feature_dim", &Config::arch, &nn::ArchConfig::feature_dim,
           "bottleneck width"),
      binding("repeat", "scenario", &Config::repeat, &ScenarioSpec::name,
           "teach run that becomes the visual trajectory"),
      binding("repeat", "script", &Config::repeat, &ScenarioSpec::script, ""),
      binding("repeat", "frames", &Config::repeat, &ScenarioSpec::frames, ""),
      binding("repeat", "stride", &Config::stride, "keep every stride-th teach frame"),
      binding("repeat", "switch_threshold", &Config::hp, &Hyperparams::switch_threshold,
           "e_m on the 0..255 scale"),
      binding("repeat", "pulse", &Config::controller, &ControllerOptions::pulse, "seconds"),
      binding("repeat", "pause", &Config::controller, &ControllerOptions::pause, "seconds"),
      binding("repeat", "max_iterations", &Config::controller, &ControllerOptions::max_iterations,
           ""),
      binding("paths", "out", &Config::out, "output root"),
      binding("paths", "dataset", &Config::dataset, "default <out>/dataset"),
      binding("paths", "trajectory", &Config::trajectory, "default <out>/trajectory"),
  };
  return keys;
}

}  // namespace detail

/// Parses INI text on top of the defaults.
inline Config parse_config(const std::string& text, const std::string& origin = "<config>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    raise<ArgumentError>(origin, ":", e.line(), ": ", e.message());
  }
  Config cfg;
  const auto& keys = detail::key_bindings();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      raise<ArgumentError>(origin, ": key '", section, "' outside a section");
    }
    for (const auto& [key, value] : body) {
      const auto it = std::find_if(keys.begin(), keys.end(), [&](const detail::KeyBinding& k) {
        return k.section == section && k.key == key;
      });
      if (it == keys.end()) raise<ArgumentError>(origin, ": unknown key [", section, "] ", key);
      it->set(cfg, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise<IoError>("cannot open config ", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Config cfg = parse_config(ss.str(), path.string());
  // Relative paths inside a config resolve against the working directory,
  // except custom scripts and textures which resolve next to the config.
  const auto base = path.parent_path();
  for (auto* s : {&cfg.teach.script, &cfg.repeat.script}) {
    if (!s->empty() && s->is_relative() && !std::filesystem::exists(*s)) *s = base / *s;
  }
  return cfg;
}

/// Full key list with values of `cfg`, as loadable INI text.
inline std::string config_reference(const Config& cfg = {}) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : detail::key_bindings()) {
    if (k.section != section) {
      os << (section.empty() ? "" : "\n") << '[' << k.section << "]\n";
      section = k.section;
    }
    if (!k.help.empty()) os << "# " << k.help << '\n';
    os << k.key << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Objects built from a config.

inline WorldSpec make_world(const Config& cfg) {
  WorldSpec w;
  w.rng_seed = cfg.texture_seed;
  if (cfg.texture == "mosaic") {
    w.floor_texture = std::make_shared<const FloorTexture>(
        mosaic_texture(cfg.texture_seed, 512, cfg.texel_size));
  } else if (cfg.texture == "checkerboard") {
    w.floor_texture = std::make_shared<const FloorTexture>(
        checkerboard_texture(64, cfg.texel_size * 8));
  } else {
    w.floor_texture =
        std::make_shared<const FloorTexture>(load_texture_png(cfg.texture, cfg.texel_size));
  }
  w.camera_height = cfg.camera_height;
  w.camera_pitch = cfg.camera_pitch;
  w.horizontal_fov = cfg.horizontal_fov;
  w.image_size = cfg.image_size;
  w.validate();
  return w;
}

inline std::string world_ref(const Config& cfg) {
  return detail::concat(cfg.texture, ";seed=", cfg.texture_seed, ";texel=",
                        format_number(cfg.texel_size), ";h=", format_number(cfg.camera_height),
                        ";pitch=", format_number(cfg.camera_pitch), ";fov=",
                        format_number(cfg.horizontal_fov), ";px=", cfg.image_size);
}

inline Script make_script(const ScenarioSpec& s, const Config& cfg) {
  if (s.name == "pure_translation") return pure_translation_script();
  if (s.name == "pure_rotation") return pure_rotation_script();
  if (s.name == "translation_rotation") return translation_rotation_script();
  if (s.name == "exploration") {
    return exploration_script(s.frames, cfg.sampling_period, cfg.hp.rng_seed, s.v_max,
                              s.omega_max);
  }
  if (s.name == "custom") return load_script(s.script);
  raise<ArgumentError>("unknown scenario '", s.name, "'");
}

}  // namespace vtr
