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
 * \file dataio.hpp
 * \brief Teach datasets, visual trajectories and their on-disk layout.
 *
 * A dataset directory holds `manifest.tsv` and `images/%06d.png`; a
 * trajectory directory holds `trajectory.tsv` and the same image layout.
 * Numbers are written as decimals with 9 significant digits. Datasets built
 * in memory are canonicalized to that precision so a save/load round trip
 * reproduces every field exactly.
 */

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vtr/image.hpp"
#include "vtr/simworld.hpp"

namespace vtr {

struct Frame {
  std::size_t index = 0;
  double timestamp = 0.0;
  Image image;
  VelocityCommand command;  // executed while leaving this frame
  Pose pose;                // ground truth, evaluation only

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct TeachDataset {
  std::vector<Frame> frames;
  double sampling_period = 0.4;
  std::string world_ref;

  std::size_t size() const { return frames.size(); }
  friend bool operator==(const TeachDataset&, const TeachDataset&) = default;
};

/// Three consecutive frames and the two commands linking them. Holds views
/// into the dataset it was extracted from.
struct TrainingSample {
  std::size_t index = 0;  // i
  const Image* image_i = nullptr;
  const Image* image_i1 = nullptr;
  const Image* image_i2 = nullptr;
  VelocityCommand cmd_i;
  VelocityCommand cmd_i1;
};

/// Ordered subgoal images. Ground-truth poses, when present, are reachable
/// only through the evaluation accessor; navigation code sees images only.
class VisualTrajectory {
 public:
  VisualTrajectory() = default;
  explicit VisualTrajectory(std::vector<Image> subgoals,
                            std::optional<std::vector<Pose>> poses = std::nullopt)
      : subgoals_(std::move(subgoals)), poses_(std::move(poses)) {
    if (poses_ && poses_->size() != subgoals_.size()) {
      raise<ArgumentError>("VisualTrajectory: pose count differs from subgoal count");
    }
  }

  std::size_t size() const { return subgoals_.size(); }
  bool empty() const { return subgoals_.empty(); }
  const Image& subgoal(std::size_t i) const { return subgoals_.at(i); }
  const std::vector<Image>& subgoals() const { return subgoals_; }

  bool has_ground_truth() const { return poses_.has_value(); }
  /// Evaluation-only access to the teach poses.
  const std::vector<Pose>& ground_truth_poses() const {
    if (!poses_) {
      raise<ArgumentError>("evaluation requires ground-truth trajectory poses");
    }
    return *poses_;
  }

  friend bool operator==(const VisualTrajectory&, const VisualTrajectory&) = default;

 private:
  std::vector<Image> subgoals_;
  std::optional<std::vector<Pose>> poses_;
};

// ---------------------------------------------------------------------------
// Number formatting.

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Rounds to the value a save/load round trip produces.
inline double canonical(double v) { return std::stod(format_number(v)); }

inline Pose canonical(const Pose& p) {
  return {canonical(p.x), canonical(p.y), canonical(p.yaw)};
}
inline VelocityCommand canonical(const VelocityCommand& c) {
  return {canonical(c.v), canonical(c.omega)};
}

/// Builds a dataset from a scripted teach run.
inline TeachDataset make_dataset(std::vector<ScriptedRecord> records,
                                 double sampling_period, std::string world_ref) {
  TeachDataset ds;
  ds.sampling_period = canonical(sampling_period);
  ds.world_ref = std::move(world_ref);
  ds.frames.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    ds.frames.push_back({i, canonical(r.timestamp), std::move(r.image),
                         canonical(r.cmd), canonical(r.pose)});
  }
  return ds;
}

inline std::string image_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", index);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, '\t')) out.push_back(cell);
  return out;
}

inline double parse_number(const std::string& s, const std::filesystem::path& file,
                           std::size_t lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    raise<IoError>(file.string(), ":", lineno, ": malformed number '", s, "'");
  }
}

inline std::size_t parse_index(const std::string& s, const std::filesystem::path& file,
                               std::size_t lineno) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    raise<IoError>(file.string(), ":", lineno, ": malformed index '", s, "'");
  }
  return std::stoull(s);
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) raise<IoError>("cannot create ", dir.string(), ": ", ec.message());
}

/// Reads `# key<TAB>value` metadata lines and returns data rows (with their
/// 1-based line numbers), skipping the column header.
struct Table {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

inline Table read_table(const std::filesystem::path& file, std::string_view header0) {
  std::ifstream in(file);
  if (!in) raise<IoError>("cannot open ", file.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto cells = split_tabs(line.substr(2));
      if (cells.size() != 2) raise<IoError>(file.string(), ":", lineno, ": malformed metadata");
      t.meta.emplace_back(cells[0], cells[1]);
      continue;
    }
    auto cells = split_tabs(line);
    if (!saw_header) {
      if (cells.empty() || cells[0] != header0) {
        raise<IoError>(file.string(), ":", lineno, ": missing column header");
      }
      saw_header = true;
      continue;
    }
    t.rows.emplace_back(lineno, std::move(cells));
  }
  if (!saw_header) raise<IoError>(file.string(), ": empty table");
  return t;
}

inline std::string meta_value(const Table& t, std::string_view key,
                              const std::filesystem::path& file) {
  for (const auto& [k, v] : t.meta) {
    if (k == key) return v;
  }
  raise<IoError>(file.string(), ": missing metadata '", key, "'");
}

}  // namespace detail

inline void save_dataset(const TeachDataset& ds, const std::filesystem::path& dir) {
  detail::ensure_dir(dir);
  std::ofstream out(dir / "manifest.tsv", std::ios::trunc);
  if (!out) raise<IoError>("cannot write ", (dir / "manifest.tsv").string());
  out << "# sampling_period\t" << format_number(ds.sampling_period) << "\n";
  out << "# world_ref\t" << ds.world_ref << "\n";
  out << "index\ttimestamp\tx\ty\tyaw\tv\tomega\timage\n";
  for (const auto& f : ds.frames) {
    const std::string name = image_filename(f.index);
    out << f.index << '\t' << format_number(f.timestamp) << '\t'
        << format_number(f.pose.x) << '\t' << format_number(f.pose.y) << '\t'
        << format_number(f.pose.yaw) << '\t' << format_number(f.command.v) << '\t'
        << format_number(f.command.omega) << '\t' << "images/" << name << '\n';
    save_png(f.image, dir / "images" / name);
  }
  if (!out) raise<IoError>("write failed for ", (dir / "manifest.tsv").string());
}

inline TeachDataset load_dataset(const std::filesystem::path& dir) {
  const auto file = dir / "manifest.tsv";
  const auto table = detail::read_table(file, "index");
  TeachDataset ds;
  ds.sampling_period =
      detail::parse_number(detail::meta_value(table, "sampling_period", file), file, 1);
  ds.world_ref = detail::meta_value(table, "world_ref", file);
  ds.frames.reserve(table.rows.size());
  for (const auto& [lineno, cells] : table.rows) {
    if (cells.size() != 8) {
      raise<IoError>(file.string(), ":", lineno, ": expected 8 columns, got ", cells.size());
    }
    Frame f;
    f.index = detail::parse_index(cells[0], file, lineno);
    if (f.index != ds.frames.size()) {
      raise<IoError>(file.string(), ":", lineno, ": index gap at record ", ds.frames.size(),
                     " (found index ", f.index, ")");
    }
    f.timestamp = detail::parse_number(cells[1], file, lineno);
    f.pose = {detail::parse_number(cells[2], file, lineno),
              detail::parse_number(cells[3], file, lineno),
              detail::parse_number(cells[4], file, lineno)};
    f.command = {detail::parse_number(cells[5], file, lineno),
                 detail::parse_number(cells[6], file, lineno)};
    if (!ds.frames.empty() && !(f.timestamp > ds.frames.back().timestamp)) {
      raise<IoError>(file.string(), ":", lineno, ": timestamps not increasing at record ",
                     f.index);
    }
    const auto img_path = dir / cells[7];
    if (!std::filesystem::exists(img_path)) {
      raise<IoError>(file.string(), ": record ", f.index, ": missing image ",
                     img_path.string());
    }
    f.image = load_png(img_path);
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

/// Every stride-1 triple (i, i+1, i+2). Fewer than three frames yields no
/// samples and sets `warning` when given.
inline std::vector<TrainingSample> extract_samples(const TeachDataset& ds,
                                                   std::string* warning = nullptr) {
  std::vector<TrainingSample> out;
  if (ds.frames.size() < 3) {
    if (warning) {
      *warning = detail::concat("dataset has ", ds.frames.size(),
                                " frames; at least 3 are needed for a training sample");
    }
    return out;
  }
  out.reserve(ds.frames.size() - 2);
  for (std::size_t i = 0; i + 2 < ds.frames.size(); ++i) {
    out.push_back({i, &ds.frames[i].image, &ds.frames[i + 1].image,
                   &ds.frames[i + 2].image, ds.frames[i].command,
                   ds.frames[i + 1].command});
  }
  return out;
}

inline VisualTrajectory dataset_to_trajectory(const TeachDataset& ds, int stride) {
  if (stride <= 0) raise<ArgumentError>("dataset_to_trajectory: stride must be >= 1");
  std::vector<Image> images;
  std::vector<Pose> poses;
  for (std::size_t i = 0; i < ds.frames.size(); i += static_cast<std::size_t>(stride)) {
    images.push_back(ds.frames[i].image);
    poses.push_back(ds.frames[i].pose);
  }
  return VisualTrajectory(std::move(images), std::move(poses));
}

inline void save_trajectory(const VisualTrajectory& traj, const std::filesystem::path& dir) {
  detail::ensure_dir(dir);
  std::ofstream out(dir / "trajectory.tsv", std::ios::trunc);
  if (!out) raise<IoError>("cannot write ", (dir / "trajectory.tsv").string());
  out << "# has_poses\t" << (traj.has_ground_truth() ? 1 : 0) << "\n";
  out << "index\tx\ty\tyaw\timage\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const std::string name = image_filename(i);
    out << i;
    if (traj.has_ground_truth()) {
      const Pose& p = traj.ground_truth_poses()[i];
      out << '\t' << format_number(p.x) << '\t' << format_number(p.y) << '\t'
          << format_number(p.yaw);
    } else {
      out << "\t-\t-\t-";
    }
    out << "\timages/" << name << '\n';
    save_png(traj.subgoal(i), dir / "images" / name);
  }
  if (!out) raise<IoError>("write failed for ", (dir / "trajectory.tsv").string());
}

inline VisualTrajectory load_trajectory(const std::filesystem::path& dir) {
  const auto file = dir / "trajectory.tsv";
  if (!std::filesystem::exists(file)) {
    raise<IoError>("missing trajectory: ", file.string(), " does not exist");
  }
  const auto table = detail::read_table(file, "index");
  const bool has_poses = detail::meta_value(table, "has_poses", file) == "1";
  std::vector<Image> images;
  std::vector<Pose> poses;
  for (const auto& [lineno, cells] : table.rows) {
    if (cells.size() != 5) {
      raise<IoError>(file.string(), ":", lineno, ": expected 5 columns");
    }
    const std::size_t idx = detail::parse_index(cells[0], file, lineno);
    if (idx != images.size()) {
      raise<IoError>(file.string(), ":", lineno, ": index gap at record ", images.size());
    }
    if (has_poses) {
      poses.push_back({detail::parse_number(cells[1], file, lineno),
                       detail::parse_number(cells[2], file, lineno),
                       detail::parse_number(cells[3], file, lineno)});
    }
    const auto img_path = dir / cells[4];
    if (!std::filesystem::exists(img_path)) {
      raise<IoError>(file.string(), ": record ", idx, ": missing image ", img_path.string());
    }
    images.push_back(load_png(img_path));
  }
  if (has_poses) return VisualTrajectory(std::move(images), std::move(poses));
  return VisualTrajectory(std::move(images));
}

}  // namespace vtr
