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
 * \file evalstats.hpp
 * \brief Nearest-point and nearest-angle run errors, summaries and reports.
 *
 * Every trajectory point is scored against its closest run point, so the
 * errors do not depend on the order or timing of the run. Summaries keep
 * the table labels of the original evaluation: "MSE" for positions is the
 * mean of squared errors (units of m^2 despite the label) and "MAE" for yaw
 * is the mean absolute error in degrees.
 */

#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "vtr/controller.hpp"
#include "vtr/dataio.hpp"

namespace vtr {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// For each trajectory point, the distance to the nearest run point.
inline std::vector<double> position_errors(std::span<const Point2> traj_points,
                                           std::span<const Point2> run_points) {
  if (run_points.empty()) raise<ArgumentError>("position_errors: empty run");
  std::vector<double> out;
  out.reserve(traj_points.size());
  for (const auto& p : traj_points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : run_points) {
      best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
    }
    out.push_back(best);
  }
  return out;
}

/// Absolute angular distance folded into [0, pi].
inline double angular_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

/// For each trajectory yaw, the wrapped distance to the nearest run yaw, in
/// degrees.
inline std::vector<double> yaw_errors(std::span<const double> traj_yaws,
                                      std::span<const double> run_yaws) {
  if (run_yaws.empty()) raise<ArgumentError>("yaw_errors: empty run");
  std::vector<double> out;
  out.reserve(traj_yaws.size());
  for (double a : traj_yaws) {
    double best = std::numeric_limits<double>::infinity();
    for (double b : run_yaws) best = std::min(best, angular_distance(a, b));
    out.push_back(best * 180.0 / std::numbers::pi);
  }
  return out;
}

enum class ErrorMode { kPosition, kYaw };

struct ErrorStats {
  double min = 0.0;
  double max = 0.0;
  double mse_or_mae = 0.0;  // mean of squares (position) or of |e| (yaw)
  double std = 0.0;         // population
  double mean = 0.0;
};

inline ErrorStats summarize(std::span<const double> errors, ErrorMode mode) {
  if (errors.empty()) raise<ArgumentError>("summarize: no errors");
  ErrorStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0, sum_sq = 0.0, sum_abs = 0.0;
  for (double e : errors) {
    s.min = std::min(s.min, e);
    s.max = std::max(s.max, e);
    sum += e;
    sum_sq += e * e;
    sum_abs += std::abs(e);
  }
  const double n = static_cast<double>(errors.size());
  s.mean = sum / n;
  s.mse_or_mae = mode == ErrorMode::kPosition ? sum_sq / n : sum_abs / n;
  double var = 0.0;
  for (double e : errors) var += (e - s.mean) * (e - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

/// Two-column table with the row labels of the published results.
inline std::string format_stats_table(const ErrorStats& s, ErrorMode mode) {
  const bool pos = mode == ErrorMode::kPosition;
  const char* unit = pos ? "meters" : "degrees";
  std::ostringstream os;
  os << "Min (" << unit << ")\t" << format_number(s.min) << '\n'
     << "Max (" << unit << ")\t" << format_number(s.max) << '\n'
     << (pos ? "MSE" : "MAE") << " (" << unit << ")\t" << format_number(s.mse_or_mae) << '\n'
     << "Standard deviation\t" << format_number(s.std) << '\n';
  return os.str();
}

/// Inverse of format_stats_table for the four published rows.
inline ErrorStats parse_stats_table(const std::string& text) {
  ErrorStats s;
  std::istringstream is(text);
  std::string line;
  int seen = 0;
  while (std::getline(is, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    const std::string label = line.substr(0, tab);
    const double v = std::stod(line.substr(tab + 1));
    if (label.rfind("Min", 0) == 0) {
      s.min = v;
    } else if (label.rfind("Max", 0) == 0) {
      s.max = v;
    } else if (label.rfind("MSE", 0) == 0 || label.rfind("MAE", 0) == 0) {
      s.mse_or_mae = v;
    } else if (label == "Standard deviation") {
      s.std = v;
    } else {
      raise<ArgumentError>("parse_stats_table: unknown row '", label, "'");
    }
    ++seen;
  }
  if (seen != 4) raise<ArgumentError>("parse_stats_table: expected 4 rows, got ", seen);
  return s;
}

// ---------------------------------------------------------------------------
// Plots.

/// Minimal RGB raster for report figures.
class Canvas {
 public:
  using Color = std::array<std::uint8_t, 3>;
  static constexpr Color kWhite{255, 255, 255};
  static constexpr Color kBlack{0, 0, 0};
  static constexpr Color kGray{200, 200, 200};
  static constexpr Color kBlue{30, 60, 220};
  static constexpr Color kRed{220, 30, 30};

  Canvas(int width, int height) : w_(width), h_(height), px_(3 * width * height, 255) {}

  void set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    std::copy(c.begin(), c.end(), px_.begin() + 3 * (y * w_ + x));
  }
  void dot(int x, int y, int r, Color c) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy <= r * r) set(x + dx, y + dy, c);
      }
    }
  }
  void line(int x0, int y0, int x1, int y1, Color c) {
    const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
    for (int s = 0; s <= steps; ++s) {
      set(static_cast<int>(std::lround(x0 + (x1 - x0) * double(s) / steps)),
          static_cast<int>(std::lround(y0 + (y1 - y0) * double(s) / steps)), c);
    }
  }
  void save(const std::filesystem::path& path) const { write_png_rgb8(path, w_, h_, px_); }

  int width() const { return w_; }
  int height() const { return h_; }

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

/// Maps data coordinates into a plot area with a margin and a frame.
class PlotFrame {
 public:
  PlotFrame(Canvas& c, double x0, double x1, double y0, double y1, bool equal_aspect)
      : c_(c) {
    const auto pad = [](double& a, double& b) {
      if (b - a < 1e-9) {
        a -= 0.5;
        b += 0.5;
      }
      const double m = 0.05 * (b - a);
      a -= m;
      b += m;
    };
    pad(x0, x1);
    pad(y0, y1);
    const double pw = c.width() - 2 * kMargin, ph = c.height() - 2 * kMargin;
    if (equal_aspect) {
      const double s = std::max((x1 - x0) / pw, (y1 - y0) / ph);
      const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
      x0 = cx - 0.5 * s * pw;
      x1 = cx + 0.5 * s * pw;
      y0 = cy - 0.5 * s * ph;
      y1 = cy + 0.5 * s * ph;
    }
    x0_ = x0;
    x1_ = x1;
    y0_ = y0;
    y1_ = y1;
    const int l = kMargin, r = c.width() - kMargin, t = kMargin, b = c.height() - kMargin;
    c.line(l, t, r, t, Canvas::kBlack);
    c.line(l, b, r, b, Canvas::kBlack);
    c.line(l, t, l, b, Canvas::kBlack);
    c.line(r, t, r, b, Canvas::kBlack);
  }

  int px(double x) const {
    return kMargin + static_cast<int>(std::lround((x - x0_) / (x1_ - x0_) * (c_.width() - 2 * kMargin)));
  }
  int py(double y) const {
    return c_.height() - kMargin -
           static_cast<int>(std::lround((y - y0_) / (y1_ - y0_) * (c_.height() - 2 * kMargin)));
  }
  void polyline(std::span<const double> xs, std::span<const double> ys, Canvas::Color col) {
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
      c_.line(px(xs[k]), py(ys[k]), px(xs[k + 1]), py(ys[k + 1]), col);
    }
    for (std::size_t k = 0; k < xs.size(); ++k) c_.dot(px(xs[k]), py(ys[k]), 2, col);
  }

 private:
  static constexpr int kMargin = 24;
  Canvas& c_;
  double x0_, x1_, y0_, y1_;
};

// ---------------------------------------------------------------------------
// Report.

struct Report {
  std::vector<double> position;  // meters, one per subgoal
  std::vector<double> yaw;       // degrees, one per subgoal
  ErrorStats position_stats;
  ErrorStats yaw_stats;
};

inline Report evaluate_run(const RunLog& run, const VisualTrajectory& traj) {
  const auto& poses = traj.ground_truth_poses();
  if (run.records.empty()) raise<ArgumentError>("evaluation requires a non-empty run log");
  std::vector<Point2> tp, rp;
  std::vector<double> ty, ry;
  for (const auto& p : poses) {
    tp.push_back({p.x, p.y});
    ty.push_back(p.yaw);
  }
  for (const auto& r : run.records) {
    rp.push_back({r.pose.x, r.pose.y});
    ry.push_back(r.pose.yaw);
  }
  Report rep;
  rep.position = position_errors(tp, rp);
  rep.yaw = yaw_errors(ty, ry);
  rep.position_stats = summarize(rep.position, ErrorMode::kPosition);
  rep.yaw_stats = summarize(rep.yaw, ErrorMode::kYaw);
  return rep;
}

/// Writes errors.csv, stats.csv, trajectory.png, position_error.png and
/// yaw_error.png into `out_dir`.
inline Report emit_report(const RunLog& run, const VisualTrajectory& traj,
                          const std::filesystem::path& out_dir) {
  const Report rep = evaluate_run(run, traj);
  const auto& poses = traj.ground_truth_poses();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) raise<IoError>("cannot create ", out_dir.string(), ": ", ec.message());

  {
    std::ofstream out(out_dir / "errors.csv", std::ios::trunc);
    if (!out) raise<IoError>("cannot write ", (out_dir / "errors.csv").string());
    out << "subgoal_index,x,y,yaw,position_error_m,yaw_error_deg\n";
    for (std::size_t i = 0; i < poses.size(); ++i) {
      out << i << ',' << format_number(poses[i].x) << ',' << format_number(poses[i].y) << ','
          << format_number(poses[i].yaw) << ',' << format_number(rep.position[i]) << ','
          << format_number(rep.yaw[i]) << '\n';
    }
  }
  {
    std::ofstream out(out_dir / "stats.csv", std::ios::trunc);
    if (!out) raise<IoError>("cannot write ", (out_dir / "stats.csv").string());
    out << "metric,min,max,mse_or_mae,std,mean\n";
    const auto row = [&](const char* name, const ErrorStats& s) {
      out << name << ',' << format_number(s.min) << ',' << format_number(s.max) << ','
          << format_number(s.mse_or_mae) << ',' << format_number(s.std) << ','
          << format_number(s.mean) << '\n';
    };
    row("position_m", rep.position_stats);
    row("yaw_deg", rep.yaw_stats);
  }

  // Top view: blue subgoal poses, red run poses.
  {
    std::vector<double> tx, ty, rx, ry;
    for (const auto& p : poses) {
      tx.push_back(p.x);
      ty.push_back(p.y);
    }
    for (const auto& r : run.records) {
      rx.push_back(r.pose.x);
      ry.push_back(r.pose.y);
    }
    const auto [xmin, xmax] = std::minmax_element(tx.begin(), tx.end());
    const auto [ymin, ymax] = std::minmax_element(ty.begin(), ty.end());
    double x0 = *xmin, x1 = *xmax, y0 = *ymin, y1 = *ymax;
    for (std::size_t k = 0; k < rx.size(); ++k) {
      x0 = std::min(x0, rx[k]);
      x1 = std::max(x1, rx[k]);
      y0 = std::min(y0, ry[k]);
      y1 = std::max(y1, ry[k]);
    }
    Canvas c(640, 480);
    PlotFrame f(c, x0, x1, y0, y1, true);
    for (std::size_t k = 0; k < tx.size(); ++k) c.dot(f.px(tx[k]), f.py(ty[k]), 3, Canvas::kBlue);
    for (std::size_t k = 0; k < rx.size(); ++k) c.dot(f.px(rx[k]), f.py(ry[k]), 1, Canvas::kRed);
    c.save(out_dir / "trajectory.png");
  }

  const auto curve = [&](const std::vector<double>& e, const std::filesystem::path& file) {
    std::vector<double> xs(e.size());
    std::iota(xs.begin(), xs.end(), 0.0);
    const double top = *std::max_element(e.begin(), e.end());
    Canvas c(640, 320);
    PlotFrame f(c, 0.0, std::max(1.0, xs.back()), 0.0, std::max(top, 1e-6), false);
    f.polyline(xs, e, Canvas::kRed);
    c.save(file);
  };
  curve(rep.position, out_dir / "position_error.png");
  curve(rep.yaw, out_dir / "yaw_error.png");
  return rep;
}

}  // namespace vtr
