#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cgrl/core/error.hpp"
#include "cgrl/harness/metrics.hpp"

namespace cgrl::harness {

struct VehiclePose {
  int id = 0;
  bool present = true;
  double x = 0.0, y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  bool is_ego = false;
};

/// One decision step of a recorded episode.
struct TrajectoryFrame {
  int step = 0;
  double reward = 0.0;
  std::vector<VehiclePose> vehicles;
};

inline constexpr const char* kTrajectoryCsvHeader =
    "step,reward,id,present,x,y,heading,speed,is_ego";

inline std::string trajectory_csv(const std::vector<TrajectoryFrame>& frames) {
  std::string out = kTrajectoryCsvHeader;
  out += '\n';
  for (const TrajectoryFrame& f : frames)
    for (const VehiclePose& v : f.vehicles) {
      out += std::to_string(f.step);
      out += ',';
      out += fmt_full(f.reward);
      out += ',';
      out += std::to_string(v.id);
      out += ',';
      out += v.present ? '1' : '0';
      out += ',';
      out += fmt_full(v.x);
      out += ',';
      out += fmt_full(v.y);
      out += ',';
      out += fmt_full(v.heading);
      out += ',';
      out += fmt_full(v.speed);
      out += ',';
      out += v.is_ego ? '1' : '0';
      out += '\n';
    }
  return out;
}

inline std::vector<TrajectoryFrame> read_trajectory_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("trajectory: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryCsvHeader)
    throw FormatError("trajectory: bad header");
  std::vector<TrajectoryFrame> frames;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    auto next = [&] {
      if (!std::getline(ss, field, ',')) throw FormatError("trajectory: short row");
      return field;
    };
    const int step = std::stoi(next());
    const double reward = std::stod(next());
    VehiclePose v;
    v.id = std::stoi(next());
    v.present = next() == "1";
    v.x = std::stod(next());
    v.y = std::stod(next());
    v.heading = std::stod(next());
    v.speed = std::stod(next());
    v.is_ego = next() == "1";
    if (frames.empty() || frames.back().step != step) {
      frames.push_back(TrajectoryFrame{step, reward, {}});
    }
    frames.back().vehicles.push_back(v);
  }
  return frames;
}

namespace detail {

inline std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

}  // namespace detail

/// One SVG frame per decision step: road cross, oriented vehicle rectangles
/// (ego highlighted), reward annotation. Vehicle transforms carry world
/// coordinates verbatim. Returns the number of frame files written.
inline std::size_t render_episode(const std::vector<TrajectoryFrame>& frames, double lane_width,
                                  double road_half_length, const std::string& out_dir) {
  if (frames.empty()) throw ConfigError("render: empty trajectory");
  std::filesystem::create_directories(out_dir);
  const double ext = road_half_length + lane_width;
  const double view = ext + 4.0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const TrajectoryFrame& f = frames[k];
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << -view << " " << -view << " "
       << 2 * view << " " << 2 * view << "\" width=\"720\" height=\"720\">\n";
    os << "<rect x=\"" << -view << "\" y=\"" << -view << "\" width=\"" << 2 * view
       << "\" height=\"" << 2 * view << "\" fill=\"#f4f6f4\"/>\n";
    os << "<g transform=\"scale(1,-1)\">\n";
    // road cross: two lanes per arm
    os << "  <rect x=\"" << -lane_width << "\" y=\"" << -ext << "\" width=\"" << 2 * lane_width
       << "\" height=\"" << 2 * ext << "\" fill=\"#b9bdb9\"/>\n";
    os << "  <rect x=\"" << -ext << "\" y=\"" << -lane_width << "\" width=\"" << 2 * ext
       << "\" height=\"" << 2 * lane_width << "\" fill=\"#b9bdb9\"/>\n";
    os << "  <line x1=\"0\" y1=\"" << -ext << "\" x2=\"0\" y2=\"" << ext
       << "\" stroke=\"#ffffff\" stroke-width=\"0.15\" stroke-dasharray=\"2 2\"/>\n";
    os << "  <line x1=\"" << -ext << "\" y1=\"0\" x2=\"" << ext
       << "\" y2=\"0\" stroke=\"#ffffff\" stroke-width=\"0.15\" stroke-dasharray=\"2 2\"/>\n";
    for (const VehiclePose& v : f.vehicles) {
      if (!v.present) continue;
      const char* fill = v.is_ego ? "#d8342c" : "#3465a4";
      os << "  <g transform=\"translate(" << detail::fmt9(v.x) << " " << detail::fmt9(v.y)
         << ") rotate(" << detail::fmt9(v.heading * 180.0 / M_PI) << ")\">"
         << "<rect x=\"-2.5\" y=\"-1\" width=\"5\" height=\"2\" fill=\"" << fill
         << "\" stroke=\"#222\" stroke-width=\"0.1\"/></g>\n";
    }
    os << "</g>\n";
    os << "<text x=\"" << -view + 1.5 << "\" y=\"" << -view + 3
       << "\" font-size=\"2.2\" font-family=\"monospace\">step " << f.step << "  reward "
       << detail::fmt9(f.reward) << "</text>\n";
    os << "</svg>\n";

    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.svg", k);
    std::ofstream file(std::filesystem::path(out_dir) / name);
    if (!file) throw FormatError("render: cannot write frame in " + out_dir);
    file << os.str();
  }
  return frames.size();
}

}  // namespace cgrl::harness
