#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cgrl/harness/config.hpp"
#include "cgrl/harness/metrics.hpp"

namespace cgrl::harness {

inline const std::vector<std::string>& table_tasks() {
  static const std::vector<std::string> tasks{"left", "straight", "right"};
  return tasks;
}

/// Table III-style summary: one row per model, column groups per task with
/// (C.R. %, A.R., A.V.), two decimals, seeds averaged. Missing cells are "-".
inline std::string export_table(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ConfigError("report: no metrics to tabulate");
  struct Cell {
    double cr = 0, ar = 0, av = 0;
    long count = 0;
  };
  std::map<std::pair<std::string, std::string>, Cell> cells;
  for (const MetricsReport& r : reports) {
    Cell& c = cells[{r.model, r.task}];
    c.cr += r.collision_rate;
    c.ar += r.avg_reward;
    c.av += r.avg_velocity;
    ++c.count;
  }
  auto fmt2 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream os;
  os << "model";
  for (const std::string& task : table_tasks())
    os << "," << task << "_cr," << task << "_ar," << task << "_av";
  os << "\n";
  for (const auto& [model_name, spec] : model_table()) {
    bool model_present = false;
    for (const std::string& task : table_tasks())
      model_present = model_present || cells.count({model_name, task});
    if (!model_present) continue;
    os << model_name;
    for (const std::string& task : table_tasks()) {
      auto it = cells.find({model_name, task});
      if (it == cells.end()) {
        os << ",-,-,-";
      } else {
        const Cell& c = it->second;
        os << "," << fmt2(c.cr / c.count) << "," << fmt2(c.ar / c.count) << ","
           << fmt2(c.av / c.count);
      }
    }
    os << "\n";
  }
  return os.str();
}

struct TableCell {
  double cr = 0, ar = 0, av = 0;
};

/// Parse-back of export_table output keyed by (model, task).
inline std::map<std::pair<std::string, std::string>, TableCell> parse_table(
    const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("table: empty");
  std::map<std::pair<std::string, std::string>, TableCell> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string model;
    std::getline(ss, model, ',');
    for (const std::string& task : table_tasks()) {
      std::string cr, ar, av;
      std::getline(ss, cr, ',');
      std::getline(ss, ar, ',');
      std::getline(ss, av, ',');
      if (cr == "-" || cr.empty()) continue;
      out[{model, task}] = TableCell{std::stod(cr), std::stod(ar), std::stod(av)};
    }
  }
  return out;
}

}  // namespace cgrl::harness
