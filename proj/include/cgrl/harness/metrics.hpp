#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cgrl/core/error.hpp"

namespace cgrl::harness {

enum class Outcome { kCollided, kArrived, kTimeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::kCollided: return "collided";
    case Outcome::kArrived: return "arrived";
    case Outcome::kTimeout: return "timeout";
  }
  return "?";
}

inline Outcome outcome_from_string(const std::string& s) {
  if (s == "collided") return Outcome::kCollided;
  if (s == "arrived") return Outcome::kArrived;
  if (s == "timeout") return Outcome::kTimeout;
  throw FormatError("unknown outcome: " + s);
}

struct EpisodeLog {
  long episode = 0;
  double reward = 0.0;
  int steps = 0;
  Outcome outcome = Outcome::kTimeout;
  double mean_speed = 0.0;
};

/// Full-precision float formatting so CSV rows reproduce and recompute
/// exactly.
inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline constexpr const char* kEpisodeCsvHeader = "episode,reward,steps,outcome,mean_speed";

inline std::string episode_csv(const std::vector<EpisodeLog>& rows) {
  std::string out = kEpisodeCsvHeader;
  out += '\n';
  for (const EpisodeLog& r : rows) {
    out += std::to_string(r.episode);
    out += ',';
    out += fmt_full(r.reward);
    out += ',';
    out += std::to_string(r.steps);
    out += ',';
    out += to_string(r.outcome);
    out += ',';
    out += fmt_full(r.mean_speed);
    out += '\n';
  }
  return out;
}

inline std::vector<EpisodeLog> parse_episode_csv(std::istream& is) {
  std::vector<EpisodeLog> rows;
  std::string line;
  if (!std::getline(is, line) || line != kEpisodeCsvHeader)
    throw FormatError("episode csv: bad header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    EpisodeLog r;
    std::getline(ss, field, ',');
    r.episode = std::stol(field);
    std::getline(ss, field, ',');
    r.reward = std::stod(field);
    std::getline(ss, field, ',');
    r.steps = std::stoi(field);
    std::getline(ss, field, ',');
    r.outcome = outcome_from_string(field);
    std::getline(ss, field, ',');
    r.mean_speed = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<EpisodeLog> read_episode_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("episode csv: cannot open " + path);
  return parse_episode_csv(is);
}

/// C.R. (%), A.R., A.V. over one evaluation run.
struct MetricsReport {
  std::string model;
  std::string task;
  std::uint64_t seed = 0;
  long episodes = 0;
  double collision_rate = 0.0;  // percent
  double avg_reward = 0.0;
  double avg_velocity = 0.0;    // m/s
};

/// Aggregate metrics exactly as defined: C.R. = collided/total x100,
/// A.R. = mean cumulative reward, A.V. = mean of per-episode mean speeds.
inline MetricsReport metrics_from_rows(const std::vector<EpisodeLog>& rows) {
  if (rows.empty()) throw ConfigError("metrics: no episodes (undefined metrics)");
  MetricsReport m;
  m.episodes = static_cast<long>(rows.size());
  long collided = 0;
  double reward_sum = 0.0, speed_sum = 0.0;
  for (const EpisodeLog& r : rows) {
    collided += r.outcome == Outcome::kCollided ? 1 : 0;
    reward_sum += r.reward;
    speed_sum += r.mean_speed;
  }
  m.collision_rate = 100.0 * static_cast<double>(collided) / static_cast<double>(rows.size());
  m.avg_reward = reward_sum / static_cast<double>(rows.size());
  m.avg_velocity = speed_sum / static_cast<double>(rows.size());
  return m;
}

inline constexpr const char* kMetricsCsvHeader =
    "model,task,seed,episodes,collision_rate,avg_reward,avg_velocity";

inline std::string metrics_csv_row(const MetricsReport& m) {
  std::string out = m.model;
  out += ',';
  out += m.task;
  out += ',';
  out += std::to_string(m.seed);
  out += ',';
  out += std::to_string(m.episodes);
  out += ',';
  out += fmt_full(m.collision_rate);
  out += ',';
  out += fmt_full(m.avg_reward);
  out += ',';
  out += fmt_full(m.avg_velocity);
  out += '\n';
  return out;
}

inline std::vector<MetricsReport> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("metrics csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kMetricsCsvHeader)
    throw FormatError("metrics csv: bad header in " + path);
  std::vector<MetricsReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    MetricsReport m;
    std::getline(ss, m.model, ',');
    std::getline(ss, m.task, ',');
    std::getline(ss, field, ',');
    m.seed = std::stoull(field);
    std::getline(ss, field, ',');
    m.episodes = std::stol(field);
    std::getline(ss, field, ',');
    m.collision_rate = std::stod(field);
    std::getline(ss, field, ',');
    m.avg_reward = std::stod(field);
    std::getline(ss, field, ',');
    m.avg_velocity = std::stod(field);
    out.push_back(m);
  }
  return out;
}

}  // namespace cgrl::harness
