#pragma once

#include <array>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "cgrl/causal/cdrl.hpp"
#include "cgrl/core/error.hpp"
#include "cgrl/policy/qnet.hpp"
#include "cgrl/rl/trainer.hpp"
#include "cgrl/sim/world.hpp"

namespace cgrl::harness {

/// The seven model ids and their architecture/trainer flags.
struct ModelSpec {
  bool use_gcn, use_gat, use_dueling, use_double, use_cdrl;
};

inline const std::array<std::pair<const char*, ModelSpec>, 7>& model_table() {
  static const std::array<std::pair<const char*, ModelSpec>, 7> table{{
      {"gcn-dqn", {true, false, false, false, false}},
      {"gcn-double-dqn", {true, false, false, true, false}},
      {"gcn-dueling-dqn", {true, false, true, false, false}},
      {"gcn-d3qn", {true, false, true, true, false}},
      {"gat-d3qn", {false, true, true, true, false}},
      {"gcn-gat-d3qn", {true, true, true, true, false}},
      {"cgrl", {true, true, true, true, true}},
  }};
  return table;
}

inline ModelSpec model_spec(const std::string& id) {
  for (const auto& [name, spec] : model_table())
    if (id == name) return spec;
  throw ConfigError("unknown model id: " + id);
}

inline sim::EgoTask task_from_string(const std::string& s) {
  if (s == "left") return sim::EgoTask::kLeft;
  if (s == "straight") return sim::EgoTask::kStraight;
  if (s == "right") return sim::EgoTask::kRight;
  throw ConfigError("unknown task: " + s + " (expected left|straight|right)");
}

inline const char* to_string(sim::EgoTask t) {
  switch (t) {
    case sim::EgoTask::kLeft: return "left";
    case sim::EgoTask::kStraight: return "straight";
    case sim::EgoTask::kRight: return "right";
  }
  return "?";
}

struct HarnessConfig {
  long checkpoint_every = 100;  // episodes
  long eval_episodes = 200;
  bool record_trajectory = true;
};

/// Everything one training or evaluation cell needs.
struct ExperimentConfig {
  sim::ScenarioConfig scenario;
  rl::TrainerConfig trainer;
  policy::PolicyConfig policy;
  causal::CdrlConfig cdrl;
  HarnessConfig harness;
  std::string model = "cgrl";
  std::string task = "straight";
  std::uint64_t seed = 0;

  void apply_model_flags() {
    const ModelSpec spec = model_spec(model);
    policy.use_gcn = spec.use_gcn;
    policy.use_gat = spec.use_gat;
    policy.use_dueling = spec.use_dueling;
    policy.use_double = spec.use_double;
    scenario.ego_task = task_from_string(task);
  }

  bool uses_cdrl() const { return model_spec(model).use_cdrl; }
};

namespace detail {

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

inline double to_double(const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw ConfigError("bad numeric value: " + v);
    return d;
  } catch (const std::logic_error&) {
    throw ConfigError("bad numeric value: " + v);
  }
}

inline long to_long(const std::string& v) {
  try {
    std::size_t pos = 0;
    const long l = std::stol(v, &pos);
    if (pos != v.size()) throw ConfigError("bad integer value: " + v);
    return l;
  } catch (const std::logic_error&) {
    throw ConfigError("bad integer value: " + v);
  }
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean value: " + v);
}

/// Key registry: section.key -> setter and echo getter. One table keeps the
/// parser and the echo in lockstep.
struct KeyDef {
  const char* section;
  const char* key;
  Setter set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<KeyDef>& key_defs() {
  auto dbl = [](auto member) {
    return std::make_pair(
        Setter([member](ExperimentConfig& c, const std::string& v) { member(c) = to_double(v); }),
        std::function<std::string(const ExperimentConfig&)>([member](const ExperimentConfig& c) {
          std::ostringstream os;
          os << member(const_cast<ExperimentConfig&>(c));
          return os.str();
        }));
  };
  auto lng = [](auto member) {
    return std::make_pair(
        Setter([member](ExperimentConfig& c, const std::string& v) { member(c) = to_long(v); }),
        std::function<std::string(const ExperimentConfig&)>([member](const ExperimentConfig& c) {
          return std::to_string(member(const_cast<ExperimentConfig&>(c)));
        }));
  };
  auto uns = [](auto member) {
    return std::make_pair(
        Setter([member](ExperimentConfig& c, const std::string& v) {
          const long l = to_long(v);
          if (l < 0) throw ConfigError("value must be non-negative");
          member(c) = static_cast<std::size_t>(l);
        }),
        std::function<std::string(const ExperimentConfig&)>([member](const ExperimentConfig& c) {
          return std::to_string(member(const_cast<ExperimentConfig&>(c)));
        }));
  };
  auto bl = [](auto member) {
    return std::make_pair(
        Setter([member](ExperimentConfig& c, const std::string& v) { member(c) = to_bool(v); }),
        std::function<std::string(const ExperimentConfig&)>([member](const ExperimentConfig& c) {
          return member(const_cast<ExperimentConfig&>(c)) ? "true" : "false";
        }));
  };

#define CGRL_KEY(sec, name, maker, expr)                                        \
  [&] {                                                                         \
    auto pair = maker([](ExperimentConfig& c) -> decltype(auto) { return (expr); }); \
    return KeyDef{sec, name, pair.first, pair.second};                          \
  }()

  static const std::vector<KeyDef> defs = [&] {
    std::vector<KeyDef> d;
    d.push_back(CGRL_KEY("scenario", "n_human_vehicles", uns, c.scenario.n_human_vehicles));
    d.push_back(CGRL_KEY("scenario", "road_half_length", dbl, c.scenario.road_half_length));
    d.push_back(CGRL_KEY("scenario", "lane_width", dbl, c.scenario.lane_width));
    d.push_back(CGRL_KEY("scenario", "sim_frequency", dbl, c.scenario.sim_frequency));
    d.push_back(CGRL_KEY("scenario", "policy_frequency", dbl, c.scenario.policy_frequency));
    d.push_back(CGRL_KEY("scenario", "horizon", lng, c.scenario.horizon));
    d.push_back(CGRL_KEY("scenario", "n_max", uns, c.scenario.n_max));
    d.push_back(CGRL_KEY("scenario", "ego_accel", dbl, c.scenario.ego_accel));
    d.push_back(CGRL_KEY("scenario", "ego_speed_cap", dbl, c.scenario.ego_speed_cap));
    d.push_back(CGRL_KEY("scenario", "ego_spawn_speed", dbl, c.scenario.ego_spawn_speed));
    d.push_back(CGRL_KEY("scenario", "hv_v0_min", dbl, c.scenario.hv_v0_min));
    d.push_back(CGRL_KEY("scenario", "hv_v0_max", dbl, c.scenario.hv_v0_max));
    d.push_back(CGRL_KEY("scenario", "conflict_horizon", dbl, c.scenario.conflict_horizon));
    d.push_back(CGRL_KEY("scenario", "idm_a_max", dbl, c.scenario.idm.a_max));
    d.push_back(CGRL_KEY("scenario", "idm_delta", dbl, c.scenario.idm.delta));
    d.push_back(CGRL_KEY("scenario", "idm_t_gap", dbl, c.scenario.idm.t_gap));
    d.push_back(CGRL_KEY("scenario", "idm_s0", dbl, c.scenario.idm.s0));
    d.push_back(CGRL_KEY("scenario", "idm_b", dbl, c.scenario.idm.b));
    d.push_back(CGRL_KEY("scenario", "reward_w_collision", dbl, c.scenario.reward_weights.collision));
    d.push_back(CGRL_KEY("scenario", "reward_w_high_speed", dbl, c.scenario.reward_weights.high_speed));
    d.push_back(CGRL_KEY("scenario", "reward_w_on_road", dbl, c.scenario.reward_weights.on_road));
    d.push_back(CGRL_KEY("scenario", "reward_w_task_complete", dbl, c.scenario.reward_weights.task_complete));
    d.push_back(CGRL_KEY("scenario", "speed_map_x0", dbl, c.scenario.speed_map.x0));
    d.push_back(CGRL_KEY("scenario", "speed_map_x1", dbl, c.scenario.speed_map.x1));
    d.push_back(CGRL_KEY("scenario", "speed_map_y0", dbl, c.scenario.speed_map.y0));
    d.push_back(CGRL_KEY("scenario", "speed_map_y1", dbl, c.scenario.speed_map.y1));
    d.push_back(CGRL_KEY("trainer", "gamma", dbl, c.trainer.gamma));
    d.push_back(CGRL_KEY("trainer", "lr", dbl, c.trainer.lr));
    d.push_back(CGRL_KEY("trainer", "batch_size", uns, c.trainer.batch_size));
    d.push_back(CGRL_KEY("trainer", "epsilon", dbl, c.trainer.epsilon));
    d.push_back(CGRL_KEY("trainer", "target_update", lng, c.trainer.target_update));
    d.push_back(CGRL_KEY("trainer", "episodes", lng, c.trainer.episodes));
    d.push_back(CGRL_KEY("trainer", "replay_capacity", uns, c.trainer.replay_capacity));
    d.push_back(CGRL_KEY("trainer", "grad_clip", dbl, c.trainer.grad_clip));
    d.push_back(CGRL_KEY("policy", "hidden_dim", uns, c.policy.hidden_dim));
    d.push_back(CGRL_KEY("policy", "gat_heads", uns, c.policy.gat_heads));
    d.push_back(CGRL_KEY("policy", "gcn2_alpha", dbl, c.policy.gcn2_alpha));
    d.push_back(CGRL_KEY("policy", "gcn2_lambda", dbl, c.policy.gcn2_lambda));
    d.push_back(CGRL_KEY("policy", "leaky_slope", dbl, c.policy.leaky_slope));
    d.push_back(CGRL_KEY("cdrl", "alpha", dbl, c.cdrl.alpha));
    d.push_back(CGRL_KEY("cdrl", "lambda1", dbl, c.cdrl.lambda1));
    d.push_back(CGRL_KEY("cdrl", "lambda2", dbl, c.cdrl.lambda2));
    d.push_back(CGRL_KEY("cdrl", "lr", dbl, c.cdrl.lr));
    d.push_back(CGRL_KEY("cdrl", "batch_size", uns, c.cdrl.batch_size));
    d.push_back(CGRL_KEY("cdrl", "grad_clip", dbl, c.cdrl.grad_clip));
    d.push_back(CGRL_KEY("cdrl", "warmup_episodes", lng, c.cdrl.warmup_episodes));
    d.push_back(CGRL_KEY("cdrl", "period", lng, c.cdrl.period));
    d.push_back(CGRL_KEY("cdrl", "vgae_hidden_dim", uns, c.cdrl.vgae.hidden_dim));
    d.push_back(CGRL_KEY("cdrl", "vgae_latent_dim", uns, c.cdrl.vgae.latent_dim));
    d.push_back(CGRL_KEY("harness", "checkpoint_every", lng, c.harness.checkpoint_every));
    d.push_back(CGRL_KEY("harness", "eval_episodes", lng, c.harness.eval_episodes));
    d.push_back(CGRL_KEY("harness", "record_trajectory", bl, c.harness.record_trajectory));
    return d;
  }();
#undef CGRL_KEY
  return defs;
}

}  // namespace detail

/// Parse the flat key-value config text (section headers, '#' comments).
/// Unknown sections or keys are errors. `[run]` keys (model/task/seed) are
/// accepted so checkpoint echoes parse back.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  long line_no = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) +
                                                ": malformed section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section == "run") {
      if (key == "model")
        cfg.model = value;
      else if (key == "task")
        cfg.task = value;
      else if (key == "seed")
        cfg.seed = std::stoull(value);
      else
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown run key " + key);
      continue;
    }
    bool found = false;
    for (const auto& def : detail::key_defs()) {
      if (section == def.section && key == def.key) {
        def.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key " + section +
                        "." + key);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

/// Canonical echo of every key (plus the run identity); itself a valid
/// config file and the exact text embedded into checkpoints and logs.
inline std::string echo_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[run]\n";
  os << "model = " << cfg.model << "\n";
  os << "task = " << cfg.task << "\n";
  os << "seed = " << cfg.seed << "\n";
  std::string section;
  for (const auto& def : detail::key_defs()) {
    if (section != def.section) {
      section = def.section;
      os << "[" << section << "]\n";
    }
    os << def.key << " = " << def.get(cfg) << "\n";
  }
  return os.str();
}

}  // namespace cgrl::harness
