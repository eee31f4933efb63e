#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cgrl/causal/cdrl.hpp"
#include "cgrl/causal/vgae.hpp"
#include "cgrl/harness/config.hpp"
#include "cgrl/harness/metrics.hpp"
#include "cgrl/harness/render.hpp"
#include "cgrl/obs/graph_obs.hpp"
#include "cgrl/rl/checkpoint.hpp"
#include "cgrl/rl/trainer.hpp"

namespace cgrl::harness {

namespace detail {

inline policy::PolicyInput make_policy_input(const obs::GraphObservation& o,
                                             const causal::CdrlTrainer* cdrl) {
  policy::PolicyInput input;
  input.features = o.features;
  input.mask = o.present_mask();
  input.adjacency = cdrl == nullptr
                        ? o.adjacency
                        : causal::gated_adjacency(
                              o.adjacency, cdrl->causal_adjacency_for(o.features, o.adjacency));
  return input;
}

inline TrajectoryFrame frame_from(const sim::World& world, int step, double reward) {
  TrajectoryFrame f;
  f.step = step;
  f.reward = reward;
  for (const auto& v : world.vehicles())
    f.vehicles.push_back(VehiclePose{v.id, v.present, v.x, v.y, v.heading, v.speed, v.is_ego});
  return f;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
}

}  // namespace detail

struct TrainingResult {
  std::vector<EpisodeLog> rows;
  std::string final_checkpoint;
};

/// Full training loop for one (model, task, seed) cell: per decision step
/// one RL gradient step once the buffer is warm; for CGRL one CDRL step per
/// `period` RL steps after the episode warmup, with the causal adjacency
/// refreshed from the live VGAE for every new observation.
inline TrainingResult run_training(ExperimentConfig cfg, const std::string& out_dir) {
  cfg.apply_model_flags();
  cfg.scenario.validate();
  cfg.trainer.validate();
  cfg.policy.validate();
  const bool use_cdrl = cfg.uses_cdrl();
  if (use_cdrl) cfg.cdrl.validate();

  std::filesystem::create_directories(out_dir);
  const std::string echo = echo_config(cfg);
  detail::write_text(std::filesystem::path(out_dir) / "config_used.txt", echo);

  rl::Trainer trainer(cfg.policy, cfg.trainer, cfg.seed);
  std::optional<causal::CdrlTrainer> cdrl;
  if (use_cdrl) cdrl.emplace(cfg.cdrl, cfg.seed);
  rl::ReplayBuffer buffer(cfg.trainer.replay_capacity);
  auto cdrl_sample_rng = make_rng(derive_seed(cfg.seed, "cdrl-sample"));

  auto save = [&](const std::string& name, std::uint64_t step) {
    ParameterSet merged = trainer.online();
    if (cdrl)
      for (const auto& [k, v] : cdrl->params()) merged.emplace(k, v);
    rl::save_checkpoint((std::filesystem::path(out_dir) / name).string(),
                        rl::Checkpoint{std::move(merged), step, echo});
  };
  save("checkpoint_init.bin", 0);

  std::vector<EpisodeLog> rows;
  std::vector<TrajectoryFrame> last_trajectory;
  const causal::CdrlTrainer* gate = nullptr;

  for (long episode = 0; episode < cfg.trainer.episodes; ++episode) {
    sim::World world(cfg.scenario, derive_seed(cfg.seed, "episode", episode));
    gate = cdrl ? &*cdrl : nullptr;
    obs::GraphObservation o = obs::observe(world);
    policy::PolicyInput input = detail::make_policy_input(o, gate);
    const bool record = cfg.harness.record_trajectory && episode == cfg.trainer.episodes - 1;
    if (record) last_trajectory.clear();

    double cumulative = 0.0;
    int steps = 0;
    Outcome outcome = Outcome::kTimeout;
    while (!world.terminal()) {
      const int action = trainer.act(input, cfg.trainer.epsilon);
      const sim::StepResult res = world.step(static_cast<sim::EgoAction>(action));
      obs::GraphObservation o2 = obs::observe(world);
      policy::PolicyInput input2 = detail::make_policy_input(o2, gate);

      rl::Transition tr;
      tr.state = input;
      tr.next_state = input2;
      tr.physical_adjacency = o.adjacency;
      tr.action = action;
      tr.reward = res.reward;
      tr.terminal = res.terminal;
      buffer.push(std::move(tr));

      cumulative += res.reward;
      ++steps;
      if (record) last_trajectory.push_back(detail::frame_from(world, steps, res.reward));

      const bool stepped = trainer.train_step(buffer).has_value();
      if (stepped && cdrl && episode >= cfg.cdrl.warmup_episodes &&
          trainer.steps() % cfg.cdrl.period == 0 && buffer.size() >= cfg.cdrl.batch_size) {
        const auto idx = buffer.sample_indices(cfg.cdrl.batch_size, cdrl_sample_rng);
        std::vector<causal::CdrlItem> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) {
          const rl::Transition& t = buffer[i];
          batch.push_back(causal::CdrlItem{
              t.state.features, t.physical_adjacency, t.state.mask,
              rl::greedy_action(policy::qvalues(t.state, trainer.online(), cfg.policy))});
        }
        cdrl->train_step(batch);
      }

      if (res.flags.collided)
        outcome = Outcome::kCollided;
      else if (res.flags.arrived)
        outcome = Outcome::kArrived;
      o = std::move(o2);
      input = std::move(input2);
    }
    rows.push_back(EpisodeLog{episode, cumulative, steps, outcome, world.mean_ego_speed()});

    if (cfg.harness.checkpoint_every > 0 && (episode + 1) % cfg.harness.checkpoint_every == 0 &&
        episode + 1 < cfg.trainer.episodes) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_ep%05ld.bin", episode + 1);
      save(name, static_cast<std::uint64_t>(trainer.steps()));
    }
  }

  detail::write_text(std::filesystem::path(out_dir) / "episodes.csv", episode_csv(rows));
  TrainingResult result;
  result.rows = std::move(rows);
  if (cfg.trainer.episodes > 0) {
    save("checkpoint_final.bin", static_cast<std::uint64_t>(trainer.steps()));
    result.final_checkpoint = (std::filesystem::path(out_dir) / "checkpoint_final.bin").string();
    if (cfg.harness.record_trajectory && !last_trajectory.empty())
      detail::write_text(std::filesystem::path(out_dir) / "trajectory_final.csv",
                         trajectory_csv(last_trajectory));
  }
  return result;
}

struct EvalResult {
  MetricsReport report;
  std::vector<EpisodeLog> rows;
  std::vector<TrajectoryFrame> first_episode;  // recorded when requested
};

/// Greedy evaluation of a checkpoint on a task: epsilon forced to zero, the
/// checkpoint left untouched.
inline EvalResult run_eval(const std::string& checkpoint_path, const std::string& task,
                           long episodes, std::uint64_t seed, bool record_first = false) {
  if (episodes <= 0) throw ConfigError("eval: episode count must be positive");
  const rl::Checkpoint ckpt = rl::load_checkpoint(checkpoint_path);
  ExperimentConfig cfg = parse_config_text(ckpt.config_echo);
  cfg.task = task;
  cfg.apply_model_flags();

  ParameterSet online, vgae;
  for (const auto& [name, tensor] : ckpt.params) {
    if (name.rfind("vgae/", 0) == 0)
      vgae.emplace(name, tensor);
    else
      online.emplace(name, tensor);
  }
  std::optional<causal::CdrlTrainer> cdrl;
  if (cfg.uses_cdrl()) {
    if (vgae.empty()) throw FormatError("eval: cgrl checkpoint is missing vgae parameters");
    cdrl.emplace(cfg.cdrl, cfg.seed);
    cdrl->set_params(std::move(vgae));  // evaluation uses the stored encoder verbatim
  }
  const causal::CdrlTrainer* gate = cdrl ? &*cdrl : nullptr;

  EvalResult result;
  for (long e = 0; e < episodes; ++e) {
    sim::World world(cfg.scenario, derive_seed(seed, "eval-episode", e));
    double cumulative = 0.0;
    int steps = 0;
    Outcome outcome = Outcome::kTimeout;
    const bool record = record_first && e == 0;
    while (!world.terminal()) {
      policy::PolicyInput input = detail::make_policy_input(obs::observe(world), gate);
      const int action = rl::greedy_action(policy::qvalues(input, online, cfg.policy));
      const sim::StepResult res = world.step(static_cast<sim::EgoAction>(action));
      cumulative += res.reward;
      ++steps;
      if (record) result.first_episode.push_back(detail::frame_from(world, steps, res.reward));
      if (res.flags.collided)
        outcome = Outcome::kCollided;
      else if (res.flags.arrived)
        outcome = Outcome::kArrived;
    }
    result.rows.push_back(EpisodeLog{e, cumulative, steps, outcome, world.mean_ego_speed()});
  }
  result.report = metrics_from_rows(result.rows);
  result.report.model = cfg.model;
  result.report.task = task;
  result.report.seed = seed;
  return result;
}

/// Uniform-random policy baseline over the same episode seeds (comparison
/// anchor for the learning smoke checks).
inline EvalResult run_random_policy(const ExperimentConfig& cfg0, long episodes,
                                    std::uint64_t seed) {
  if (episodes <= 0) throw ConfigError("eval: episode count must be positive");
  ExperimentConfig cfg = cfg0;
  cfg.apply_model_flags();
  auto rng = make_rng(derive_seed(seed, "random-policy"));
  std::uniform_int_distribution<int> act(0, 2);
  EvalResult result;
  for (long e = 0; e < episodes; ++e) {
    sim::World world(cfg.scenario, derive_seed(seed, "eval-episode", e));
    double cumulative = 0.0;
    int steps = 0;
    Outcome outcome = Outcome::kTimeout;
    while (!world.terminal()) {
      const sim::StepResult res = world.step(static_cast<sim::EgoAction>(act(rng)));
      cumulative += res.reward;
      ++steps;
      if (res.flags.collided)
        outcome = Outcome::kCollided;
      else if (res.flags.arrived)
        outcome = Outcome::kArrived;
    }
    result.rows.push_back(EpisodeLog{e, cumulative, steps, outcome, world.mean_ego_speed()});
  }
  result.report = metrics_from_rows(result.rows);
  result.report.model = "random";
  result.report.task = cfg.task;
  result.report.seed = seed;
  return result;
}

}  // namespace cgrl::harness
