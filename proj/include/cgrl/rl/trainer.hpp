#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "cgrl/core/autodiff.hpp"
#include "cgrl/core/rng.hpp"
#include "cgrl/policy/qnet.hpp"
#include "cgrl/rl/replay.hpp"

namespace cgrl::rl {

struct TrainerConfig {
  double gamma = 0.95;
  double lr = 1e-4;
  std::size_t batch_size = 64;      // M_mini
  double epsilon = 0.1;
  long target_update = 5000;        // hard copy period, gradient steps
  long episodes = 1000;
  std::size_t replay_capacity = 100000;  // M_replay
  double grad_clip = 10.0;          // global gradient norm bound

  void validate() const {
    if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("trainer: gamma must lie in [0,1)");
    if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("trainer: epsilon must lie in [0,1]");
    if (batch_size == 0 || target_update <= 0) throw ConfigError("trainer: bad sizes");
    if (lr < 0.0) throw ConfigError("trainer: negative learning rate");
  }
};

/// Greedy argmax with ties broken toward the lowest index.
inline int greedy_action(const Tensor& q) {
  int best = 0;
  for (std::size_t a = 1; a < q.size(); ++a)
    if (q[a] > q[best]) best = static_cast<int>(a);
  return best;
}

/// Epsilon-greedy selection over the Q row.
inline int select_action(const Tensor& q, double epsilon, std::mt19937_64& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("select_action: epsilon out of range");
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(q.size()) - 1);
      return pick(rng);
    }
  }
  return greedy_action(q);
}

/// TD target for one transition. Double path decouples selection (online)
/// from evaluation (target); the vanilla path maxes over the target net.
inline double td_target_value(double reward, bool terminal, const Tensor& q_online_next,
                              const Tensor& q_target_next, double gamma, bool use_double) {
  if (terminal) return reward;
  if (use_double) return reward + gamma * q_target_next[greedy_action(q_online_next)];
  double best = q_target_next[0];
  for (std::size_t a = 1; a < q_target_next.size(); ++a) best = std::max(best, q_target_next[a]);
  return reward + gamma * best;
}

/// Mean squared TD error over Q(s,a) picked at the taken actions; the
/// targets enter as constants (gradients blocked through the target network
/// and the action selection).
inline Var batch_loss(Tape& tape, const std::vector<Var>& q_taken,
                      const std::vector<double>& targets) {
  if (q_taken.empty() || q_taken.size() != targets.size())
    throw ShapeError("batch_loss: size mismatch");
  Var acc = tape.constant(Tensor::scalar(0.0));
  for (std::size_t b = 0; b < q_taken.size(); ++b) {
    Var resid = ad::shift(ad::scale(q_taken[b], -1.0), targets[b]);
    acc = ad::add(acc, ad::mul(resid, resid));
  }
  return ad::scale(acc, 1.0 / static_cast<double>(q_taken.size()));
}

/// Replay-buffer temporal-difference learner covering the DQN, Double DQN,
/// Dueling DQN, and D3QN variants through the policy architecture flags.
class Trainer {
 public:
  Trainer(const policy::PolicyConfig& pcfg, const TrainerConfig& tcfg, std::uint64_t seed)
      : pcfg_(pcfg), tcfg_(tcfg), rng_(make_rng(derive_seed(seed, "trainer"))) {
    tcfg_.validate();
    auto init_rng = make_rng(derive_seed(seed, "policy-init"));
    online_ = policy::init_policy_params(pcfg_, init_rng);
    target_ = online_;
  }

  const ParameterSet& online() const { return online_; }
  const ParameterSet& target() const { return target_; }
  ParameterSet& mutable_online() { return online_; }
  const policy::PolicyConfig& policy_config() const { return pcfg_; }
  const TrainerConfig& config() const { return tcfg_; }
  long steps() const { return steps_; }
  std::mt19937_64& rng() { return rng_; }

  int act(const policy::PolicyInput& input, double epsilon) {
    return select_action(policy::qvalues(input, online_, pcfg_), epsilon, rng_);
  }

  /// One gradient step over a sampled mini-batch. Returns the loss, or
  /// nothing when the buffer cannot fill a batch yet (skip signal).
  std::optional<double> train_step(const ReplayBuffer& buffer) {
    if (buffer.size() < tcfg_.batch_size) return std::nullopt;
    const auto idx = buffer.sample_indices(tcfg_.batch_size, rng_);

    // targets, no gradients kept
    std::vector<double> targets(idx.size());
    {
      Tape tape;
      ParamBinding online_bind(tape, online_);
      ParamBinding target_bind(tape, target_);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const Transition& tr = buffer[idx[b]];
        Tensor q_on, q_tg;
        if (!tr.terminal) {
          q_on = policy::forward_q(tape, tr.next_state, online_bind, pcfg_).val();
          q_tg = policy::forward_q(tape, tr.next_state, target_bind, pcfg_).val();
        }
        targets[b] = td_target_value(tr.reward, tr.terminal, q_on, q_tg, tcfg_.gamma,
                                     pcfg_.use_double);
      }
    }

    Tape tape;
    ParamBinding bind(tape, online_);
    std::vector<Var> q_taken;
    q_taken.reserve(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Transition& tr = buffer[idx[b]];
      Var q = policy::forward_q(tape, tr.state, bind, pcfg_);
      q_taken.push_back(ad::at_index(q, static_cast<std::size_t>(tr.action)));
    }
    Var loss = batch_loss(tape, q_taken, targets);
    const double loss_value = loss.val().value();
    if (!std::isfinite(loss_value)) throw NumericError("trainer: non-finite loss");

    ParameterSet grads = grad(loss, bind);
    clip_global_norm(grads, tcfg_.grad_clip);
    for (auto& [name, g] : grads) {
      Tensor& w = online_.at(name);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= tcfg_.lr * g[i];
    }

    ++steps_;
    if (steps_ % tcfg_.target_update == 0) target_ = online_;
    return loss_value;
  }

  static void clip_global_norm(ParameterSet& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
      for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
  }

 private:
  policy::PolicyConfig pcfg_;
  TrainerConfig tcfg_;
  ParameterSet online_;
  ParameterSet target_;
  std::mt19937_64 rng_;
  long steps_ = 0;
};

}  // namespace cgrl::rl
