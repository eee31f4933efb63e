#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

#include "cgrl/rl/checkpoint.hpp"
#include "cgrl/rl/replay.hpp"
#include "cgrl/rl/trainer.hpp"
#include "fd_check.hpp"

using namespace cgrl;
using namespace cgrl::rl;
using cgrl_test::fd_check;

namespace {

policy::PolicyConfig tiny_policy() {
  policy::PolicyConfig cfg;
  cfg.hidden_dim = 8;
  cfg.gat_heads = 2;
  return cfg;
}

policy::PolicyInput random_input(std::mt19937_64& rng, std::size_t n = 3) {
  policy::PolicyInput in;
  in.features = Tensor({n, obs::kFeatureDim});
  in.adjacency = Tensor({n, n});
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  std::bernoulli_distribution edge(0.6);
  for (std::size_t i = 0; i < n; ++i) {
    in.features(i, 0) = 1.0;
    for (std::size_t j = 1; j < obs::kFeatureDim; ++j) in.features(i, j) = dist(rng);
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) {
        in.adjacency(i, j) = 1.0;
        in.adjacency(j, i) = 1.0;
      }
  }
  in.mask.assign(n, 1);
  return in;
}

Transition random_transition(std::mt19937_64& rng, bool terminal = false) {
  Transition t;
  t.state = random_input(rng);
  t.next_state = random_input(rng);
  t.action = static_cast<int>(rng() % 3);
  t.reward = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
  t.terminal = terminal;
  return t;
}

bool params_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || !t.same_shape(it->second)) return false;
    if (std::memcmp(t.data(), it->second.data(), t.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("select_action greedy argmax with lowest-index ties") {
  std::mt19937_64 rng(1);
  CHECK(select_action(Tensor::vector({0.1, 0.9, 0.3}), 0.0, rng) == 1);
  CHECK(select_action(Tensor::vector({0.5, 0.5, 0.1}), 0.0, rng) == 0);
  CHECK(select_action(Tensor::vector({-1.0, -1.0, -1.0}), 0.0, rng) == 0);
}

TEST_CASE("select_action explores uniformly at epsilon one") {
  std::mt19937_64 rng(20240);
  const int n = 30000;
  int counts[3] = {0, 0, 0};
  const Tensor q = Tensor::vector({5.0, 0.0, -5.0});
  for (int i = 0; i < n; ++i) ++counts[select_action(q, 1.0, rng)];
  for (int a = 0; a < 3; ++a) {
    const double freq = static_cast<double>(counts[a]) / n;
    CHECK(std::fabs(freq - 1.0 / 3.0) < 0.02 / 3.0);
  }
}

TEST_CASE("td target reproduces the hand-computed double and vanilla values") {
  const Tensor q_online = Tensor::vector({0.2, 0.7, 0.1});
  const Tensor q_target = Tensor::vector({0.5, 0.3, 0.9});
  const double y_double = td_target_value(1.0, false, q_online, q_target, 0.95, true);
  const double y_vanilla = td_target_value(1.0, false, q_online, q_target, 0.95, false);
  CHECK(y_double == 1.0 + 0.95 * 0.3);
  CHECK(y_vanilla == 1.0 + 0.95 * 0.9);
  CHECK(std::fabs(y_double - 1.285) < 1e-12);
  CHECK(std::fabs(y_vanilla - 1.855) < 1e-12);
}

TEST_CASE("td target degenerate paths") {
  const Tensor q = Tensor::vector({0.4, 0.2, 0.1});
  CHECK(td_target_value(-2.0, true, q, q, 0.95, true) == -2.0);
  CHECK(td_target_value(0.7, false, q, q, 0.0, true) == 0.7);
  CHECK(td_target_value(0.7, false, q, q, 0.0, false) == 0.7);
}

TEST_CASE("double targets differ from vanilla when the argmaxes disagree") {
  std::mt19937_64 rng(5);
  int disagreements = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor q_on = Tensor::vector({dist(rng), dist(rng), dist(rng)});
    Tensor q_tg = Tensor::vector({dist(rng), dist(rng), dist(rng)});
    const double yd = td_target_value(0.0, false, q_on, q_tg, 0.95, true);
    const double yv = td_target_value(0.0, false, q_on, q_tg, 0.95, false);
    if (greedy_action(q_on) != greedy_action(q_tg)) {
      ++disagreements;
      CHECK(yd < yv);  // selection by the online net cannot beat the target max
    } else {
      CHECK(yd == yv);
    }
  }
  CHECK(disagreements > 5);
}

TEST_CASE("batch loss zero residual and hand arithmetic") {
  Tape tape;
  std::vector<Var> q{tape.constant(Tensor::scalar(1.5)), tape.constant(Tensor::scalar(-0.5))};
  CHECK(batch_loss(tape, q, {1.5, -0.5}).val().value() == 0.0);
  // residuals (1, -1) -> mean square 1
  CHECK(batch_loss(tape, q, {2.5, -1.5}).val().value() == Catch::Approx(1.0));
}

TEST_CASE("batch loss gradient matches finite differences through the network") {
  std::mt19937_64 rng(7);
  policy::PolicyConfig pcfg = tiny_policy();
  auto prng = make_rng(3);
  ParameterSet ps = policy::init_policy_params(pcfg, prng);
  std::vector<Transition> batch{random_transition(rng), random_transition(rng)};
  std::vector<double> targets{0.3, -1.1};

  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (const auto& [k, t] : ps) {
    names.push_back(k);
    values.push_back(t);
  }
  auto rep = fd_check(
      [&](Tape& tape, const std::vector<Var>& vars) {
        ParamBinding bind(tape);
        for (std::size_t i = 0; i < names.size(); ++i) bind.bind(names[i], vars[i]);
        std::vector<Var> q_taken;
        for (std::size_t b = 0; b < batch.size(); ++b)
          q_taken.push_back(ad::at_index(policy::forward_q(tape, batch[b].state, bind, pcfg),
                                         static_cast<std::size_t>(batch[b].action)));
        return batch_loss(tape, q_taken, targets);
      },
      values, 1e-4, 1e-5, 1e-7);
  CHECK(rep.ok);
}

TEST_CASE("replay buffer evicts strictly FIFO and never exceeds capacity") {
  ReplayBuffer buf(4);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 7; ++k) {
    Transition t = random_transition(rng);
    t.reward = static_cast<double>(k);
    buf.push(std::move(t));
    CHECK(buf.size() <= 4);
  }
  // contents are the last four pushes, oldest evicted first
  std::vector<double> rewards;
  for (std::size_t i = 0; i < buf.size(); ++i) rewards.push_back(buf[i].reward);
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{3.0, 4.0, 5.0, 6.0});
}

TEST_CASE("replay sampling is uniform without replacement within a batch") {
  ReplayBuffer buf(16);
  std::mt19937_64 rng(11);
  for (int k = 0; k < 10; ++k) buf.push(random_transition(rng));
  auto idx = buf.sample_indices(8, rng);
  std::sort(idx.begin(), idx.end());
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
  CHECK_THROWS_AS(buf.sample_indices(11, rng), StateError);
}

TEST_CASE("train_step skips on an underfilled buffer") {
  TrainerConfig tcfg;
  tcfg.batch_size = 8;
  Trainer trainer(tiny_policy(), tcfg, 1);
  ReplayBuffer buf(64);
  std::mt19937_64 rng(13);
  for (int k = 0; k < 7; ++k) buf.push(random_transition(rng));
  CHECK_FALSE(trainer.train_step(buf).has_value());
  CHECK(trainer.steps() == 0);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  TrainerConfig tcfg;
  tcfg.batch_size = 4;
  tcfg.lr = 0.0;
  Trainer trainer(tiny_policy(), tcfg, 2);
  ReplayBuffer buf(32);
  std::mt19937_64 rng(15);
  for (int k = 0; k < 8; ++k) buf.push(random_transition(rng));
  const ParameterSet before = trainer.online();
  REQUIRE(trainer.train_step(buf).has_value());
  CHECK(params_equal(before, trainer.online()));
}

TEST_CASE("repeated single transition is overfit to small residual") {
  TrainerConfig tcfg;
  tcfg.batch_size = 4;
  tcfg.lr = 1e-2;
  tcfg.target_update = 100000;
  Trainer trainer(tiny_policy(), tcfg, 3);
  ReplayBuffer buf(8);
  std::mt19937_64 rng(17);
  Transition t = random_transition(rng, /*terminal=*/true);
  t.reward = 1.5;
  for (int k = 0; k < 4; ++k) buf.push(t);
  for (int step = 0; step < 500; ++step) trainer.train_step(buf);
  const Tensor q = policy::qvalues(t.state, trainer.online(), trainer.policy_config());
  CHECK(std::fabs(q[t.action] - 1.5) < 1e-3);
}

TEST_CASE("target network hard-copies bitwise at the update period") {
  TrainerConfig tcfg;
  tcfg.batch_size = 2;
  tcfg.lr = 1e-3;
  tcfg.target_update = 5000;
  Trainer trainer(tiny_policy(), tcfg, 4);
  ReplayBuffer buf(8);
  std::mt19937_64 rng(19);
  for (int k = 0; k < 2; ++k) buf.push(random_transition(rng, true));
  for (int step = 0; step < 4999; ++step) trainer.train_step(buf);
  CHECK_FALSE(params_equal(trainer.online(), trainer.target()));
  trainer.train_step(buf);
  CHECK(trainer.steps() == 5000);
  CHECK(params_equal(trainer.online(), trainer.target()));
}

TEST_CASE("training is reproducible for a fixed seed") {
  auto run = [] {
    TrainerConfig tcfg;
    tcfg.batch_size = 4;
    tcfg.lr = 1e-3;
    Trainer trainer(tiny_policy(), tcfg, 21);
    ReplayBuffer buf(32);
    std::mt19937_64 rng(23);
    for (int k = 0; k < 12; ++k) buf.push(random_transition(rng));
    std::vector<double> losses;
    for (int step = 0; step < 25; ++step) losses.push_back(*trainer.train_step(buf));
    return losses;
  };
  auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("parameter updates respect the global gradient norm clip") {
  TrainerConfig tcfg;
  tcfg.batch_size = 2;
  tcfg.lr = 0.5;
  tcfg.grad_clip = 10.0;
  Trainer trainer(tiny_policy(), tcfg, 5);
  ReplayBuffer buf(8);
  std::mt19937_64 rng(25);
  // absurd targets force large raw gradients
  Transition t = random_transition(rng, true);
  t.reward = 2.0;
  buf.push(t);
  Transition t2 = random_transition(rng, true);
  t2.reward = -2.0;
  buf.push(t2);
  ParameterSet before = trainer.online();
  // scale one weight up so the raw gradient norm exceeds the clip
  for (auto& [name, w] : trainer.mutable_online())
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= 50.0;
  before = trainer.online();
  trainer.train_step(buf);
  double sq = 0.0;
  for (const auto& [name, w] : trainer.online()) {
    const Tensor& prev = before.at(name);
    for (std::size_t i = 0; i < w.size(); ++i) sq += (w[i] - prev[i]) * (w[i] - prev[i]);
  }
  CHECK(std::sqrt(sq) <= tcfg.lr * tcfg.grad_clip + 1e-9);
}

TEST_CASE("q values stay bounded on a random-reward smoke run") {
  TrainerConfig tcfg;
  tcfg.batch_size = 8;
  tcfg.lr = 1e-3;
  Trainer trainer(tiny_policy(), tcfg, 6);
  ReplayBuffer buf(128);
  std::mt19937_64 rng(27);
  for (int k = 0; k < 32; ++k) buf.push(random_transition(rng));
  double worst = 0.0;
  for (int step = 0; step < 200; ++step) {
    trainer.train_step(buf);
    if (step % 20 == 0) {
      const Tensor q = policy::qvalues(buf[0].state, trainer.online(), trainer.policy_config());
      for (std::size_t a = 0; a < 3; ++a) worst = std::max(worst, std::fabs(q[a]));
    }
  }
  CHECK(worst <= 45.0);  // 2 / (1 - 0.95) plus margin
}

TEST_CASE("checkpoint round-trips parameters, step, and config echo") {
  auto prng = make_rng(29);
  ParameterSet ps = policy::init_policy_params(tiny_policy(), prng);
  Checkpoint ckpt{ps, 1234, "key = value\nother = 7\n"};
  const std::string path = (std::filesystem::temp_directory_path() / "cgrl_ckpt_test.bin").string();
  save_checkpoint(path, ckpt);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.step == 1234);
  CHECK(back.config_echo == ckpt.config_echo);
  CHECK(params_equal(back.params, ps));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects bad magic and version") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string bad = (dir / "cgrl_bad_ckpt.bin").string();
  {
    std::ofstream os(bad, std::ios::binary);
    os.write("NOPE", 4);
    std::uint32_t v = 1;
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  {
    std::ofstream os(bad, std::ios::binary);
    os.write(kCheckpointMagic, 4);
    std::uint32_t v = 99;
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  std::filesystem::remove(bad);
}
