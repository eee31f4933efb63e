#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "cgrl/policy/layers.hpp"
#include "cgrl/policy/qnet.hpp"
#include "fd_check.hpp"

using namespace cgrl;
using namespace cgrl::policy;
using cgrl_test::fd_check;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t = Tensor::uninit(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

Tensor random_adjacency(std::mt19937_64& rng, std::size_t n, double density = 0.5) {
  std::bernoulli_distribution edge(density);
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
      }
  return a;
}

PolicyInput random_input(std::mt19937_64& rng, std::size_t n, std::size_t present) {
  PolicyInput in;
  in.features = Tensor({n, obs::kFeatureDim});
  for (std::size_t i = 0; i < present; ++i) {
    in.features(i, 0) = 1.0;
    for (std::size_t j = 1; j < obs::kFeatureDim; ++j)
      in.features(i, j) = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  }
  Tensor full = random_adjacency(rng, n);
  in.adjacency = Tensor({n, n});
  for (std::size_t i = 0; i < present; ++i)
    for (std::size_t j = 0; j < present; ++j)
      if (i != j) in.adjacency(i, j) = full(i, j);
  in.mask.assign(n, 0);
  for (std::size_t i = 0; i < present; ++i) in.mask[i] = 1;
  return in;
}

PolicyConfig small_config() {
  PolicyConfig cfg;
  cfg.hidden_dim = 8;
  cfg.gat_heads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("gcn2_layer degenerate parameterizations") {
  std::mt19937_64 rng(3);
  const std::size_t n = 4, d = 5;
  Tensor x = random_tensor(rng, {n, d});
  Tensor x0 = random_tensor(rng, {n, d});
  Tensor a = obs::normalize_adjacency(random_adjacency(rng, n));

  {  // alpha = 0, W = I: out = A_norm x
    Tape tape;
    Var out = ad::gcn2_layer(tape.constant(x), tape.constant(x0),
                             tape.constant(Tensor::identity(d)), a, 0.0, 0.37);
    Tensor expect = Tensor::uninit({n, d});
    kernels::mm_nn(a.data(), x.data(), expect.data(), n, n, d);
    for (std::size_t i = 0; i < n * d; ++i)
      CHECK(out.val()[i] == Catch::Approx(expect[i]).margin(1e-12));
  }
  {  // alpha = 1, beta = 0: out = x0
    Tape tape;
    Var out = ad::gcn2_layer(tape.constant(x), tape.constant(x0),
                             tape.constant(random_tensor(rng, {d, d})), a, 1.0, 0.0);
    for (std::size_t i = 0; i < n * d; ++i) CHECK(out.val()[i] == Catch::Approx(x0[i]));
  }
}

TEST_CASE("gcn2_layer matches direct formula substitution") {
  std::mt19937_64 rng(7);
  const std::size_t n = 4, d = 3;
  Tensor x = random_tensor(rng, {n, d});
  Tensor x0 = random_tensor(rng, {n, d});
  Tensor w = random_tensor(rng, {d, d});
  Tensor a = obs::normalize_adjacency(random_adjacency(rng, n));
  const double alpha = 0.1, beta = ad::gcn2_beta(1.0, 1);

  Tape tape;
  Tensor got =
      ad::gcn2_layer(tape.constant(x), tape.constant(x0), tape.constant(w), a, alpha, beta).val();

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        double h_ik = 0.0;
        for (std::size_t m = 0; m < n; ++m) h_ik += a(i, m) * x(m, k);
        h_ik = (1.0 - alpha) * h_ik + alpha * x0(i, k);
        acc += h_ik * (beta * w(k, j) + (k == j ? 1.0 - beta : 0.0));
      }
      CHECK(got(i, j) == Catch::Approx(acc).margin(1e-12));
    }
}

TEST_CASE("gcn2_beta follows log(lambda/l + 1)") {
  CHECK(ad::gcn2_beta(1.0, 1) == Catch::Approx(std::log(2.0)));
  CHECK(ad::gcn2_beta(1.0, 2) == Catch::Approx(std::log(1.5)));
  CHECK(ad::gcn2_beta(0.0, 3) == 0.0);
}

TEST_CASE("gatv2_scores singleton, symmetry, and softmax oracle") {
  std::mt19937_64 rng(11);
  const std::size_t d = 4, p = 3;
  Tensor xi = random_tensor(rng, {d});
  Tensor w = random_tensor(rng, {2 * d, p});
  Tensor attn = random_tensor(rng, {p});

  auto single = gatv2_scores(xi, {xi}, w, attn, 0.2);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == 1.0);

  Tensor nb = random_tensor(rng, {d});
  auto twin = gatv2_scores(xi, {nb, nb}, w, attn, 0.2);
  CHECK(twin[0] == Catch::Approx(0.5));
  CHECK(twin[1] == Catch::Approx(0.5));

  std::vector<Tensor> neighbors{random_tensor(rng, {d}), random_tensor(rng, {d}),
                                random_tensor(rng, {d})};
  auto got = gatv2_scores(xi, neighbors, w, attn, 0.2);
  std::vector<double> raw(neighbors.size());
  for (std::size_t k = 0; k < neighbors.size(); ++k) {
    double e = 0.0;
    for (std::size_t c = 0; c < p; ++c) {
      double z = 0.0;
      for (std::size_t r = 0; r < d; ++r)
        z += xi[r] * w(r, c) + neighbors[k][r] * w(d + r, c);
      e += attn[c] * (z > 0 ? z : 0.2 * z);
    }
    raw[k] = e;
  }
  double zsum = 0.0;
  for (double e : raw) zsum += std::exp(e);
  double total = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(got[k] == Catch::Approx(std::exp(raw[k]) / zsum));
    total += got[k];
  }
  CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(gatv2_scores(xi, {}, w, attn, 0.2), DomainError);
}

TEST_CASE("gatv2_head isolated node reduces to activated self transform") {
  std::mt19937_64 rng(13);
  const std::size_t n = 3, d = 4, p = 2;
  Tensor x = random_tensor(rng, {n, d});
  Tensor wl = random_tensor(rng, {d, p});
  Tensor wr = random_tensor(rng, {d, p});
  Tensor attn = random_tensor(rng, {p});
  Tensor adj({n, n});
  for (std::size_t i = 0; i < n; ++i) adj(i, i) = 1.0;  // self-loops only

  Tape tape;
  Tensor out = ad::gatv2_head(tape.constant(x), tape.constant(wl), tape.constant(wr),
                              tape.constant(attn), adj, 0.2, true)
                   .val();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < p; ++c) {
      double z = 0.0;
      for (std::size_t r = 0; r < d; ++r) z += x(i, r) * wr(r, c);
      const double expect = z > 0 ? z : 0.2 * z;
      CHECK(out(i, c) == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("multi-head concatenation widens the output to M * d'") {
  std::mt19937_64 rng(17);
  PolicyConfig cfg;  // hidden 64, 4 heads -> per-head width 16
  auto rng2 = make_rng(5);
  ParameterSet ps = init_policy_params(cfg, rng2);
  PolicyInput in = random_input(rng, 6, 5);

  Tape tape;
  ParamBinding bind(tape, ps);
  Tensor adj_w = in.adjacency;
  for (std::size_t i = 0; i < 6; ++i) adj_w(i, i) = 1.0;
  Var x0 = ad::matmul(tape.constant(in.features), bind["policy/embed_w"]);
  std::vector<Var> heads;
  for (std::size_t m = 0; m < cfg.gat_heads; ++m) {
    const std::string base = "policy/gat1_h" + std::to_string(m) + "_";
    heads.push_back(ad::gatv2_head(x0, bind[base + "wl"], bind[base + "wr"], bind[base + "a"],
                                   adj_w, cfg.leaky_slope, true));
  }
  Var cat = heads[0];
  for (std::size_t m = 1; m < heads.size(); ++m) cat = ad::concat_cols(cat, heads[m]);
  CHECK(cat.val().rows() == 6);
  CHECK(cat.val().cols() == 64);
}

TEST_CASE("mean_pool averages present rows only") {
  Tape tape;
  Tensor x = Tensor::matrix({{1.0, 1.0}, {3.0, 3.0}, {0.0, 0.0}});
  Var pooled = mean_pool(tape.constant(x), {1, 1, 0});
  CHECK(pooled.val()[0] == 2.0);
  CHECK(pooled.val()[1] == 2.0);

  Var single = mean_pool(tape.constant(x), {0, 1, 0});
  CHECK(single.val()[0] == 3.0);

  // appending absent zero rows leaves the pool unchanged
  Tensor padded = Tensor({5, 2});
  padded(0, 0) = 1.0;
  padded(0, 1) = 1.0;
  padded(1, 0) = 3.0;
  padded(1, 1) = 3.0;
  Var padpool = mean_pool(tape.constant(padded), {1, 1, 0, 0, 0});
  CHECK(padpool.val()[0] == pooled.val()[0]);
  CHECK(padpool.val()[1] == pooled.val()[1]);
}

TEST_CASE("dueling head: constant advantages collapse to the value") {
  Tape tape;
  Var v = tape.constant(Tensor::scalar(0.75));
  Var adv = tape.constant(Tensor::matrix({{0.5, 0.5, 0.5}}));
  Tensor q = dueling_q(v, adv).val();
  for (std::size_t i = 0; i < 3; ++i) CHECK(q[i] == 0.75);
}

TEST_CASE("dueling head hand case and shift invariance") {
  Tape tape;
  Var v = tape.constant(Tensor::scalar(1.0));
  Var adv = tape.constant(Tensor::matrix({{1.0, 2.0, 3.0}}));
  Tensor q = dueling_q(v, adv).val();
  CHECK(q[0] == 0.0);
  CHECK(q[1] == 1.0);
  CHECK(q[2] == 2.0);

  // dyadic shift keeps the result bitwise identical
  for (double k : {0.5, -2.25, 8.0}) {
    Var shifted = tape.constant(Tensor::matrix({{1.0 + k, 2.0 + k, 3.0 + k}}));
    Tensor qs = dueling_q(v, shifted).val();
    for (std::size_t i = 0; i < 3; ++i) CHECK(qs[i] == q[i]);
  }
}

TEST_CASE("forward produces finite Q for the all-zero observation") {
  PolicyConfig cfg = small_config();
  auto rng = make_rng(21);
  ParameterSet ps = init_policy_params(cfg, rng);
  PolicyInput in;
  in.features = Tensor({5, obs::kFeatureDim});
  in.adjacency = Tensor({5, 5});
  in.mask.assign(5, 0);
  Tensor q = qvalues(in, ps, cfg);
  REQUIRE(q.size() == 3);
  CHECK(q.all_finite());
}

TEST_CASE("architecture flags select the baseline paths") {
  std::mt19937_64 rng(23);
  PolicyInput in = random_input(rng, 6, 4);
  for (bool use_gcn : {true, false})
    for (bool use_gat : {true, false}) {
      if (!use_gcn && !use_gat) continue;
      for (bool use_dueling : {true, false}) {
        PolicyConfig cfg = small_config();
        cfg.use_gcn = use_gcn;
        cfg.use_gat = use_gat;
        cfg.use_dueling = use_dueling;
        auto prng = make_rng(31);
        ParameterSet ps = init_policy_params(cfg, prng);
        CHECK(ps.count("policy/gcn1_w") == (use_gcn ? 1 : 0));
        CHECK(ps.count("policy/gat1_h0_wl") == (use_gat ? 1 : 0));
        CHECK(ps.count("policy/val_w") == (use_dueling ? 1 : 0));
        CHECK(ps.count("policy/q_w") == (use_dueling ? 0 : 1));
        Tensor q = qvalues(in, ps, cfg);
        REQUIRE(q.size() == 3);
        CHECK(q.all_finite());
      }
    }
  PolicyConfig bad = small_config();
  bad.use_gcn = false;
  bad.use_gat = false;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("Q is invariant under permutation of non-ego nodes") {
  std::mt19937_64 rng(27);
  PolicyConfig cfg;  // full-size network
  auto prng = make_rng(41);
  ParameterSet ps = init_policy_params(cfg, prng);

  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 9;
    const std::size_t present = 2 + trial % 7;
    PolicyInput in = random_input(rng, n, present);
    Tensor q0 = qvalues(in, ps, cfg);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin() + 1, perm.end(), rng);  // ego row fixed

    PolicyInput pin;
    pin.features = Tensor({n, obs::kFeatureDim});
    pin.adjacency = Tensor({n, n});
    pin.mask.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      pin.mask[i] = in.mask[perm[i]];
      for (std::size_t j = 0; j < obs::kFeatureDim; ++j)
        pin.features(i, j) = in.features(perm[i], j);
      for (std::size_t j = 0; j < n; ++j)
        pin.adjacency(i, j) = in.adjacency(perm[i], perm[j]);
    }
    Tensor q1 = qvalues(pin, ps, cfg);
    for (std::size_t a = 0; a < 3; ++a) CHECK(std::fabs(q0[a] - q1[a]) < 1e-9);
  }
}

TEST_CASE("layer gradients match finite differences") {
  std::mt19937_64 rng(33);
  const std::size_t n = 4, d = 3, p = 2;
  Tensor a_norm = obs::normalize_adjacency(random_adjacency(rng, n, 0.7));
  Tensor adj_w = random_adjacency(rng, n, 0.7);
  for (std::size_t i = 0; i < n; ++i) adj_w(i, i) = 1.0;

  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor(rng, {n, d});
    Tensor x0 = random_tensor(rng, {n, d});
    Tensor w = random_tensor(rng, {d, d});
    auto rep = fd_check(
        [&](Tape&, const std::vector<Var>& v) {
          Var out = ad::gcn2_layer(v[0], v[1], v[2], a_norm, 0.1, ad::gcn2_beta(1.0, 1));
          return ad::sum(ad::mul(out, out));
        },
        {x, x0, w});
    CHECK(rep.ok);

    Tensor wl = random_tensor(rng, {d, p});
    Tensor wr = random_tensor(rng, {d, p});
    Tensor attn = random_tensor(rng, {p});
    for (bool act : {true, false}) {
      rep = fd_check(
          [&](Tape&, const std::vector<Var>& v) {
            Var out = ad::gatv2_head(v[0], v[1], v[2], v[3], adj_w, 0.2, act);
            return ad::sum(ad::mul(out, out));
          },
          {x, wl, wr, attn});
      CHECK(rep.ok);
    }

    Tensor vec = random_tensor(rng, {d});
    rep = fd_check(
        [&](Tape&, const std::vector<Var>& v) {
          Var b = ad::broadcast_rows(v[0], n);
          return ad::sum(ad::mul(b, ad::mul(b, b)));
        },
        {vec});
    CHECK(rep.ok);
  }
}

TEST_CASE("full forward gradient matches finite differences") {
  std::mt19937_64 rng(35);
  PolicyConfig cfg = small_config();
  auto prng = make_rng(51);
  ParameterSet ps = init_policy_params(cfg, prng);
  PolicyInput in = random_input(rng, 5, 4);
  const Tensor probe = random_tensor(rng, {1, 3});

  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (const auto& [k, t] : ps) {
    names.push_back(k);
    values.push_back(t);
  }
  auto rep = fd_check(
      [&](Tape& tape, const std::vector<Var>& vars) {
        ParamBinding binding(tape);
        for (std::size_t i = 0; i < names.size(); ++i) binding.bind(names[i], vars[i]);
        Var q = forward_q(tape, in, binding, cfg);
        return ad::sum(ad::mul(q, tape.leaf(probe, false)));
      },
      values, 1e-4, 1e-5, 1e-7);
  CHECK(rep.ok);
}
