#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cgrl/core/autodiff.hpp"
#include "cgrl/core/rng.hpp"
#include "cgrl/obs/graph_obs.hpp"
#include "cgrl/policy/layers.hpp"

namespace cgrl::policy {

struct PolicyConfig {
  std::size_t hidden_dim = 64;
  std::size_t gat_heads = 4;       // M
  double gcn2_alpha = 0.1;         // initial-residual fraction
  double gcn2_lambda = 1.0;        // identity-mapping strength
  double leaky_slope = 0.2;
  std::size_t n_actions = 3;
  bool use_gcn = true;
  bool use_gat = true;
  bool use_dueling = true;
  bool use_double = true;

  void validate() const {
    if (!use_gcn && !use_gat) throw ConfigError("policy: need at least one of gcn/gat");
    if (n_actions != 3) throw ConfigError("policy: action space is fixed at 3");
    if (use_gat && hidden_dim % gat_heads != 0)
      throw ConfigError("policy: hidden_dim must divide evenly across heads");
  }
};

/// What the Q-network consumes: padded features, (possibly causally gated)
/// adjacency weights, and the presence mask.
struct PolicyInput {
  Tensor features;    // n_max x 7
  Tensor adjacency;   // n_max x n_max, weights in [0, 1]
  std::vector<std::uint8_t> mask;

  static PolicyInput from(const obs::GraphObservation& o) {
    return PolicyInput{o.features, o.adjacency, o.present_mask()};
  }
};

namespace detail {

inline void init_dense(ParameterSet& ps, std::mt19937_64& rng, const std::string& name,
                       std::size_t fan_in, std::size_t fan_out,
                       std::vector<std::size_t> shape) {
  ps.emplace(name, glorot_uniform(rng, fan_in, fan_out, std::move(shape)));
}

}  // namespace detail

/// Fresh Glorot-initialized parameters for the configured architecture.
/// Creation order is fixed so a seed pins every draw.
inline ParameterSet init_policy_params(const PolicyConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t h = cfg.hidden_dim;
  const std::size_t p = cfg.use_gat ? h / cfg.gat_heads : 0;
  ParameterSet ps;
  detail::init_dense(ps, rng, "policy/embed_w", obs::kFeatureDim, h, {obs::kFeatureDim, h});
  if (cfg.use_gcn) {
    detail::init_dense(ps, rng, "policy/gcn1_w", h, h, {h, h});
    detail::init_dense(ps, rng, "policy/gcn2_w", h, h, {h, h});
    Tensor gamma({h});
    for (std::size_t i = 0; i < h; ++i) gamma[i] = 1.0;
    ps.emplace("policy/ln1_gamma", gamma);
    ps.emplace("policy/ln1_beta", Tensor({h}));
  }
  if (cfg.use_gat) {
    for (int layer = 1; layer <= 2; ++layer)
      for (std::size_t m = 0; m < cfg.gat_heads; ++m) {
        const std::string base =
            "policy/gat" + std::to_string(layer) + "_h" + std::to_string(m) + "_";
        detail::init_dense(ps, rng, base + "wl", h, p, {h, p});
        detail::init_dense(ps, rng, base + "wr", h, p, {h, p});
        detail::init_dense(ps, rng, base + "a", p, 1, {p});
      }
    Tensor gamma({h});
    for (std::size_t i = 0; i < h; ++i) gamma[i] = 1.0;
    ps.emplace("policy/ln2_gamma", gamma);
    ps.emplace("policy/ln2_beta", Tensor({h}));
  }
  detail::init_dense(ps, rng, "policy/fc1_w", h, h, {h, h});
  ps.emplace("policy/fc1_b", Tensor({h}));
  detail::init_dense(ps, rng, "policy/fc2_w", h, h, {h, h});
  ps.emplace("policy/fc2_b", Tensor({h}));
  if (cfg.use_dueling) {
    detail::init_dense(ps, rng, "policy/val_w", h, 1, {h, 1});
    ps.emplace("policy/val_b", Tensor({1}));
    detail::init_dense(ps, rng, "policy/adv_w", h, cfg.n_actions, {h, cfg.n_actions});
    ps.emplace("policy/adv_b", Tensor({cfg.n_actions}));
  } else {
    detail::init_dense(ps, rng, "policy/q_w", h, cfg.n_actions, {h, cfg.n_actions});
    ps.emplace("policy/q_b", Tensor({cfg.n_actions}));
  }
  return ps;
}

/// Dueling combination Q = V + A - mean(A) over a (1 x n_actions) advantage
/// row and scalar value.
inline Var dueling_q(Var value_scalar, Var advantage_row) {
  const std::size_t n = advantage_row.val().size();
  Var mean_adv = ad::scale(ad::sum(advantage_row), 1.0 / static_cast<double>(n));
  Var centered = ad::add_scalar(advantage_row, ad::sub(value_scalar, mean_adv));
  return centered;
}

/// Masked global mean pooling (Eq.-style average over present nodes).
inline Var mean_pool(Var node_features, const std::vector<std::uint8_t>& mask) {
  return ad::masked_mean_rows(node_features, mask);
}

/// Full Q-network forward pass on the tape: enabled blocks run in the order
/// GCNII x2 -> GATv2 x2 -> masked mean pool -> FC x2 -> Q head(s). ReLU and
/// layer normalization follow the first GCNII and the first GATv2 layer; the
/// last GAT layer stays linear before pooling.
inline Var forward_q(Tape& tape, const PolicyInput& input, const ParamBinding& params,
                     const PolicyConfig& cfg) {
  cfg.validate();
  const std::size_t n = input.features.rows();
  std::vector<std::uint8_t> mask = input.mask;
  bool any_present = false;
  for (auto b : mask) any_present = any_present || b;
  if (!any_present && n > 0) mask[0] = 1;  // ego row convention keeps Q finite

  Var x0 = ad::matmul(tape.constant(input.features), params["policy/embed_w"]);
  Var x = x0;

  if (cfg.use_gcn) {
    const Tensor a_norm = obs::normalize_adjacency(input.adjacency);
    Var g1 = ad::gcn2_layer(x, x0, params["policy/gcn1_w"], a_norm, cfg.gcn2_alpha,
                            ad::gcn2_beta(cfg.gcn2_lambda, 1));
    Var act = ad::layer_norm(ad::relu(g1));
    Var gamma = ad::broadcast_rows(params["policy/ln1_gamma"], n);
    Var beta = ad::broadcast_rows(params["policy/ln1_beta"], n);
    x = ad::add(ad::mul(act, gamma), beta);
    x = ad::gcn2_layer(x, x0, params["policy/gcn2_w"], a_norm, cfg.gcn2_alpha,
                       ad::gcn2_beta(cfg.gcn2_lambda, 2));
  }

  if (cfg.use_gat) {
    Tensor adj_w = input.adjacency;
    for (std::size_t i = 0; i < n; ++i) adj_w(i, i) = 1.0;  // self-inclusion
    for (int layer = 1; layer <= 2; ++layer) {
      const bool inner = layer == 1;
      std::vector<Var> heads;
      for (std::size_t m = 0; m < cfg.gat_heads; ++m) {
        const std::string base =
            "policy/gat" + std::to_string(layer) + "_h" + std::to_string(m) + "_";
        heads.push_back(ad::gatv2_head(x, params[base + "wl"], params[base + "wr"],
                                       params[base + "a"], adj_w, cfg.leaky_slope,
                                       /*output_activation=*/inner));
      }
      Var cat = heads[0];
      for (std::size_t m = 1; m < heads.size(); ++m) cat = ad::concat_cols(cat, heads[m]);
      if (inner) {
        Var act = ad::layer_norm(ad::relu(cat));
        Var gamma = ad::broadcast_rows(params["policy/ln2_gamma"], n);
        Var beta = ad::broadcast_rows(params["policy/ln2_beta"], n);
        x = ad::add(ad::mul(act, gamma), beta);
      } else {
        x = cat;
      }
    }
  }

  Var pooled = mean_pool(x, mask);
  Var f1 = ad::relu(ad::linear(pooled, params["policy/fc1_w"], params["policy/fc1_b"]));
  Var f2 = ad::relu(ad::linear(f1, params["policy/fc2_w"], params["policy/fc2_b"]));

  if (cfg.use_dueling) {
    Var value = ad::at_index(ad::linear(f2, params["policy/val_w"], params["policy/val_b"]), 0);
    Var adv = ad::linear(f2, params["policy/adv_w"], params["policy/adv_b"]);
    return dueling_q(value, adv);
  }
  return ad::linear(f2, params["policy/q_w"], params["policy/q_b"]);
}

/// Plain evaluation path: Q-values as a tensor, no gradients kept.
inline Tensor qvalues(const PolicyInput& input, const ParameterSet& params,
                      const PolicyConfig& cfg) {
  Tape tape;
  ParamBinding binding(tape, params);
  return forward_q(tape, input, binding, cfg).val();
}

}  // namespace cgrl::policy
