#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "cgrl/causal/gram.hpp"
#include "cgrl/causal/vgae.hpp"
#include "cgrl/core/rng.hpp"

namespace cgrl::causal {

struct CdrlConfig {
  double alpha = 2.0;      // Renyi order
  double lambda1 = 1.0;    // ELBO weight
  double lambda2 = 0.1;    // sparsity weight
  double lr = 1e-2;
  std::size_t batch_size = 64;  // graphs per Gram estimate
  double grad_clip = 10.0;
  long warmup_episodes = 50;    // RL episodes before CDRL updates begin
  int period = 4;               // one CDRL step per this many RL steps
  VgaeConfig vgae;

  void validate() const {
    if (alpha <= 0.0 || alpha == 1.0) throw ConfigError("cdrl: alpha must be positive, != 1");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("cdrl: negative regularizer weight");
    if (batch_size < 2) throw ConfigError("cdrl: batch size must be at least 2");
    vgae.validate();
  }
};

/// One graph in a CDRL mini-batch: observation tensors, presence mask, and
/// the greedy-policy action label A* (refreshed by the caller each step).
struct CdrlItem {
  Tensor features;
  Tensor adjacency;
  std::vector<std::uint8_t> mask;
  int astar = 0;
};

/// The four objective terms; loss = -i_cond + i_cs + l1 elbo + l2 sparsity.
struct CdrlLossTerms {
  Var loss;
  Var i_cond;
  Var i_cs;
  Var elbo;
  Var sparsity;
};

/// Combined CDRL objective over a batch of graphs (Eq.-style composition):
/// encoder latents are split, mean-pooled per graph into MI sample vectors,
/// and the matrix-based entropies run over the per-variable Gram matrices.
inline CdrlLossTerms cdrl_loss(Tape& tape, const std::vector<CdrlItem>& batch,
                               const ParamBinding& params, const CdrlConfig& cfg,
                               const std::vector<Tensor>& noises) {
  cfg.validate();
  if (batch.size() < 2) throw ShapeError("cdrl_loss: need at least 2 graphs");
  if (noises.size() != batch.size()) throw ShapeError("cdrl_loss: one noise tensor per graph");
  const std::size_t b = batch.size();
  const std::size_t half = cfg.vgae.latent_dim / 2;

  std::vector<Var> zc_rows, zs_rows, elbos, ac_l1;
  double phys_l1 = 0.0;
  Tensor astar({b, 3});
  for (std::size_t k = 0; k < b; ++k) {
    const CdrlItem& item = batch[k];
    astar(k, static_cast<std::size_t>(item.astar)) = 1.0;
    EncodeVars enc = encode(tape, item.features, item.adjacency, params, cfg.vgae,
                            noises[k], item.mask);
    elbos.push_back(elbo_from(tape, enc, item.adjacency, item.mask));
    Var zc = ad::slice_cols(enc.z, 0, half);
    Var zs = ad::slice_cols(enc.z, half, cfg.vgae.latent_dim);
    zc_rows.push_back(ad::masked_mean_rows(zc, item.mask));
    zs_rows.push_back(ad::masked_mean_rows(zs, item.mask));
    ac_l1.push_back(ad::sum(decode_edges(zc)));
    for (std::size_t i = 0; i < item.adjacency.size(); ++i)
      phys_l1 += std::fabs(item.adjacency[i]);
  }

  Var u_c = ad::stack_rows(zc_rows);
  Var u_s = ad::stack_rows(zs_rows);
  Var k_c = ad::gaussian_gram(u_c, ad::gram_width_var(u_c));
  Var k_s = ad::gaussian_gram(u_s, ad::gram_width_var(u_s));
  Var k_a = ad::gaussian_gram(tape.constant(astar), gram_width(astar));

  Var s_c = ad::renyi_entropy_gram(k_c, cfg.alpha);
  Var s_s = ad::renyi_entropy_gram(k_s, cfg.alpha);
  Var joint_cs = ad::normalized_hadamard(k_c, k_s);
  Var s_cs = ad::renyi_entropy_gram(joint_cs, cfg.alpha);
  Var s_as = ad::renyi_entropy_gram(ad::normalized_hadamard(k_a, k_s), cfg.alpha);
  Var s_cas = ad::renyi_entropy_gram(ad::normalized_hadamard(k_c, k_a, k_s), cfg.alpha);

  Var i_cs = ad::sub(ad::add(s_c, s_s), s_cs);
  Var i_cond = ad::sub(ad::add(s_cs, s_as), ad::add(s_s, s_cas));

  Var elbo_sum = elbos[0];
  for (std::size_t k = 1; k < b; ++k) elbo_sum = ad::add(elbo_sum, elbos[k]);
  Var elbo_mean = ad::scale(elbo_sum, 1.0 / static_cast<double>(b));

  Var ac_sum = ac_l1[0];
  for (std::size_t k = 1; k < b; ++k) ac_sum = ad::add(ac_sum, ac_l1[k]);
  // |A|_1 = 0 across the whole batch leaves the sparsity ratio defined as 0
  Var sparsity = phys_l1 > 0.0 ? ad::scale(ac_sum, 1.0 / phys_l1)
                               : tape.constant(Tensor::scalar(0.0));

  Var loss = ad::add(ad::sub(i_cs, i_cond),
                     ad::add(ad::scale(elbo_mean, cfg.lambda1),
                             ad::scale(sparsity, cfg.lambda2)));
  return CdrlLossTerms{loss, i_cond, i_cs, elbo_mean, sparsity};
}

/// Owns the VGAE parameters and applies plain gradient-descent CDRL steps.
class CdrlTrainer {
 public:
  CdrlTrainer(const CdrlConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), noise_rng_(make_rng(derive_seed(seed, "cdrl-noise"))) {
    cfg_.validate();
    auto init_rng = make_rng(derive_seed(seed, "vgae-init"));
    params_ = init_vgae_params(cfg_.vgae, init_rng);
  }

  const CdrlConfig& config() const { return cfg_; }
  const ParameterSet& params() const { return params_; }
  void set_params(ParameterSet ps) { params_ = std::move(ps); }
  long steps() const { return steps_; }

  /// One gradient step on the combined objective; returns the loss terms'
  /// values, or nothing when the batch is too small (skip signal).
  std::optional<std::vector<double>> train_step(const std::vector<CdrlItem>& batch) {
    if (batch.size() < cfg_.batch_size) return std::nullopt;
    std::vector<Tensor> noises;
    noises.reserve(batch.size());
    for (const CdrlItem& item : batch)
      noises.push_back(
          standard_normal(noise_rng_, {item.features.rows(), cfg_.vgae.latent_dim}));

    Tape tape;
    ParamBinding bind(tape, params_);
    CdrlLossTerms terms = cdrl_loss(tape, batch, bind, cfg_, noises);
    const double loss_value = terms.loss.val().value();
    if (!std::isfinite(loss_value)) throw NumericError("cdrl: non-finite loss");

    ParameterSet grads = grad(terms.loss, bind);
    double sq = 0.0;
    for (const auto& [name, g] : grads)
      for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    const double norm = std::sqrt(sq);
    const double scale = norm > cfg_.grad_clip && norm > 0.0 ? cfg_.grad_clip / norm : 1.0;
    for (auto& [name, g] : grads) {
      Tensor& w = params_.at(name);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.lr * scale * g[i];
    }
    ++steps_;
    return std::vector<double>{loss_value, terms.i_cond.val().value(),
                               terms.i_cs.val().value(), terms.elbo.val().value(),
                               terms.sparsity.val().value()};
  }

  /// One gradient step on the mean negative ELBO alone (CDRL terms off).
  std::optional<double> train_step_elbo(const std::vector<CdrlItem>& batch) {
    if (batch.empty()) return std::nullopt;
    Tape tape;
    ParamBinding bind(tape, params_);
    Var sum = tape.constant(Tensor::scalar(0.0));
    for (const CdrlItem& item : batch) {
      Tensor noise = standard_normal(noise_rng_, {item.features.rows(), cfg_.vgae.latent_dim});
      sum = ad::add(sum, elbo_loss(tape, item.features, item.adjacency, bind, cfg_.vgae,
                                   noise, item.mask));
    }
    Var loss = ad::scale(sum, 1.0 / static_cast<double>(batch.size()));
    const double loss_value = loss.val().value();
    if (!std::isfinite(loss_value)) throw NumericError("cdrl: non-finite elbo");
    ParameterSet grads = grad(loss, bind);
    for (auto& [name, g] : grads) {
      Tensor& w = params_.at(name);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.lr * g[i];
    }
    ++steps_;
    return loss_value;
  }

  /// Deterministic causal adjacency for the policy state.
  Tensor causal_adjacency_for(const Tensor& features, const Tensor& adjacency) const {
    return causal_adjacency_from(features, adjacency, params_, cfg_.vgae);
  }

 private:
  CdrlConfig cfg_;
  ParameterSet params_;
  std::mt19937_64 noise_rng_;
  long steps_ = 0;
};

}  // namespace cgrl::causal
