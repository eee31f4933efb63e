#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cgrl/core/autodiff.hpp"
#include "cgrl/core/rng.hpp"
#include "cgrl/obs/graph_obs.hpp"

namespace cgrl::causal {

struct VgaeConfig {
  std::size_t hidden_dim = 32;  // width after the first GCN layer
  std::size_t latent_dim = 16;  // L; split into causal/spurious halves

  void validate() const {
    if (latent_dim % 2 != 0) throw ConfigError("vgae: latent width must be even");
    if (hidden_dim == 0 || latent_dim == 0) throw ConfigError("vgae: zero width");
  }
};

/// Latent Z split column-wise into the causal block Z_c and spurious block
/// Z_s (first and second half).
struct LatentSplit {
  Tensor zc;
  Tensor zs;
};

inline ParameterSet init_vgae_params(const VgaeConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ParameterSet ps;
  ps.emplace("vgae/w0",
             glorot_uniform(rng, obs::kFeatureDim, cfg.hidden_dim,
                            {obs::kFeatureDim, cfg.hidden_dim}));
  ps.emplace("vgae/w1",
             glorot_uniform(rng, cfg.hidden_dim, cfg.latent_dim,
                            {cfg.hidden_dim, cfg.latent_dim}));
  return ps;
}

/// Per-element Gaussian KL toward the standard normal prior (nats):
/// 0.5 (sigma^2 + mu^2 - 1 - log sigma^2).
inline double gaussian_kl(double mu, double logvar) {
  return 0.5 * (std::exp(logvar) + mu * mu - 1.0 - logvar);
}

namespace ad_ops {

using namespace cgrl::ad;

/// Weighted Bernoulli edge log-likelihood over masked pairs:
/// mean over masked entries of pos_w t softplus(-x) + (1-t) softplus(x).
inline Var edge_bce(Var logits, const Tensor& targets, const Tensor& pair_mask,
                    double pos_weight) {
  const Tensor& X = logits.val();
  if (!X.same_shape(targets) || !X.same_shape(pair_mask))
    throw ShapeError("edge_bce: shape mismatch");
  double count = 0.0;
  for (std::size_t i = 0; i < pair_mask.size(); ++i) count += pair_mask[i];
  const double norm = count > 0.0 ? count : 1.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (pair_mask[i] == 0.0) continue;
    loss += targets[i] > 0.5 ? pos_weight * kernels::softplus(-X[i])
                             : kernels::softplus(X[i]);
  }
  loss /= norm;
  int ix = logits.id;
  Tensor t = targets, m = pair_mask;
  return logits.tape->record(
      Tensor::scalar(loss), {logits},
      [ix, pos_weight, norm, t = std::move(t), m = std::move(m)](const Tensor& g,
                                                                 Tape::BackwardCtx& ctx) {
        if (!ctx.needs(ix)) return;
        const Tensor& X2 = ctx.value(ix);
        Tensor& gx = ctx.grad(ix);
        const double scale = g[0] / norm;
        for (std::size_t i = 0; i < X2.size(); ++i) {
          if (m[i] == 0.0) continue;
          gx[i] += scale * (t[i] > 0.5 ? -pos_weight * kernels::sigmoid(-X2[i])
                                       : kernels::sigmoid(X2[i]));
        }
      });
}

}  // namespace ad_ops

struct EncodeVars {
  Var mu;      // N x L
  Var logvar;  // shares the head weight with mu, hence the same node
  Var z;       // mu + sigma * noise, absent rows zeroed
};

/// Two-layer GCN encoder: F_bar = ReLU(A_norm F W0), mu = logvar =
/// A_norm F_bar W1 (shared head), z = mu + exp(logvar/2) * noise.
inline EncodeVars encode(Tape& tape, const Tensor& features, const Tensor& adjacency,
                         const ParamBinding& params, const VgaeConfig& cfg,
                         const Tensor& noise, const std::vector<std::uint8_t>& mask) {
  cfg.validate();
  const std::size_t n = features.rows();
  if (noise.rows() != n || noise.cols() != cfg.latent_dim)
    throw ShapeError("encode: noise must be N x L");
  const Tensor a_norm = obs::normalize_adjacency(adjacency);

  Var an = tape.constant(a_norm);
  Var f_bar =
      ad::relu(ad::matmul(ad::matmul(an, tape.constant(features)), params["vgae/w0"]));
  Var head = ad::matmul(ad::matmul(an, f_bar), params["vgae/w1"]);

  Tensor row_mask({n, cfg.latent_dim});
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i])
      for (std::size_t l = 0; l < cfg.latent_dim; ++l) row_mask(i, l) = 1.0;

  Var sigma = ad::exp_op(ad::scale(head, 0.5));
  Var z = ad::add(head, ad::mul(sigma, tape.constant(noise)));
  Var z_masked = ad::mul_const(z, row_mask);
  return EncodeVars{head, head, z_masked};
}

/// Inner-product decoder: p_ij = sigmoid(z_i . z_j).
inline Var decode_edges(Var z) { return ad::sigmoid(ad::matmul(z, ad::transpose(z))); }

inline Tensor decode_edges(const Tensor& z) {
  Tape tape;
  return decode_edges(tape.constant(z)).val();
}

/// Negative ELBO from already-encoded latents: positive-reweighted Bernoulli
/// reconstruction over present node pairs plus the Gaussian KL (averaged per
/// present node).
inline Var elbo_from(Tape& tape, const EncodeVars& enc, const Tensor& adjacency,
                     const std::vector<std::uint8_t>& mask) {
  const std::size_t n = adjacency.rows();
  std::size_t n_present = 0;
  for (auto b : mask) n_present += b ? 1 : 0;
  if (n_present == 0) throw DomainError("elbo_loss: no present nodes");

  Tensor pair_mask({n, n});
  double n_pos = 0.0, n_pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!mask[j]) continue;
      pair_mask(i, j) = 1.0;
      n_pairs += 1.0;
      n_pos += adjacency(i, j);
    }
  }
  const double pos_weight = n_pos > 0.0 ? (n_pairs - n_pos) / n_pos : 1.0;

  Var logits = ad::matmul(enc.z, ad::transpose(enc.z));
  Var recon = ad_ops::edge_bce(logits, adjacency, pair_mask, pos_weight);

  // logvar == mu, so each element contributes 0.5 (e^mu + mu^2 - 1 - mu);
  // absent rows have mu = 0 and contribute nothing
  Var mu2 = ad::mul(enc.mu, enc.mu);
  Var kl_elems = ad::shift(ad::sub(ad::add(ad::exp_op(enc.logvar), mu2), enc.logvar), -1.0);
  Var kl = ad::scale(ad::sum(kl_elems), 0.5 / static_cast<double>(n_present));
  return ad::add(recon, kl);
}

inline Var elbo_loss(Tape& tape, const Tensor& features, const Tensor& adjacency,
                     const ParamBinding& params, const VgaeConfig& cfg, const Tensor& noise,
                     const std::vector<std::uint8_t>& mask) {
  EncodeVars enc = encode(tape, features, adjacency, params, cfg, noise, mask);
  return elbo_from(tape, enc, adjacency, mask);
}

/// Spec-level convenience: a single negative-ELBO evaluation with fresh
/// reparameterization noise.
inline double elbo_loss(const Tensor& features, const Tensor& adjacency,
                        const ParameterSet& params, const VgaeConfig& cfg,
                        std::mt19937_64& rng) {
  Tape tape;
  ParamBinding bind(tape, params);
  std::vector<std::uint8_t> mask(features.rows());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = features(i, 0) != 0.0 ? 1 : 0;
  Tensor noise = standard_normal(rng, {features.rows(), cfg.latent_dim});
  return elbo_loss(tape, features, adjacency, bind, cfg, noise, mask).val().value();
}

/// Column split of the latent matrix into causal and spurious halves.
inline LatentSplit split_latent(const Tensor& z) {
  if (z.rank() != 2 || z.cols() % 2 != 0)
    throw ConfigError("split_latent: latent width must be even");
  const std::size_t n = z.rows(), half = z.cols() / 2;
  LatentSplit out{Tensor({n, half}), Tensor({n, half})};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < half; ++j) {
      out.zc(i, j) = z(i, j);
      out.zs(i, j) = z(i, half + j);
    }
  return out;
}

/// Causal adjacency A_c = sigmoid(Z_c Z_c^T).
inline Tensor causal_adjacency(const Tensor& zc) {
  Tape tape;
  return decode_edges(tape.constant(zc)).val();
}

/// Physical adjacency gating learned edge weights: A_used = A (hadamard) A_c.
inline Tensor gated_adjacency(const Tensor& physical, const Tensor& causal) {
  if (!physical.same_shape(causal)) throw ShapeError("gated_adjacency: shape mismatch");
  Tensor out = Tensor::uninit(physical.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = physical[i] * causal[i];
  return out;
}

/// Noiseless causal adjacency from the current encoder (Z = mu path): the
/// deterministic state input handed to the policy.
inline Tensor causal_adjacency_from(const Tensor& features, const Tensor& adjacency,
                                    const ParameterSet& params, const VgaeConfig& cfg) {
  Tape tape;
  ParamBinding bind(tape, params);
  std::vector<std::uint8_t> mask(features.rows());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = features(i, 0) != 0.0 ? 1 : 0;
  Tensor zero_noise({features.rows(), cfg.latent_dim});
  EncodeVars enc = encode(tape, features, adjacency, bind, cfg, zero_noise, mask);
  const Tensor& z = enc.z.val();
  LatentSplit split = split_latent(z);
  return causal_adjacency(split.zc);
}

}  // namespace cgrl::causal
