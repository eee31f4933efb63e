#pragma once

#include <cmath>
#include <vector>

#include "cgrl/core/autodiff.hpp"
#include "cgrl/core/tensor.hpp"

namespace cgrl {
namespace ad {

/// Broadcast a length-d vector over n rows.
inline Var broadcast_rows(Var v, std::size_t n) {
  const Tensor& V = v.val();
  const std::size_t d = V.size();
  Tensor out = Tensor::uninit({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = V[j];
  int iv = v.id;
  return v.tape->record(std::move(out), {v}, [iv, n, d](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(iv)) return;
    Tensor& gv = ctx.grad(iv);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gv[j] += g(i, j);
  });
}

/// x + broadcast scalar.
inline Var add_scalar(Var x, Var s) {
  const Tensor& X = x.val();
  const double sv = s.val().value();
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] + sv;
  int ix = x.id, is = s.id;
  return x.tape->record(std::move(out), {x, s}, [ix, is](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (ctx.needs(ix)) {
      Tensor& gx = ctx.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (ctx.needs(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i];
      ctx.grad(is)[0] += acc;
    }
  });
}

/// Graph convolution with initial residual and identity mapping:
/// out = ((1-alpha) A_norm x + alpha x0) ((1-beta) I + beta W).
/// A_norm is the symmetrically normalized adjacency (constant input).
inline Var gcn2_layer(Var x, Var x0, Var w, const Tensor& a_norm, double alpha, double beta) {
  const Tensor& X = x.val();
  const Tensor& X0 = x0.val();
  const Tensor& W = w.val();
  const std::size_t n = X.rows(), d = X.cols();
  if (X0.rows() != n || X0.cols() != d || W.rows() != d || W.cols() != d ||
      a_norm.rows() != n || a_norm.cols() != n)
    throw ShapeError("gcn2_layer: inconsistent shapes");

  Tensor h = Tensor::uninit({n, d});
  kernels::mm_nn(a_norm.data(), X.data(), h.data(), n, n, d);
  for (std::size_t i = 0; i < n * d; ++i) h[i] = (1.0 - alpha) * h[i] + alpha * X0[i];

  Tensor m = Tensor::uninit({d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = beta * W(i, j) + (i == j ? 1.0 - beta : 0.0);

  Tensor out = Tensor::uninit({n, d});
  kernels::mm_nn(h.data(), m.data(), out.data(), n, d, d);

  int ix = x.id, ix0 = x0.id, iw = w.id;
  return x.tape->record(
      std::move(out), {x, x0, w},
      [ix, ix0, iw, n, d, alpha, beta, a_norm, h = std::move(h), m = std::move(m)](
          const Tensor& g, Tape::BackwardCtx& ctx) {
        Tensor gh = Tensor::uninit({n, d});
        kernels::mm_nt(g.data(), m.data(), gh.data(), n, d, d);
        if (ctx.needs(iw)) {
          Tensor gw = Tensor::uninit({d, d});
          kernels::mm_tn(h.data(), g.data(), gw.data(), n, d, d);
          Tensor& acc = ctx.grad(iw);
          for (std::size_t i = 0; i < d * d; ++i) acc[i] += beta * gw[i];
        }
        if (ctx.needs(ix)) {
          Tensor gx = Tensor::uninit({n, d});
          kernels::mm_tn(a_norm.data(), gh.data(), gx.data(), n, n, d);
          Tensor& acc = ctx.grad(ix);
          for (std::size_t i = 0; i < n * d; ++i) acc[i] += (1.0 - alpha) * gx[i];
        }
        if (ctx.needs(ix0)) {
          Tensor& acc = ctx.grad(ix0);
          for (std::size_t i = 0; i < n * d; ++i) acc[i] += alpha * gh[i];
        }
      });
}

/// Identity-mapping strength for layer l: beta_l = log(lambda / l + 1).
inline double gcn2_beta(double lambda, int layer_index) {
  return std::log(lambda / static_cast<double>(layer_index) + 1.0);
}

/// One GATv2 attention head over a weighted neighborhood matrix.
///
/// Scores e_ij = a^T LeakyReLU(W_l x_i + W_r x_j) for pairs with
/// adj_w(i,j) > 0 (the diagonal carries the self-loop weight). Attention is
/// the edge-weighted softmax over each row's neighborhood, aggregation is
/// x'_i = sum_j alpha_ij (x_j W_r), optionally passed through LeakyReLU.
inline Var gatv2_head(Var x, Var wl, Var wr, Var attn, const Tensor& adj_w, double slope,
                      bool output_activation) {
  const Tensor& X = x.val();
  const Tensor& Wl = wl.val();
  const Tensor& Wr = wr.val();
  const Tensor& A = attn.val();
  const std::size_t n = X.rows(), d = X.cols(), p = Wl.cols();
  if (Wl.rows() != d || Wr.rows() != d || Wr.cols() != p || A.size() != p ||
      adj_w.rows() != n || adj_w.cols() != n)
    throw ShapeError("gatv2_head: inconsistent shapes");

  Tensor sl = Tensor::uninit({n, p});
  Tensor sr = Tensor::uninit({n, p});
  kernels::mm_nn(X.data(), Wl.data(), sl.data(), n, d, p);
  kernels::mm_nn(X.data(), Wr.data(), sr.data(), n, d, p);

  Tensor alpha({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double emax = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      if (adj_w(i, j) <= 0.0) continue;
      double e = 0.0;
      for (std::size_t k = 0; k < p; ++k)
        e += A[k] * kernels::leaky(sl(i, k) + sr(j, k), slope);
      alpha(i, j) = e;  // raw scores, normalized below
      emax = std::max(emax, e);
    }
    if (emax == -1e300) throw DomainError("gatv2_head: empty neighborhood row");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (adj_w(i, j) <= 0.0) continue;
      const double w = adj_w(i, j) * std::exp(alpha(i, j) - emax);
      alpha(i, j) = w;
      z += w;
    }
    for (std::size_t j = 0; j < n; ++j)
      if (adj_w(i, j) > 0.0) alpha(i, j) /= z;
  }

  Tensor u = Tensor::uninit({n, p});
  kernels::mm_nn(alpha.data(), sr.data(), u.data(), n, n, p);
  Tensor out = Tensor::uninit({n, p});
  for (std::size_t i = 0; i < n * p; ++i)
    out[i] = output_activation ? kernels::leaky(u[i], slope) : u[i];

  int ix = x.id, iwl = wl.id, iwr = wr.id, ia = attn.id;
  return x.tape->record(
      std::move(out), {x, wl, wr, attn},
      [ix, iwl, iwr, ia, n, d, p, slope, output_activation, adj_w, sl = std::move(sl),
       sr = std::move(sr), alpha = std::move(alpha),
       u = std::move(u)](const Tensor& g, Tape::BackwardCtx& ctx) {
        const Tensor& X2 = ctx.value(ix);
        const Tensor& A2 = ctx.value(ia);

        Tensor gu = Tensor::uninit({n, p});
        for (std::size_t i = 0; i < n * p; ++i)
          gu[i] = output_activation ? g[i] * kernels::leaky_grad(u[i], slope) : g[i];

        // aggregation: u = alpha sr
        Tensor galpha = Tensor::uninit({n, n});
        kernels::mm_nt(gu.data(), sr.data(), galpha.data(), n, p, n);
        Tensor gsr = Tensor::uninit({n, p});
        kernels::mm_tn(alpha.data(), gu.data(), gsr.data(), n, n, p);
        Tensor gsl({n, p});
        Tensor ga({p});

        // softmax rows, then scores
        for (std::size_t i = 0; i < n; ++i) {
          double rowdot = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            if (adj_w(i, j) > 0.0) rowdot += galpha(i, j) * alpha(i, j);
          for (std::size_t j = 0; j < n; ++j) {
            if (adj_w(i, j) <= 0.0) continue;
            const double ge = alpha(i, j) * (galpha(i, j) - rowdot);
            if (ge == 0.0) continue;
            for (std::size_t k = 0; k < p; ++k) {
              const double pre = sl(i, k) + sr(j, k);
              const double dpre = ge * A2[k] * kernels::leaky_grad(pre, slope);
              gsl(i, k) += dpre;
              gsr(j, k) += dpre;
              ga[k] += ge * kernels::leaky(pre, slope);
            }
          }
        }

        if (ctx.needs(ix)) {
          Tensor& gx = ctx.grad(ix);
          kernels::mm_nt(gsl.data(), ctx.value(iwl).data(), gx.data(), n, p, d);
          kernels::mm_nt(gsr.data(), ctx.value(iwr).data(), gx.data(), n, p, d);
        }
        if (ctx.needs(iwl)) kernels::mm_tn(X2.data(), gsl.data(), ctx.grad(iwl).data(), n, d, p);
        if (ctx.needs(iwr)) kernels::mm_tn(X2.data(), gsr.data(), ctx.grad(iwr).data(), n, d, p);
        if (ctx.needs(ia)) {
          Tensor& gacc = ctx.grad(ia);
          for (std::size_t k = 0; k < p; ++k) gacc[k] += ga[k];
        }
      });
}

}  // namespace ad

/// Attention weights of one node over an explicit neighbor list, evaluated
/// directly (no tape): softmax_k a^T LeakyReLU(W [x_i || x_k]).
/// W stacks the self block on top of the neighbor block (2d x p).
inline std::vector<double> gatv2_scores(const Tensor& x_i, const std::vector<Tensor>& neighbors,
                                        const Tensor& w, const Tensor& attn, double slope) {
  if (neighbors.empty()) throw DomainError("gatv2_scores: empty neighbor set");
  const std::size_t d = x_i.size(), p = w.cols();
  if (w.rows() != 2 * d || attn.size() != p) throw ShapeError("gatv2_scores: inconsistent shapes");
  std::vector<double> scores(neighbors.size());
  double emax = -1e300;
  for (std::size_t k = 0; k < neighbors.size(); ++k) {
    if (neighbors[k].size() != d) throw ShapeError("gatv2_scores: neighbor width mismatch");
    double e = 0.0;
    for (std::size_t c = 0; c < p; ++c) {
      double z = 0.0;
      for (std::size_t r = 0; r < d; ++r)
        z += x_i[r] * w(r, c) + neighbors[k][r] * w(d + r, c);
      e += attn[c] * kernels::leaky(z, slope);
    }
    scores[k] = e;
    emax = std::max(emax, e);
  }
  double zsum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - emax);
    zsum += s;
  }
  for (double& s : scores) s /= zsum;
  return scores;
}

}  // namespace cgrl
