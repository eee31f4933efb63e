#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cgrl/core/eigen_sym.hpp"
#include "cgrl/core/error.hpp"
#include "cgrl/core/tensor.hpp"

namespace cgrl {

namespace kernels {

// C += A(r x k) * B(k x c)
inline void mm_nn(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C += A(r x k) * B^T, B stored (n x k)
inline void mm_nt(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C += A^T * B, A stored (m x r), B stored (m x n)
inline void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t r,
                  std::size_t n) {
  for (std::size_t p = 0; p < m; ++p) {
    const double* ap = a + p * r;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < r; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

inline double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double leaky_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace kernels

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
};

/// Recorded operation graph plus backward functions: one forward pass per
/// tape, replayed gradients are bit-identical for identical inputs.
class Tape {
 public:
  class BackwardCtx {
   public:
    BackwardCtx(Tape& t, std::vector<Tensor>& grads) : tape_(t), grads_(grads) {}
    const Tensor& value(int id) const { return tape_.nodes_[id].value; }
    bool needs(int id) const { return tape_.nodes_[id].needs_grad; }
    /// Gradient slot for node `id`, zero-initialized on first touch.
    Tensor& grad(int id) {
      Tensor& g = grads_[id];
      if (g.size() == 0) g = Tensor::uninit(tape_.nodes_[id].value.shape());
      return g;
    }

   private:
    Tape& tape_;
    std::vector<Tensor>& grads_;
  };

  using BackFn = std::function<void(const Tensor& gout, BackwardCtx& ctx)>;

  struct Node {
    Tensor value;
    BackFn backward;
    bool needs_grad = false;
  };

  Var leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), nullptr, requires_grad});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(Tensor value, std::initializer_list<Var> parents, BackFn fn) {
    bool ng = false;
    for (const Var& p : parents) {
      if (p.tape != this) throw StateError("tape: operand recorded on a different tape");
      ng = ng || nodes_[p.id].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), ng ? std::move(fn) : nullptr, ng});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var record(Tensor value, const std::vector<Var>& parents, BackFn fn) {
    bool ng = false;
    for (const Var& p : parents) {
      if (p.tape != this) throw StateError("tape: operand recorded on a different tape");
      ng = ng || nodes_[p.id].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), ng ? std::move(fn) : nullptr, ng});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& value(const Var& v) const { return nodes_[v.id].value; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Reverse sweep from a scalar loss; returns one gradient tensor per node
  /// (empty tensors where no gradient flowed).
  std::vector<Tensor> backward(const Var& loss, double seed = 1.0) {
    if (loss.tape != this) throw StateError("tape: loss recorded on a different tape");
    if (!nodes_[loss.id].value.is_scalar())
      throw ShapeError("backward: loss must be a scalar, got " +
                       nodes_[loss.id].value.shape_str());
    std::vector<Tensor> grads(nodes_.size());
    grads[loss.id] = Tensor::scalar(seed);
    BackwardCtx ctx(*this, grads);
    for (int i = loss.id; i >= 0; --i) {
      if (grads[i].size() == 0 || !nodes_[i].needs_grad) continue;
      if (nodes_[i].backward) nodes_[i].backward(grads[i], ctx);
    }
    return grads;
  }

 private:
  friend struct Var;
  friend class BackwardCtx;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::val() const { return tape->value(*this); }

namespace ad {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

inline Var matmul(Var a, Var b) {
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw ShapeError("matmul: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
  const std::size_t r = A.rows(), k = A.cols(), n = B.cols();
  Tensor out = Tensor::uninit({r, n});
  kernels::mm_nn(A.data(), B.data(), out.data(), r, k, n);
  int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib, r, k, n](const Tensor& g,
                                                                  Tape::BackwardCtx& ctx) {
    if (ctx.needs(ia))
      kernels::mm_nt(g.data(), ctx.value(ib).data(), ctx.grad(ia).data(), r, n, k);
    if (ctx.needs(ib))
      kernels::mm_tn(ctx.value(ia).data(), g.data(), ctx.grad(ib).data(), r, k, n);
  });
}

inline Var add(Var a, Var b) {
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  check_same_shape(A, B, "add");
  Tensor out = Tensor::uninit(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
  int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (ctx.needs(ia)) {
      Tensor& ga = ctx.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (ctx.needs(ib)) {
      Tensor& gb = ctx.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  check_same_shape(A, B, "sub");
  Tensor out = Tensor::uninit(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
  int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (ctx.needs(ia)) {
      Tensor& ga = ctx.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (ctx.needs(ib)) {
      Tensor& gb = ctx.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  check_same_shape(A, B, "mul");
  Tensor out = Tensor::uninit(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
  int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](const Tensor& g, Tape::BackwardCtx& ctx) {
    const Tensor& A2 = ctx.value(ia);
    const Tensor& B2 = ctx.value(ib);
    if (ctx.needs(ia)) {
      Tensor& ga = ctx.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B2[i];
    }
    if (ctx.needs(ib)) {
      Tensor& gb = ctx.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A2[i];
    }
  });
}

inline Var scale(Var x, double c) {
  const Tensor& X = x.val();
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = c * X[i];
  int ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, c](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

inline Var shift(Var x, double c) {
  const Tensor& X = x.val();
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] + c;
  int ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Elementwise product with a constant tensor (masks, gates).
inline Var mul_const(Var x, const Tensor& c) {
  const Tensor& X = x.val();
  check_same_shape(X, c, "mul_const");
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] * c[i];
  int ix = x.id;
  Tensor cc = c;
  return x.tape->record(std::move(out), {x},
                        [ix, cc = std::move(cc)](const Tensor& g, Tape::BackwardCtx& ctx) {
                          if (!ctx.needs(ix)) return;
                          Tensor& gx = ctx.grad(ix);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * cc[i];
                        });
}

inline Var relu(Var x) {
  const Tensor& X = x.val();
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
  int ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    const Tensor& X2 = ctx.value(ix);
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (X2[i] > 0.0) gx[i] += g[i];
  });
}

inline Var leaky_relu(Var x, double slope) {
  const Tensor& X = x.val();
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = kernels::leaky(X[i], slope);
  int ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, slope](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    const Tensor& X2 = ctx.value(ix);
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * kernels::leaky_grad(X2[i], slope);
  });
}

inline Var sigmoid(Var x) {
  const Tensor& X = x.val();
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = kernels::sigmoid(X[i]);
  int ix = x.id, self = static_cast<int>(x.tape->size());
  return x.tape->record(std::move(out), {x}, [ix, self](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    const Tensor& Y = ctx.value(self);
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * Y[i] * (1.0 - Y[i]);
  });
}

inline Var exp_op(Var x) {
  const Tensor& X = x.val();
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::exp(X[i]);
  int ix = x.id, self = static_cast<int>(x.tape->size());
  return x.tape->record(std::move(out), {x}, [ix, self](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    const Tensor& Y = ctx.value(self);
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * Y[i];
  });
}

inline Var log_op(Var x) {
  const Tensor& X = x.val();
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i] <= 0.0) throw NumericError("log: non-positive input");
    out[i] = std::log(X[i]);
  }
  int ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    const Tensor& X2 = ctx.value(ix);
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / X2[i];
  });
}

/// Softmax along `axis` of a rank-1 or rank-2 tensor; slices sum to 1.
inline Var softmax(Var x, int axis) {
  const Tensor& X = x.val();
  const bool vec = X.rank() == 1;
  if (vec && axis != 0) throw ShapeError("softmax: axis out of range for rank-1 input");
  if (!vec && (X.rank() != 2 || axis < 0 || axis > 1))
    throw ShapeError("softmax: axis out of range");
  const std::size_t r = vec ? 1 : X.rows();
  const std::size_t c = vec ? X.size() : X.cols();
  // slices run along axis: axis==1 (or rank-1) -> rows, axis==0 -> columns
  const bool by_row = vec || axis == 1;
  const std::size_t outer = by_row ? r : c;
  const std::size_t inner = by_row ? c : r;
  auto at = [&](Tensor& t, std::size_t o, std::size_t i) -> double& {
    return by_row ? t[o * c + i] : t[i * c + o];
  };
  Tensor out = Tensor::uninit(X.shape());
  {
    Tensor tmp = X;
    for (std::size_t o = 0; o < outer; ++o) {
      double m = -1e300;
      for (std::size_t i = 0; i < inner; ++i) m = std::max(m, at(tmp, o, i));
      double z = 0.0;
      for (std::size_t i = 0; i < inner; ++i) z += std::exp(at(tmp, o, i) - m);
      for (std::size_t i = 0; i < inner; ++i) at(out, o, i) = std::exp(at(tmp, o, i) - m) / z;
    }
  }
  int ix = x.id, self = static_cast<int>(x.tape->size());
  return x.tape->record(
      std::move(out), {x},
      [ix, self, by_row, outer, inner, c](const Tensor& g, Tape::BackwardCtx& ctx) {
        if (!ctx.needs(ix)) return;
        const Tensor& Y = ctx.value(self);
        Tensor& gx = ctx.grad(ix);
        auto cat = [&](const Tensor& t, std::size_t o, std::size_t i) {
          return by_row ? t[o * c + i] : t[i * c + o];
        };
        auto gat = [&](Tensor& t, std::size_t o, std::size_t i) -> double& {
          return by_row ? t[o * c + i] : t[i * c + o];
        };
        for (std::size_t o = 0; o < outer; ++o) {
          double dot = 0.0;
          for (std::size_t i = 0; i < inner; ++i) dot += cat(g, o, i) * cat(Y, o, i);
          for (std::size_t i = 0; i < inner; ++i)
            gat(gx, o, i) += cat(Y, o, i) * (cat(g, o, i) - dot);
        }
      });
}

/// Row-wise normalization to zero mean, unit variance (no affine part).
inline Var layer_norm(Var x, double eps = 1e-5) {
  const Tensor& X = x.val();
  if (X.rank() != 2) throw ShapeError("layer_norm: rank-2 input required");
  const std::size_t r = X.rows(), c = X.cols();
  Tensor out = Tensor::uninit({r, c});
  Tensor inv_sd({r});
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += X(i, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (X(i, j) - mu) * (X(i, j) - mu);
    var /= static_cast<double>(c);
    const double isd = 1.0 / std::sqrt(var + eps);
    inv_sd[i] = isd;
    for (std::size_t j = 0; j < c; ++j) out(i, j) = (X(i, j) - mu) * isd;
  }
  int ix = x.id, self = static_cast<int>(x.tape->size());
  return x.tape->record(std::move(out), {x},
                        [ix, self, r, c, inv_sd = std::move(inv_sd)](const Tensor& g,
                                                                     Tape::BackwardCtx& ctx) {
                          if (!ctx.needs(ix)) return;
                          const Tensor& Y = ctx.value(self);
                          Tensor& gx = ctx.grad(ix);
                          const double inv_c = 1.0 / static_cast<double>(c);
                          for (std::size_t i = 0; i < r; ++i) {
                            double gm = 0.0, gy = 0.0;
                            for (std::size_t j = 0; j < c; ++j) {
                              gm += g(i, j);
                              gy += g(i, j) * Y(i, j);
                            }
                            gm *= inv_c;
                            gy *= inv_c;
                            for (std::size_t j = 0; j < c; ++j)
                              gx(i, j) += inv_sd[i] * (g(i, j) - gm - Y(i, j) * gy);
                          }
                        });
}

inline Var transpose(Var x) {
  const Tensor& X = x.val();
  if (X.rank() != 2) throw ShapeError("transpose: rank-2 input required");
  const std::size_t r = X.rows(), c = X.cols();
  Tensor out = Tensor::uninit({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = X(i, j);
  int ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, r, c](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx(i, j) += g(j, i);
  });
}

inline Var sum(Var x) {
  const Tensor& X = x.val();
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) s += X[i];
  int ix = x.id;
  return x.tape->record(Tensor::scalar(s), {x}, [ix](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

inline Var trace(Var x) {
  const Tensor& X = x.val();
  if (X.rank() != 2 || X.rows() != X.cols()) throw ShapeError("trace: square matrix required");
  const std::size_t n = X.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += X(i, i);
  int ix = x.id;
  return x.tape->record(Tensor::scalar(s), {x}, [ix, n](const Tensor& g, Tape::BackwardCtx& ctx) {
    if (!ctx.needs(ix)) return;
    Tensor& gx = ctx.grad(ix);
    for (std::size_t i = 0; i < n; ++i) gx[i * n + i] += g[0];
  });
}

/// x / s with a scalar Var divisor.
inline Var div_scalar(Var x, Var s) {
  const Tensor& X = x.val();
  const double sv = s.val().value();
  if (sv == 0.0) throw NumericError("div_scalar: division by zero");
  Tensor out = Tensor::uninit(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] / sv;
  int ix = x.id, is = s.id;
  return x.tape->record(std::move(out), {x, s},
                        [ix, is, sv](const Tensor& g, Tape::BackwardCtx& ctx) {
                          const Tensor& X2 = ctx.value(ix);
                          if (ctx.needs(ix)) {
                            Tensor& gx = ctx.grad(ix);
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / sv;
                          }
                          if (ctx.needs(is)) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * X2[i];
                            ctx.grad(is)[0] -= acc / (sv * sv);
                          }
                        });
}

inline Var at_index(Var x, std::size_t idx) {
  const Tensor& X = x.val();
  if (idx >= X.size()) throw ShapeError("at_index: index out of range");
  int ix = x.id;
  return x.tape->record(Tensor::scalar(X[idx]), {x},
                        [ix, idx](const Tensor& g, Tape::BackwardCtx& ctx) {
                          if (ctx.needs(ix)) ctx.grad(ix)[idx] += g[0];
                        });
}

inline Var slice_cols(Var x, std::size_t c0, std::size_t c1) {
  const Tensor& X = x.val();
  if (X.rank() != 2 || c1 > X.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
  const std::size_t r = X.rows(), w = c1 - c0, c = X.cols();
  Tensor out = Tensor::uninit({r, w});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = X(i, c0 + j);
  int ix = x.id;
  return x.tape->record(std::move(out), {x},
                        [ix, r, w, c, c0](const Tensor& g, Tape::BackwardCtx& ctx) {
                          if (!ctx.needs(ix)) return;
                          Tensor& gx = ctx.grad(ix);
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < w; ++j) gx[i * c + c0 + j] += g(i, j);
                        });
}

inline Var concat_cols(Var a, Var b) {
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (A.rank() != 2 || B.rank() != 2 || A.rows() != B.rows())
    throw ShapeError("concat_cols: row mismatch");
  const std::size_t r = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor out = Tensor::uninit({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = A(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = B(i, j);
  }
  int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b},
                        [ia, ib, r, ca, cb](const Tensor& g, Tape::BackwardCtx& ctx) {
                          if (ctx.needs(ia)) {
                            Tensor& ga = ctx.grad(ia);
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
                          }
                          if (ctx.needs(ib)) {
                            Tensor& gb = ctx.grad(ib);
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
                          }
                        });
}

/// Stack B row vectors (each 1 x d) into a (B x d) matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  const std::size_t d = rows[0].val().size();
  Tensor out = Tensor::uninit({rows.size(), d});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const Tensor& R = rows[b].val();
    if (R.size() != d) throw ShapeError("stack_rows: width mismatch");
    for (std::size_t j = 0; j < d; ++j) out(b, j) = R[j];
  }
  std::vector<int> ids(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) ids[b] = rows[b].id;
  return rows[0].tape->record(std::move(out), rows,
                              [ids, d](const Tensor& g, Tape::BackwardCtx& ctx) {
                                for (std::size_t b = 0; b < ids.size(); ++b) {
                                  if (!ctx.needs(ids[b])) continue;
                                  Tensor& gb = ctx.grad(ids[b]);
                                  for (std::size_t j = 0; j < d; ++j) gb[j] += g(b, j);
                                }
                              });
}

/// Mean over rows selected by a 0/1 mask; errors when no row is selected.
inline Var masked_mean_rows(Var x, const std::vector<std::uint8_t>& mask) {
  const Tensor& X = x.val();
  if (X.rank() != 2 || mask.size() != X.rows())
    throw ShapeError("masked_mean_rows: mask length must equal row count");
  std::size_t m = 0;
  for (auto b : mask) m += b ? 1 : 0;
  if (m == 0) throw DomainError("masked_mean_rows: no present rows");
  const std::size_t r = X.rows(), c = X.cols();
  Tensor out = Tensor::uninit({1, c});
  for (std::size_t i = 0; i < r; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < c; ++j) out[j] += X(i, j);
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < c; ++j) out[j] *= inv;
  int ix = x.id;
  return x.tape->record(std::move(out), {x},
                        [ix, mask, inv, r, c](const Tensor& g, Tape::BackwardCtx& ctx) {
                          if (!ctx.needs(ix)) return;
                          Tensor& gx = ctx.grad(ix);
                          for (std::size_t i = 0; i < r; ++i) {
                            if (!mask[i]) continue;
                            for (std::size_t j = 0; j < c; ++j) gx(i, j) += g[j] * inv;
                          }
                        });
}

/// x @ W + broadcast bias.
inline Var linear(Var x, Var w, Var b) {
  const Tensor& X = x.val();
  const Tensor& W = w.val();
  const Tensor& B = b.val();
  if (X.rank() != 2 || W.rank() != 2 || X.cols() != W.rows() || B.size() != W.cols())
    throw ShapeError("linear: incompatible shapes");
  const std::size_t r = X.rows(), k = X.cols(), n = W.cols();
  Tensor out = Tensor::uninit({r, n});
  kernels::mm_nn(X.data(), W.data(), out.data(), r, k, n);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += B[j];
  int ix = x.id, iw = w.id, ib = b.id;
  return x.tape->record(std::move(out), {x, w, b},
                        [ix, iw, ib, r, k, n](const Tensor& g, Tape::BackwardCtx& ctx) {
                          if (ctx.needs(ix))
                            kernels::mm_nt(g.data(), ctx.value(iw).data(), ctx.grad(ix).data(), r,
                                           n, k);
                          if (ctx.needs(iw))
                            kernels::mm_tn(ctx.value(ix).data(), g.data(), ctx.grad(iw).data(), r,
                                           k, n);
                          if (ctx.needs(ib)) {
                            Tensor& gb = ctx.grad(ib);
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < n; ++j) gb[j] += g(i, j);
                          }
                        });
}

}  // namespace ad

/// Leaf bindings for a ParameterSet on one tape; collects gradients back by
/// name after the reverse sweep.
class ParamBinding {
 public:
  explicit ParamBinding(Tape& tape) : tape_(&tape) {}

  ParamBinding(Tape& tape, const ParameterSet& params) : tape_(&tape) {
    for (const auto& [name, tensor] : params) {
      vars_.emplace(name, tape.leaf(tensor, true));
      shapes_.emplace(name, tensor.shape());
    }
  }

  /// Bind an already-recorded Var under a parameter name.
  void bind(const std::string& name, Var v) {
    vars_.emplace(name, v);
    shapes_.emplace(name, v.val().shape());
  }

  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ConfigError("parameter not bound: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return vars_.count(name) != 0; }

  /// Gradients per parameter; untouched parameters yield zero tensors.
  ParameterSet collect(const std::vector<Tensor>& grads) const {
    ParameterSet out;
    for (const auto& [name, var] : vars_) {
      const Tensor& g = grads[var.id];
      out.emplace(name, g.size() ? g : Tensor(shapes_.at(name)));
    }
    return out;
  }

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
  std::map<std::string, std::vector<std::size_t>> shapes_;
};

/// d(loss)/d(theta) for every bound parameter.
inline ParameterSet grad(Var loss, const ParamBinding& binding) {
  auto grads = loss.tape->backward(loss);
  return binding.collect(grads);
}

}  // namespace cgrl
