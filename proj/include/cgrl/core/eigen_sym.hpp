#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "cgrl/core/error.hpp"
#include "cgrl/core/tensor.hpp"

namespace cgrl {

struct EighResult {
  Tensor eigenvalues;   // ascending, shape {n}
  Tensor eigenvectors;  // columns match eigenvalues, shape {n,n}
};

namespace detail {

inline double max_offdiag(const Tensor& a) {
  const std::size_t n = a.rows();
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m = std::max(m, std::fabs(a(i, j)));
  return m;
}

}  // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Eigenvalues ascending; eigenvector columns orthonormal; A = V diag(l) V^T.
/// Off-diagonal tolerance 1e-12 (relative to the matrix scale), max 100 sweeps.
inline EighResult eigh_sym(const Tensor& m, double symmetry_tol = 1e-9) {
  if (m.rank() != 2 || m.rows() != m.cols())
    throw ShapeError("eigh_sym: matrix must be square, got " + m.shape_str());
  const std::size_t n = m.rows();

  double scale = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) scale = std::max(scale, std::fabs(m[i]));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::fabs(m(i, j) - m(j, i)) > symmetry_tol * std::max(1.0, scale))
        throw DomainError("eigh_sym: matrix not symmetric");

  Tensor a = m;
  // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
  Tensor v = Tensor::identity(n);

  const double tol = 1e-12 * std::max(1.0, scale);
  const int max_sweeps = 100;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    if (detail::max_offdiag(a) <= tol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= tol) continue;
        const double app = a(p, p), aqq = a(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        double t;
        if (tau >= 0.0)
          t = 1.0 / (tau + std::sqrt(1.0 + tau * tau));
        else
          t = -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(p, k) = a(k, p);
          a(k, q) = s * akp + c * akq;
          a(q, k) = a(k, q);
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == max_sweeps && detail::max_offdiag(a) > tol)
    throw NumericError("eigh_sym: Jacobi iteration did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (a(i, i) != a(j, j)) return a(i, i) < a(j, j);
    return i < j;
  });

  EighResult r{Tensor({n}), Tensor({n, n})};
  for (std::size_t k = 0; k < n; ++k) {
    r.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t row = 0; row < n; ++row) r.eigenvectors(row, k) = v(row, order[k]);
  }
  return r;
}

/// Eigenvalues of a PSD matrix clamped at >= 0; values below `clamp_tol`
/// are treated as exact zeros (excluded from entropy logs downstream).
inline std::vector<double> psd_eigenvalues(const Tensor& m, double clamp_tol = 1e-12) {
  EighResult r = eigh_sym(m);
  std::vector<double> out(r.eigenvalues.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = r.eigenvalues[i] < clamp_tol ? 0.0 : r.eigenvalues[i];
  return out;
}

}  // namespace cgrl
