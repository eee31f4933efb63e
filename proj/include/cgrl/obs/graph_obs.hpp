#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cgrl/core/error.hpp"
#include "cgrl/core/tensor.hpp"
#include "cgrl/sim/world.hpp"

namespace cgrl::obs {

inline constexpr std::size_t kFeatureDim = 7;  // e, x, y, vx, vy, cos_h, sin_h
inline constexpr double kPositionScale = 1.0 / 100.0;
inline constexpr double kVelocityScale = 1.0 / 30.0;
inline constexpr double kAdjacencyDx = 10.0;
inline constexpr double kAdjacencyDy = 30.0;

/// Padded graph state: features F (n_max x 7) and adjacency A (n_max x
/// n_max). Row 0 is the ego; rows with e = 0 are zero and isolated.
struct GraphObservation {
  Tensor features;   // n_max x 7
  Tensor adjacency;  // n_max x n_max, binary, symmetric, zero diagonal
  std::size_t n_present = 0;

  std::size_t n_max() const { return features.rows(); }

  std::vector<std::uint8_t> present_mask() const {
    std::vector<std::uint8_t> mask(features.rows());
    for (std::size_t i = 0; i < mask.size(); ++i)
      mask[i] = features(i, 0) != 0.0 ? 1 : 0;
    return mask;
  }
};

/// Feature matrix of Eq.-style rows (e, x, y, vx, vy, cos h, sin h) in the
/// intersection-center frame; positions scaled by 1/100 m, velocities by
/// 1/30 m/s. Vehicle i occupies row index i (the ego is id 0).
inline Tensor build_feature_matrix(const sim::World& world) {
  const auto& vehicles = world.vehicles();
  const std::size_t n_max = world.config().n_max;
  if (vehicles.size() > n_max) throw CapacityError("graph_obs: more vehicles than n_max");
  Tensor f({n_max, kFeatureDim});
  for (const auto& v : vehicles) {
    if (!v.present) continue;
    const auto row = static_cast<std::size_t>(v.id);
    f(row, 0) = 1.0;
    f(row, 1) = v.x * kPositionScale;
    f(row, 2) = v.y * kPositionScale;
    f(row, 3) = v.vx() * kVelocityScale;
    f(row, 4) = v.vy() * kVelocityScale;
    f(row, 5) = std::cos(v.heading);
    f(row, 6) = std::sin(v.heading);
  }
  return f;
}

/// e_ij = 1 iff both present, i != j, |dx| < 10 m and |dy| < 30 m
/// (axis-aligned world-frame distances).
inline Tensor build_adjacency(const sim::World& world) {
  const auto& vehicles = world.vehicles();
  const std::size_t n_max = world.config().n_max;
  if (vehicles.size() > n_max) throw CapacityError("graph_obs: more vehicles than n_max");
  Tensor a({n_max, n_max});
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (!vehicles[i].present) continue;
    for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
      if (!vehicles[j].present) continue;
      const double dx = std::fabs(vehicles[i].x - vehicles[j].x);
      const double dy = std::fabs(vehicles[i].y - vehicles[j].y);
      if (dx < kAdjacencyDx && dy < kAdjacencyDy) {
        const auto ri = static_cast<std::size_t>(vehicles[i].id);
        const auto rj = static_cast<std::size_t>(vehicles[j].id);
        a(ri, rj) = 1.0;
        a(rj, ri) = 1.0;
      }
    }
  }
  return a;
}

inline GraphObservation observe(const sim::World& world) {
  GraphObservation obs;
  obs.features = build_feature_matrix(world);
  obs.adjacency = build_adjacency(world);
  obs.n_present = 0;
  for (const auto& v : world.vehicles()) obs.n_present += v.present ? 1 : 0;
  return obs;
}

/// Symmetric normalization D^{-1/2} (A + I) D^{-1/2} with D the degree
/// matrix of A + I. Isolated nodes reduce to identity rows. Accepts
/// non-negative edge weights (the causally gated adjacency reuses this).
inline Tensor normalize_adjacency(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols())
    throw ShapeError("normalize_adjacency: square matrix required");
  const std::size_t n = a.rows();
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;  // self-loop
    for (std::size_t j = 0; j < n; ++j) d += a(i, j);
    dinv[i] = 1.0 / std::sqrt(d);
  }
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double hat = a(i, j) + (i == j ? 1.0 : 0.0);
      out(i, j) = dinv[i] * hat * dinv[j];
    }
  return out;
}

}  // namespace cgrl::obs
