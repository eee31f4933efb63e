#pragma once

#include <cmath>
#include <optional>

#include "cgrl/core/error.hpp"

namespace cgrl::sim {

/// Intelligent-driver-model parameters. `b` is stored with its signed
/// convention (negative); its magnitude enters the safety-distance term.
struct IdmParams {
  double a_max = 6.0;   // maximum acceleration, m/s^2
  double delta = 4.0;   // acceleration exponent
  double t_gap = 1.5;   // desired time gap, s
  double s0 = 5.0;      // minimum jam distance, m
  double b = -5.0;      // comfortable deceleration, m/s^2
  double v0 = 8.0;      // desired speed, m/s

  void validate() const {
    if (a_max <= 0.0 || t_gap <= 0.0 || s0 <= 0.0 || b == 0.0 || v0 <= 0.0)
      throw ConfigError("idm: a_max, T, s0, |b|, v0 must be positive");
  }
};

/// Hard floor on commanded deceleration; the raw law is unbounded as the
/// gap closes.
inline constexpr double kIdmMinAccel = -10.0;

/// a = a_max [1 - (v/v0)^delta - (s*/s)^2],
/// s* = s0 + vT + v dv / (2 sqrt(a_max |b|)).
/// `gap` is bumper-to-bumper; pass std::nullopt for a free road.
inline double idm_acceleration_raw(double v, std::optional<double> gap, double closing_speed,
                                   const IdmParams& p) {
  const double free_term = 1.0 - std::pow(v / p.v0, p.delta);
  double interaction = 0.0;
  if (gap.has_value()) {
    if (*gap <= 0.0) throw DomainError("idm: non-positive gap, collision must be handled first");
    const double s_star =
        p.s0 + v * p.t_gap + v * closing_speed / (2.0 * std::sqrt(p.a_max * std::fabs(p.b)));
    interaction = (s_star / *gap) * (s_star / *gap);
  }
  const double a = p.a_max * (free_term - interaction);
  return std::max(a, kIdmMinAccel);
}

}  // namespace cgrl::sim
