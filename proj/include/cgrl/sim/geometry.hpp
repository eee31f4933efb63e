#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cgrl/core/error.hpp"

namespace cgrl::sim {

struct Vec2 {
  double x = 0.0, y = 0.0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double c) const { return {c * x, c * y}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

/// Rotate a point by k*90 degrees counterclockwise about the origin.
inline Vec2 rot90(Vec2 p, int k) {
  switch (((k % 4) + 4) % 4) {
    case 0: return p;
    case 1: return {-p.y, p.x};
    case 2: return {-p.x, -p.y};
    default: return {p.y, -p.x};
  }
}

inline double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

struct Pose {
  Vec2 position;
  double heading = 0.0;  // radians, (-pi, pi]
};

/// Axis-aligned or oriented rectangle described by center, heading, size.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 5.0;  // along heading
  double width = 2.0;

  std::array<Vec2, 4> corners() const {
    const double c = std::cos(heading), s = std::sin(heading);
    const Vec2 fx{c * length * 0.5, s * length * 0.5};
    const Vec2 fy{-s * width * 0.5, c * width * 0.5};
    return {center + fx + fy, center + fx - fy, center - fx - fy, center - fx + fy};
  }
};

/// Separating-axis overlap test; touching boundaries count as overlap.
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.heading), std::sin(a.heading)},
      Vec2{-std::sin(a.heading), std::cos(a.heading)},
      Vec2{std::cos(b.heading), std::sin(b.heading)},
      Vec2{-std::sin(b.heading), std::cos(b.heading)},
  };
  for (const Vec2& axis : axes) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const Vec2& p : ca) {
      const double t = p.dot(axis);
      amin = std::min(amin, t);
      amax = std::max(amax, t);
    }
    for (const Vec2& p : cb) {
      const double t = p.dot(axis);
      bmin = std::min(bmin, t);
      bmax = std::max(bmax, t);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

/// One piece of a center-line route: a straight line or a circular arc.
struct Segment {
  enum class Kind { kLine, kArc } kind = Kind::kLine;
  // line
  Vec2 a, b;
  // arc: position = center + radius*(cos t, sin t), t = theta0 + sgn*s/radius
  Vec2 center;
  double radius = 0.0;
  double theta0 = 0.0;
  double dtheta = 0.0;  // signed sweep; positive = counterclockwise
  double length = 0.0;

  static Segment line(Vec2 a, Vec2 b) {
    Segment s;
    s.kind = Kind::kLine;
    s.a = a;
    s.b = b;
    s.length = (b - a).norm();
    return s;
  }

  static Segment arc(Vec2 center, double radius, double theta0, double dtheta) {
    Segment s;
    s.kind = Kind::kArc;
    s.center = center;
    s.radius = radius;
    s.theta0 = theta0;
    s.dtheta = dtheta;
    s.length = radius * std::fabs(dtheta);
    return s;
  }

  Pose pose_at(double s) const {
    if (kind == Kind::kLine) {
      const double t = length > 0.0 ? s / length : 0.0;
      const Vec2 d = b - a;
      return {a + d * t, std::atan2(d.y, d.x)};
    }
    const double sgn = dtheta >= 0.0 ? 1.0 : -1.0;
    const double t = theta0 + sgn * s / radius;
    const Vec2 p = center + Vec2{std::cos(t), std::sin(t)} * radius;
    // tangent of ccw motion is (-sin, cos); reversed for cw
    const double h = std::atan2(sgn * std::cos(t), -sgn * std::sin(t));
    return {p, h};
  }

  /// Arc length of the closest point on the segment plus its distance.
  void project(Vec2 p, double& s_out, double& dist_out) const {
    if (kind == Kind::kLine) {
      const Vec2 d = b - a;
      const double len2 = d.dot(d);
      double t = len2 > 0.0 ? (p - a).dot(d) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      s_out = t * length;
      dist_out = (p - (a + d * t)).norm();
      return;
    }
    const double ang = std::atan2(p.y - center.y, p.x - center.x);
    const double sgn = dtheta >= 0.0 ? 1.0 : -1.0;
    double rel = wrap_angle(ang - theta0) * sgn;  // progress angle in [0, |dtheta|]
    rel = std::clamp(rel, 0.0, std::fabs(dtheta));
    s_out = rel * radius;
    const Pose q = pose_at(s_out);
    dist_out = (p - q.position).norm();
  }
};

/// Fixed center-line route through the intersection, arc-length addressed.
/// Positions past the end extrapolate along the final heading.
struct Route {
  std::vector<Segment> segments;
  double total = 0.0;

  void add(Segment s) {
    segments.push_back(s);
    total += s.length;
  }

  Pose pose_at(double s) const {
    if (segments.empty()) throw DomainError("route: empty");
    if (s <= 0.0) {
      Pose p = segments.front().pose_at(0.0);
      const Vec2 dir{std::cos(p.heading), std::sin(p.heading)};
      p.position = p.position + dir * s;
      return p;
    }
    double acc = 0.0;
    for (const Segment& seg : segments) {
      if (s <= acc + seg.length) return seg.pose_at(s - acc);
      acc += seg.length;
    }
    Pose p = segments.back().pose_at(segments.back().length);
    const Vec2 dir{std::cos(p.heading), std::sin(p.heading)};
    p.position = p.position + dir * (s - acc);
    return p;
  }

  /// Closest on-route point: returns arc length, writes lateral distance.
  double project(Vec2 p, double* lateral = nullptr) const {
    double best_s = 0.0, best_d = 1e300, acc = 0.0;
    for (const Segment& seg : segments) {
      double s = 0.0, d = 0.0;
      seg.project(p, s, d);
      if (d < best_d) {
        best_d = d;
        best_s = acc + s;
      }
      acc += seg.length;
    }
    if (lateral) *lateral = best_d;
    return best_s;
  }
};

enum class Turn { kRight = 0, kStraight = 1, kLeft = 2 };

/// Four-way intersection with one entry and one exit lane per arm.
/// Lane centers sit half a lane width from the arm axis (right-hand
/// traffic); the central box spans one lane width from the center.
struct IntersectionGeometry {
  double lane_width = 4.0;
  double road_half_length = 30.0;

  double box_half() const { return lane_width; }
  double lane_offset() const { return lane_width * 0.5; }

  /// Route for a vehicle entering on arm `entry` (0 south, 1 east, 2 north,
  /// 3 west as counterclockwise rotations of the south template).
  Route route(int entry, Turn turn) const {
    const double off = lane_offset();
    const double c = box_half();
    const double r = road_half_length;
    auto rot = [entry](Vec2 p) { return rot90(p, entry); };

    Route route;
    route.add(Segment::line(rot({off, -r}), rot({off, -c})));
    switch (turn) {
      case Turn::kStraight:
        route.add(Segment::line(rot({off, -c}), rot({off, c})));
        route.add(Segment::line(rot({off, c}), rot({off, r})));
        break;
      case Turn::kRight: {
        const double rr = c - off;
        const double base = entry * M_PI / 2.0;
        route.add(Segment::arc(rot({c, -c}), rr, M_PI + base, -M_PI / 2.0));
        route.add(Segment::line(rot({c, -off}), rot({r, -off})));
        break;
      }
      case Turn::kLeft: {
        const double rl = c + off;
        const double base = entry * M_PI / 2.0;
        route.add(Segment::arc(rot({-c, -c}), rl, 0.0 + base, M_PI / 2.0));
        route.add(Segment::line(rot({-c, off}), rot({-r, off})));
        break;
      }
    }
    return route;
  }

  /// Exit arm index for an entry/turn pair (arm k = south rotated k*90 ccw).
  int exit_arm(int entry, Turn turn) const {
    switch (turn) {
      case Turn::kRight: return (entry + 1) % 4;
      case Turn::kStraight: return (entry + 2) % 4;
      case Turn::kLeft: return (entry + 3) % 4;
    }
    return entry;
  }

  /// Distance from a point to the road surface (0 when on the cross).
  double distance_outside_road(Vec2 p) const {
    const double half_w = lane_width;           // two lanes per road
    const double ext = road_half_length + box_half();
    auto rect_dist = [](Vec2 q, double hx, double hy) {
      const double dx = std::max(std::fabs(q.x) - hx, 0.0);
      const double dy = std::max(std::fabs(q.y) - hy, 0.0);
      return std::sqrt(dx * dx + dy * dy);
    };
    return std::min(rect_dist(p, half_w, ext), rect_dist(p, ext, half_w));
  }
};

}  // namespace cgrl::sim
