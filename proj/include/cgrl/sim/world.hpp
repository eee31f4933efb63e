#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "cgrl/core/error.hpp"
#include "cgrl/sim/geometry.hpp"
#include "cgrl/sim/idm.hpp"

namespace cgrl::sim {

inline constexpr double kVehicleLength = 5.0;
inline constexpr double kVehicleWidth = 2.0;

enum class EgoTask { kLeft, kStraight, kRight };
enum class EgoAction { kConstant = 0, kAccelerated = 1, kDecelerated = 2 };
inline constexpr int kNumActions = 3;

struct RewardWeights {
  double collision = 1.0, high_speed = 1.0, on_road = 1.0, task_complete = 1.0;
};

/// Linear map of ego speed [x0,x1] -> [y0,y1] for the high-speed reward.
struct SpeedMap {
  double x0 = 7.0, x1 = 9.0, y0 = 0.0, y1 = 1.0;
};

struct ScenarioConfig {
  std::size_t n_human_vehicles = 15;
  double road_half_length = 30.0;
  double lane_width = 4.0;
  EgoTask ego_task = EgoTask::kStraight;
  double sim_frequency = 15.0;   // Hz
  double policy_frequency = 1.0; // Hz
  int horizon = 40;              // decision steps
  IdmParams idm;
  RewardWeights reward_weights;
  SpeedMap speed_map;
  std::size_t n_max = 16;        // padded observation capacity
  double ego_accel = 3.0;        // accelerate/decelerate magnitude, m/s^2
  double ego_speed_cap = 10.0;
  double ego_spawn_speed = 8.0;
  double hv_v0_min = 7.0;
  double hv_v0_max = 9.0;
  double conflict_horizon = 25.0;  // leader search window along the route, m
  double conflict_lateral = 3.0;   // on-path lateral envelope for leader detection, m
  double conflict_tie_window = 2.0;  // arrival-time margin treated as a contested conflict, s

  void validate() const {
    if (sim_frequency <= 0.0 || policy_frequency <= 0.0)
      throw ConfigError("scenario: frequencies must be positive");
    const double ratio = sim_frequency / policy_frequency;
    if (std::fabs(ratio - std::round(ratio)) > 1e-9)
      throw ConfigError("scenario: sim_frequency must be divisible by policy_frequency");
    if (horizon < 1) throw ConfigError("scenario: horizon must be >= 1");
    if (n_max < 1) throw ConfigError("scenario: n_max must be >= 1");
    idm.validate();
  }

  int substeps_per_decision() const {
    return static_cast<int>(std::round(sim_frequency / policy_frequency));
  }
};

struct RouteSpec {
  int entry_arm = 0;
  Turn turn = Turn::kStraight;
  int exit_arm = 2;
};

struct VehicleState {
  int id = 0;
  bool present = true;  // e^i
  double x = 0.0, y = 0.0;
  double speed = 0.0;
  double heading = 0.0;  // (-pi, pi]
  RouteSpec route_spec;
  double arc = 0.0;  // arc length along the route
  bool is_ego = false;
  double v0 = 8.0;  // desired speed (IDM for HVs, cap basis for ego)

  double vx() const { return speed * std::cos(heading); }
  double vy() const { return speed * std::sin(heading); }
  OrientedBox box() const { return {{x, y}, heading, kVehicleLength, kVehicleWidth}; }
};

struct RewardComponents {
  double collision = 0.0;      // r^c
  double high_speed = 0.0;     // r^hs
  double on_road = 1.0;        // r^or
  double task_complete = 0.0;  // r^tc
};

struct StepFlags {
  bool collided = false, arrived = false, off_road = false, timed_out = false;
};

struct StepResult {
  double reward = 0.0;
  RewardComponents components;
  StepFlags flags;
  bool terminal = false;
};

/// True iff the two 5m x 2m oriented footprints overlap.
inline bool collision_check(const VehicleState& a, const VehicleState& b) {
  if (!a.present || !b.present) throw StateError("collision_check: absent vehicle");
  return boxes_overlap(a.box(), b.box());
}

/// Total reward and its components from the step flags and ego speed:
/// total = w_or r_or (w_c r_c + w_hs r_hs + w_tc r_tc).
inline std::pair<double, RewardComponents> reward(const StepFlags& flags, double ego_speed,
                                                  const ScenarioConfig& cfg) {
  RewardComponents c;
  c.collision = flags.collided ? -2.0 : 0.0;
  c.on_road = flags.off_road ? 0.0 : 1.0;
  c.task_complete = flags.arrived ? 1.0 : 0.0;
  const SpeedMap& m = cfg.speed_map;
  const double lo = std::min(m.y0, m.y1), hi = std::max(m.y0, m.y1);
  c.high_speed =
      std::clamp(m.y0 + (ego_speed - m.x0) * (m.y1 - m.y0) / (m.x1 - m.x0), lo, hi);
  const RewardWeights& w = cfg.reward_weights;
  const double total =
      w.on_road * c.on_road *
      (w.collision * c.collision + w.high_speed * c.high_speed + w.task_complete * c.task_complete);
  return {total, c};
}

/// IDM acceleration with the gap and closing speed taken from two vehicle
/// states (center distance minus one vehicle length).
inline double idm_acceleration(const VehicleState& follower, const VehicleState* leader,
                               const IdmParams& p) {
  IdmParams params = p;
  params.v0 = follower.v0;
  if (leader == nullptr)
    return idm_acceleration_raw(follower.speed, std::nullopt, 0.0, params);
  const double dist = std::hypot(leader->x - follower.x, leader->y - follower.y);
  return idm_acceleration_raw(follower.speed, dist - kVehicleLength,
                              follower.speed - leader->speed, params);
}

/// Minimal four-way unsignalized intersection world: one ego on a fixed
/// south-approach route, IDM-driven human vehicles on random routes.
class World {
 public:
  World(const ScenarioConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), respawn_rng_(seed ^ 0xa02befab94177c39ULL) {
    cfg_.validate();
    geom_.lane_width = cfg_.lane_width;
    geom_.road_half_length = cfg_.road_half_length;
    if (cfg_.n_human_vehicles + 1 > cfg_.n_max)
      throw ConfigError("scenario: n_max too small for the vehicle count");
    build(seed);
  }

  const ScenarioConfig& config() const { return cfg_; }
  const IntersectionGeometry& geometry() const { return geom_; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  std::vector<VehicleState>& mutable_vehicles() { return vehicles_; }
  const VehicleState& ego() const { return vehicles_.front(); }
  const Route& route_of(const VehicleState& v) const {
    return routes_[route_index(v.route_spec.entry_arm, v.route_spec.turn)];
  }
  bool terminal() const { return terminal_; }
  int steps_taken() const { return steps_; }

  /// Advance one policy period (sim_frequency/policy_frequency sub-steps).
  StepResult step(EgoAction action) {
    if (terminal_) throw StateError("world: step on a terminal world");
    const int n_sub = cfg_.substeps_per_decision();
    const double dt = 1.0 / cfg_.sim_frequency;
    StepFlags flags;

    double ego_a = 0.0;
    if (action == EgoAction::kAccelerated) ego_a = cfg_.ego_accel;
    if (action == EgoAction::kDecelerated) ego_a = -cfg_.ego_accel;

    for (int sub = 0; sub < n_sub; ++sub) {
      accels_.assign(vehicles_.size(), 0.0);
      accels_[0] = ego_a;
      for (std::size_t i = 1; i < vehicles_.size(); ++i) {
        if (!vehicles_[i].present) continue;
        accels_[i] = human_acceleration(i);
      }
      for (std::size_t i = 0; i < vehicles_.size(); ++i) {
        VehicleState& v = vehicles_[i];
        if (!v.present) continue;
        const double cap = v.is_ego ? cfg_.ego_speed_cap : v.v0 * 1.5;
        v.speed = std::clamp(v.speed + accels_[i] * dt, 0.0, cap);
        v.arc += v.speed * dt;
        const Pose pose = route_of(v).pose_at(v.arc);
        v.x = pose.position.x;
        v.y = pose.position.y;
        v.heading = pose.heading;
        if (!v.is_ego && v.arc >= route_of(v).total) v.present = false;
      }
      // finished humans re-enter on a fresh route so the configured traffic
      // density persists; blocked re-entries stay absent and retry
      for (std::size_t i = 1; i < vehicles_.size(); ++i)
        if (!vehicles_[i].present) try_respawn(vehicles_[i]);
      ego_speed_accum_ += vehicles_[0].speed;
      ++ego_speed_samples_;

      // collision first, then arrival, then off-road
      for (std::size_t i = 1; i < vehicles_.size() && !flags.collided; ++i)
        if (vehicles_[i].present && collision_check(vehicles_[0], vehicles_[i]))
          flags.collided = true;
      if (!flags.collided && vehicles_[0].arc >= route_of(vehicles_[0]).total)
        flags.arrived = true;
      if (!flags.collided && !flags.arrived &&
          geom_.distance_outside_road({vehicles_[0].x, vehicles_[0].y}) >
              0.5 * cfg_.lane_width)
        flags.off_road = true;
      if (flags.collided || flags.arrived) break;
    }

    ++steps_;
    if (!flags.collided && !flags.arrived && steps_ >= cfg_.horizon) flags.timed_out = true;
    terminal_ = flags.collided || flags.arrived || flags.timed_out;

    StepResult result;
    result.flags = flags;
    result.terminal = terminal_;
    auto [total, comps] = reward(flags, vehicles_[0].speed, cfg_);
    result.reward = total;
    result.components = comps;
    return result;
  }

  /// Mean ego speed over all executed sub-steps (A.V. metric input).
  double mean_ego_speed() const {
    return ego_speed_samples_ ? ego_speed_accum_ / ego_speed_samples_ : ego().speed;
  }

 private:
  static int route_index(int entry, Turn turn) { return entry * 3 + static_cast<int>(turn); }

  /// Arc positions where two routes pass within conflict distance.
  struct ConflictPoint {
    double s_a, s_b;
  };

  void build_conflicts() {
    const double step = 1.0, thresh = 2.0;
    conflicts_.assign(routes_.size() * routes_.size(), {});
    for (std::size_t a = 0; a < routes_.size(); ++a) {
      std::vector<Vec2> pa;
      for (double s = 0.0; s <= routes_[a].total; s += step)
        pa.push_back(routes_[a].pose_at(s).position);
      for (std::size_t b = 0; b < routes_.size(); ++b) {
        if (a == b) continue;
        std::vector<ConflictPoint>& out = conflicts_[a * routes_.size() + b];
        bool in_cluster = false;
        for (std::size_t i = 0; i < pa.size(); ++i) {
          double lat = 0.0;
          const double sb = routes_[b].project(pa[i], &lat);
          const double sa = static_cast<double>(i) * step;
          // shared-lane stretches are handled by projection following, not
          // as point conflicts: require the paths to cross, i.e. short
          // proximity clusters only
          if (lat < thresh) {
            if (!in_cluster) {
              out.push_back({sa, sb});
              in_cluster = true;
            }
          } else {
            in_cluster = false;
          }
        }
        // long overlap runs mean merging/shared lanes, keep only crossings
        std::vector<ConflictPoint> crossings;
        for (const ConflictPoint& c : out) {
          double lat_end = 0.0;
          const Vec2 later = routes_[a].pose_at(std::min(c.s_a + 6.0, routes_[a].total)).position;
          routes_[b].project(later, &lat_end);
          if (lat_end > thresh) crossings.push_back(c);
        }
        out = std::move(crossings);
      }
    }
  }

  void build(std::uint64_t seed) {
    for (int e = 0; e < 4; ++e)
      for (int t = 0; t < 3; ++t) routes_.push_back(geom_.route(e, static_cast<Turn>(t)));
    build_conflicts();
    // dense layouts occasionally jam; retry the whole placement with a
    // derived sub-seed before giving up
    for (int restart = 0;; ++restart) {
      try {
        vehicles_.clear();
        place_all(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(restart));
        return;
      } catch (const ScenarioError&) {
        if (restart >= 19) throw;
      }
    }
  }

  void place_all(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Turn ego_turn = cfg_.ego_task == EgoTask::kLeft      ? Turn::kLeft
                          : cfg_.ego_task == EgoTask::kRight   ? Turn::kRight
                                                               : Turn::kStraight;
    VehicleState ego;
    ego.id = 0;
    ego.is_ego = true;
    ego.route_spec = {0, ego_turn, geom_.exit_arm(0, ego_turn)};
    ego.arc = 0.0;
    ego.speed = cfg_.ego_spawn_speed;
    ego.v0 = cfg_.ego_speed_cap;
    place_on_route(ego);
    vehicles_.push_back(ego);

    std::uniform_int_distribution<int> entry_dist(0, 3);
    std::uniform_int_distribution<int> turn_dist(0, 2);
    std::uniform_real_distribution<double> v0_dist(cfg_.hv_v0_min, cfg_.hv_v0_max);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    for (std::size_t k = 0; k < cfg_.n_human_vehicles; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
        const int entry = entry_dist(rng);
        const Turn turn = static_cast<Turn>(turn_dist(rng));
        const Route& route = routes_[route_index(entry, turn)];
        // spawn on the approach or exit segment, not inside the central box
        const double la = route.segments.front().length;
        const double lexit = route.segments.back().length - kVehicleLength;
        if (lexit <= 0.0) continue;
        const double u = u01(rng) * (la + lexit);
        const double s = u <= la ? u : route.total - route.segments.back().length +
                                           (u - la);
        VehicleState hv;
        hv.id = static_cast<int>(k) + 1;
        hv.route_spec = {entry, turn, geom_.exit_arm(entry, turn)};
        hv.arc = s;
        hv.v0 = v0_dist(rng);
        hv.speed = hv.v0;
        place_on_route(hv);
        if (!spawn_clear(hv)) continue;
        vehicles_.push_back(hv);
        placed = true;
      }
      if (!placed)
        throw ScenarioError("scenario: could not place all human vehicles without overlap");
    }
  }

  void place_on_route(VehicleState& v) {
    const Pose pose = routes_[route_index(v.route_spec.entry_arm, v.route_spec.turn)].pose_at(v.arc);
    v.x = pose.position.x;
    v.y = pose.position.y;
    v.heading = pose.heading;
  }

  /// One re-entry attempt at the start of a random route; leaves the vehicle
  /// absent when the entry is blocked.
  void try_respawn(VehicleState& v) {
    std::uniform_int_distribution<int> entry_dist(0, 3);
    std::uniform_int_distribution<int> turn_dist(0, 2);
    std::uniform_real_distribution<double> v0_dist(cfg_.hv_v0_min, cfg_.hv_v0_max);
    const int entry = entry_dist(respawn_rng_);
    const Turn turn = static_cast<Turn>(turn_dist(respawn_rng_));
    VehicleState cand = v;
    cand.route_spec = {entry, turn, geom_.exit_arm(entry, turn)};
    cand.arc = 0.0;
    cand.v0 = v0_dist(respawn_rng_);
    cand.speed = cand.v0;
    place_on_route(cand);
    cand.present = true;
    if (!spawn_clear(cand)) return;
    v = cand;
  }

  /// Spawn separation: no footprint overlap anywhere, and along-lane gaps of
  /// at least s0 + vehicle length between vehicles sharing a lane.
  bool spawn_clear(const VehicleState& cand) const {
    const double min_gap = cfg_.idm.s0 + kVehicleLength;
    for (const VehicleState& w : vehicles_) {
      if (!w.present || w.id == cand.id) continue;
      OrientedBox cb = cand.box();
      cb.length += 1.0;  // spawn margin
      cb.width += 0.5;
      if (boxes_overlap(cb, w.box())) return false;
      double lat_cw = 0.0, lat_wc = 0.0;
      const double s_on_w = route_of(w).project({cand.x, cand.y}, &lat_cw);
      const double s_on_c =
          routes_[route_index(cand.route_spec.entry_arm, cand.route_spec.turn)].project(
              {w.x, w.y}, &lat_wc);
      if (lat_cw < 1.0 && std::fabs(s_on_w - w.arc) < min_gap) return false;
      if (lat_wc < 1.0 && std::fabs(s_on_c - cand.arc) < min_gap) return false;
    }
    return true;
  }

  /// Priority order at conflict-point ties: the ego goes first, then lower
  /// vehicle ids.
  static bool yields_to(const VehicleState& me, const VehicleState& other) {
    if (other.is_ego) return true;
    if (me.is_ego) return false;
    return other.id < me.id;
  }

  /// IDM acceleration toward the nearest conflicting leader: same-path
  /// vehicles ahead (projection following) and crossing traffic at route
  /// conflict points, yielded to by arrival-time windows.
  double human_acceleration(std::size_t idx) const {
    const VehicleState& me = vehicles_[idx];
    const Route& route = route_of(me);
    const std::size_t my_route = route_index(me.route_spec.entry_arm, me.route_spec.turn);
    double best_gap = 1e300;
    double leader_speed = 0.0;
    bool found = false;
    auto consider = [&](double gap, double speed) {
      if (gap < best_gap) {
        best_gap = gap;
        leader_speed = speed;
        found = true;
      }
    };

    for (std::size_t j = 0; j < vehicles_.size(); ++j) {
      if (j == idx || !vehicles_[j].present) continue;
      const VehicleState& other = vehicles_[j];
      double lateral = 0.0;
      const double s_other = route.project({other.x, other.y}, &lateral);
      if (lateral <= cfg_.conflict_lateral) {
        const double ds = s_other - me.arc;
        if (ds > 0.0 && ds <= cfg_.conflict_horizon) consider(ds - kVehicleLength, other.speed);
      }

      const std::size_t other_route =
          route_index(other.route_spec.entry_arm, other.route_spec.turn);
      if (other_route == my_route) continue;
      for (const ConflictPoint& c : conflicts_[my_route * routes_.size() + other_route]) {
        const double df = c.s_a - me.arc;
        if (df <= 2.5 || df > cfg_.conflict_horizon) continue;  // committed or far
        const double dw = c.s_b - other.arc;
        if (dw < -6.0) continue;  // already through
        bool yield = false;
        if (dw < 4.0) {
          yield = true;  // occupying the conflict
        } else {
          const double tf = df / std::max(me.speed, 0.5);
          const double tw = dw / std::max(other.speed, 0.5);
          const double margin = cfg_.conflict_tie_window;
          if (tw > tf + margin)
            yield = false;  // clearly first
          else if (tf > tw + margin)
            yield = true;  // clearly second
          else
            yield = yields_to(me, other);
        }
        if (yield) consider(std::max(df - 3.0, 0.1), 0.0);  // stop short of the conflict
      }
    }

    IdmParams p = cfg_.idm;
    p.v0 = me.v0;
    if (!found) return idm_acceleration_raw(me.speed, std::nullopt, 0.0, p);
    // near-contact gaps are floored; the squared interaction term then
    // commands maximum braking
    return idm_acceleration_raw(me.speed, std::max(best_gap, 0.1), me.speed - leader_speed, p);
  }

  ScenarioConfig cfg_;
  IntersectionGeometry geom_;
  std::vector<Route> routes_;
  std::vector<std::vector<ConflictPoint>> conflicts_;  // indexed a * n_routes + b
  std::vector<VehicleState> vehicles_;
  std::vector<double> accels_;
  std::mt19937_64 respawn_rng_;
  bool terminal_ = false;
  int steps_ = 0;
  double ego_speed_accum_ = 0.0;
  long ego_speed_samples_ = 0;
};

/// Convenience spec-level entry point.
inline World build_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  return World(cfg, seed);
}

}  // namespace cgrl::sim
