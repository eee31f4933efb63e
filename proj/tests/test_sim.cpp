#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <random>

#include "cgrl/sim/geometry.hpp"
#include "cgrl/sim/idm.hpp"
#include "cgrl/sim/world.hpp"

using namespace cgrl;
using namespace cgrl::sim;

namespace {

ScenarioConfig desk_config(std::size_t n_hv) {
  ScenarioConfig cfg;
  cfg.n_human_vehicles = n_hv;
  return cfg;
}

/// Samples box `a` on a 1 cm grid and reports whether any sample lies inside
/// box `b` (point-in-oriented-rectangle test).
bool sampled_overlap(const OrientedBox& a, const OrientedBox& b) {
  const double cb = std::cos(b.heading), sb = std::sin(b.heading);
  auto inside_b = [&](Vec2 p) {
    const Vec2 d = p - b.center;
    const double u = d.x * cb + d.y * sb;
    const double v = -d.x * sb + d.y * cb;
    return std::fabs(u) <= b.length * 0.5 && std::fabs(v) <= b.width * 0.5;
  };
  const double ca = std::cos(a.heading), sa = std::sin(a.heading);
  for (double u = -a.length * 0.5; u <= a.length * 0.5; u += 0.01)
    for (double v = -a.width * 0.5; v <= a.width * 0.5; v += 0.01) {
      const Vec2 p{a.center.x + u * ca - v * sa, a.center.y + u * sa + v * ca};
      if (inside_b(p)) return true;
    }
  return false;
}

}  // namespace

TEST_CASE("idm free-road values from the parameter table") {
  IdmParams p;  // table defaults, v0 overridden per check
  p.v0 = 8.0;
  CHECK(idm_acceleration_raw(0.0, std::nullopt, 0.0, p) == Catch::Approx(6.0));
  CHECK(idm_acceleration_raw(p.v0, std::nullopt, 0.0, p) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("idm direct substitution case") {
  IdmParams p;
  p.v0 = 10.0;
  // s* = 5 + 5*1.5 = 12.5, a = 6 (1 - 0.5^4 - (12.5/20)^2) = 3.28125
  CHECK(idm_acceleration_raw(5.0, 20.0, 0.0, p) == Catch::Approx(3.28125));
}

TEST_CASE("idm rejects non-positive gap") {
  IdmParams p;
  CHECK_THROWS_AS(idm_acceleration_raw(3.0, 0.0, 0.0, p), DomainError);
  CHECK_THROWS_AS(idm_acceleration_raw(3.0, -1.0, 0.0, p), DomainError);
}

TEST_CASE("idm free-road acceleration strictly decreases up to v0") {
  IdmParams p;
  p.v0 = 9.0;
  double prev = idm_acceleration_raw(0.0, std::nullopt, 0.0, p);
  for (double v = 0.25; v <= p.v0 + 1e-12; v += 0.25) {
    const double a = idm_acceleration_raw(v, std::nullopt, 0.0, p);
    CHECK(a < prev);
    prev = a;
  }
}

TEST_CASE("idm follower behind a steady leader never collides over 60 s") {
  IdmParams p;
  p.v0 = 9.0;
  const double dt = 1.0 / 15.0;
  const double leader_speed = 5.0;
  for (double gap0 : {5.0, 10.0, 20.0, 40.0}) {
    double xf = 0.0, vf = 9.0;
    double xl = gap0 + kVehicleLength;
    for (int step = 0; step < 900; ++step) {
      const double gap = xl - xf - kVehicleLength;
      REQUIRE(gap > 0.0);
      const double a = idm_acceleration_raw(vf, gap, vf - leader_speed, p);
      vf = std::max(0.0, vf + a * dt);
      xf += vf * dt;
      xl += leader_speed * dt;
    }
  }
}

TEST_CASE("collision_check identity and far-apart cases") {
  VehicleState a, b;
  a.present = b.present = true;
  CHECK(collision_check(a, b));
  b.x = 100.0;
  CHECK_FALSE(collision_check(a, b));
  b.present = false;
  CHECK_THROWS_AS(collision_check(a, b), StateError);
}

TEST_CASE("collision_check matches a point-sampling oracle near corner contact") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  for (int trial = 0; trial < 30; ++trial) {
    OrientedBox a{{0.0, 0.0}, ang(rng), 5.0, 2.0};
    OrientedBox b{{0.0, 0.0}, ang(rng), 5.0, 2.0};
    // place b so its corner is near a's corner, then nudge along the diagonal
    const Vec2 corner_a = a.corners()[0];
    const Vec2 corner_b = b.corners()[2];
    for (double nudge : {-0.05, 0.05}) {
      const Vec2 dir{std::cos(a.heading + 0.4), std::sin(a.heading + 0.4)};
      b.center = corner_a - corner_b + b.center + dir * nudge;
      const bool sat = boxes_overlap(a, b);
      const bool sampled = sampled_overlap(b, a) || sampled_overlap(a, b);
      CHECK(sat == sampled);
      b.center = {0.0, 0.0};
    }
  }
}

TEST_CASE("build_scenario with zero traffic places only the ego") {
  World w(desk_config(0), 7);
  REQUIRE(w.vehicles().size() == 1);
  CHECK(w.ego().is_ego);
  CHECK(w.ego().present);
  // fixed south-approach spawn: on the southbound entry lane, heading north
  CHECK(w.ego().x == Catch::Approx(2.0));
  CHECK(w.ego().y == Catch::Approx(-30.0));
  CHECK(w.ego().heading == Catch::Approx(M_PI / 2.0));
}

TEST_CASE("build_scenario is deterministic for a fixed seed") {
  World a(desk_config(8), 42), b(desk_config(8), 42);
  REQUIRE(a.vehicles().size() == b.vehicles().size());
  for (std::size_t i = 0; i < a.vehicles().size(); ++i) {
    CHECK(a.vehicles()[i].x == b.vehicles()[i].x);
    CHECK(a.vehicles()[i].y == b.vehicles()[i].y);
    CHECK(a.vehicles()[i].speed == b.vehicles()[i].speed);
    CHECK(a.vehicles()[i].heading == b.vehicles()[i].heading);
  }
  World c(desk_config(8), 43);
  bool any_diff = false;
  for (std::size_t i = 1; i < a.vehicles().size(); ++i)
    any_diff = any_diff || a.vehicles()[i].x != c.vehicles()[i].x ||
               a.vehicles()[i].y != c.vehicles()[i].y;
  CHECK(any_diff);
}

TEST_CASE("full traffic spawns 16 present vehicles with pairwise separation") {
  for (std::uint64_t seed : {0ull, 1ull, 2ull, 3ull, 4ull}) {
    World w(desk_config(15), seed);
    REQUIRE(w.vehicles().size() == 16);
    const double min_gap = w.config().idm.s0 + kVehicleLength;
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(w.vehicles()[i].present);
      for (std::size_t j = i + 1; j < 16; ++j) {
        const VehicleState& vi = w.vehicles()[i];
        const VehicleState& vj = w.vehicles()[j];
        CHECK_FALSE(collision_check(vi, vj));
        double lat = 0.0;
        const double s_on_i = w.route_of(vi).project({vj.x, vj.y}, &lat);
        if (lat < 1.0) CHECK(std::fabs(s_on_i - vi.arc) >= min_gap - 1e-9);
      }
    }
  }
}

TEST_CASE("step keeps speed constant under the constant action") {
  ScenarioConfig cfg = desk_config(0);
  cfg.ego_spawn_speed = 8.0;
  World w(cfg, 1);
  StepResult r = w.step(EgoAction::kConstant);
  CHECK(w.ego().speed == 8.0);
  CHECK_FALSE(r.terminal);
}

TEST_CASE("step integrates acceleration kinematics over one second") {
  ScenarioConfig cfg = desk_config(0);
  cfg.ego_spawn_speed = 5.0;
  World w(cfg, 1);
  w.step(EgoAction::kAccelerated);
  CHECK(w.ego().speed == Catch::Approx(8.0).margin(1e-9));
  World w2(cfg, 1);
  w2.step(EgoAction::kDecelerated);
  CHECK(w2.ego().speed == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("ego speed clips to zero and to the cap") {
  ScenarioConfig cfg = desk_config(0);
  cfg.ego_spawn_speed = 1.0;
  World w(cfg, 1);
  w.step(EgoAction::kDecelerated);
  CHECK(w.ego().speed == 0.0);
  cfg.ego_spawn_speed = 9.5;
  World w2(cfg, 1);
  w2.step(EgoAction::kAccelerated);
  CHECK(w2.ego().speed == Catch::Approx(cfg.ego_speed_cap));
}

TEST_CASE("overlapping vehicles collide with terminal penalty") {
  ScenarioConfig cfg = desk_config(1);
  World w(cfg, 5);
  // park the human vehicle directly on the ego's route, one meter ahead
  VehicleState& hv = w.mutable_vehicles()[1];
  hv.route_spec = w.ego().route_spec;
  hv.arc = w.ego().arc + 1.0;
  hv.speed = 0.0;
  StepResult r = w.step(EgoAction::kConstant);
  CHECK(r.flags.collided);
  CHECK(r.terminal);
  CHECK(r.components.collision == -2.0);
  CHECK_THROWS_AS(w.step(EgoAction::kConstant), StateError);
}

TEST_CASE("episodes terminate within the horizon for any policy") {
  ScenarioConfig cfg = desk_config(5);
  cfg.horizon = 40;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> act(0, 2);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    World w(cfg, seed);
    int steps = 0;
    while (!w.terminal()) {
      w.step(static_cast<EgoAction>(act(rng)));
      ++steps;
      REQUIRE(steps <= cfg.horizon);
    }
    CHECK(steps <= cfg.horizon);
  }
}

TEST_CASE("arrival at the route end sets the task-complete reward") {
  ScenarioConfig cfg = desk_config(0);
  cfg.ego_spawn_speed = 10.0;
  cfg.horizon = 40;
  World w(cfg, 1);
  StepResult last;
  while (!w.terminal()) last = w.step(EgoAction::kAccelerated);
  CHECK(last.flags.arrived);
  CHECK(last.components.task_complete == 1.0);
  CHECK(last.reward > 1.0);
}

TEST_CASE("reward composition follows the multiplicative on-road gate") {
  ScenarioConfig cfg = desk_config(0);
  StepFlags flags;
  flags.off_road = true;
  flags.collided = true;
  CHECK(reward(flags, 9.0, cfg).first == 0.0);

  StepFlags collide;
  collide.collided = true;
  auto [total, comps] = reward(collide, 7.0, cfg);
  CHECK(comps.high_speed == Catch::Approx(0.0).margin(1e-12));
  CHECK(total == Catch::Approx(-2.0));

  StepFlags arrive;
  arrive.arrived = true;
  auto [total2, comps2] = reward(arrive, 9.0, cfg);
  CHECK(comps2.high_speed == Catch::Approx(1.0));
  CHECK(total2 == Catch::Approx(2.0));
}

TEST_CASE("reward speed term clips to the map range") {
  ScenarioConfig cfg = desk_config(0);
  StepFlags none;
  CHECK(reward(none, 0.0, cfg).second.high_speed == 0.0);
  CHECK(reward(none, 100.0, cfg).second.high_speed == 1.0);
  CHECK(reward(none, 8.0, cfg).second.high_speed == Catch::Approx(0.5));
}

TEST_CASE("reward total stays within [-2, 2] under unit weights") {
  ScenarioConfig cfg = desk_config(0);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> sp(0.0, 12.0);
  std::bernoulli_distribution bit(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    StepFlags f;
    f.collided = bit(rng);
    f.arrived = !f.collided && bit(rng);
    f.off_road = bit(rng);
    const double total = reward(f, sp(rng), cfg).first;
    CHECK(total >= -2.0);
    CHECK(total <= 2.0);
  }
}

TEST_CASE("same seed and action sequence give bit-identical trajectories") {
  ScenarioConfig cfg = desk_config(6);
  auto run = [&](std::uint64_t seed) {
    World w(cfg, seed);
    std::vector<double> record;
    std::mt19937_64 arng(99);
    std::uniform_int_distribution<int> act(0, 2);
    while (!w.terminal()) {
      StepResult r = w.step(static_cast<EgoAction>(act(arng)));
      record.push_back(r.reward);
      for (const VehicleState& v : w.vehicles()) {
        record.push_back(v.x);
        record.push_back(v.y);
        record.push_back(v.speed);
        record.push_back(v.heading);
        record.push_back(v.arc);
        record.push_back(v.present ? 1.0 : 0.0);
      }
    }
    return record;
  };
  auto r1 = run(77), r2 = run(77);
  REQUIRE(r1.size() == r2.size());
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("config validation rejects inconsistent frequencies") {
  ScenarioConfig cfg = desk_config(0);
  cfg.sim_frequency = 10.0;
  cfg.policy_frequency = 3.0;
  CHECK_THROWS_AS(World(cfg, 1), ConfigError);
  cfg = desk_config(0);
  cfg.horizon = 0;
  CHECK_THROWS_AS(World(cfg, 1), ConfigError);
  cfg = desk_config(20);
  cfg.n_max = 16;
  CHECK_THROWS_AS(World(cfg, 1), ConfigError);
}

TEST_CASE("route geometry is continuous and reaches the exit arm") {
  IntersectionGeometry geom;
  for (int entry = 0; entry < 4; ++entry)
    for (int t = 0; t < 3; ++t) {
      const Route route = geom.route(entry, static_cast<Turn>(t));
      // adjacent segments join within 1e-9
      for (std::size_t s = 1; s < route.segments.size(); ++s) {
        const Pose end = route.segments[s - 1].pose_at(route.segments[s - 1].length);
        const Pose start = route.segments[s].pose_at(0.0);
        CHECK((end.position - start.position).norm() < 1e-9);
        CHECK(std::fabs(wrap_angle(end.heading - start.heading)) < 1e-9);
      }
      // endpoint lies 30 m out on some axis
      const Pose fin = route.pose_at(route.total);
      const double r = std::max(std::fabs(fin.position.x), std::fabs(fin.position.y));
      CHECK(r == Catch::Approx(30.0));
    }
}

TEST_CASE("human vehicles yield to a stopped ego on their lane") {
  ScenarioConfig cfg = desk_config(1);
  cfg.ego_spawn_speed = 0.0;
  World w(cfg, 11);
  // ego parked 20 m up the lane; HV approaches from behind on the same route
  VehicleState& ego = w.mutable_vehicles()[0];
  ego.arc = 20.0;
  VehicleState& hv = w.mutable_vehicles()[1];
  hv.route_spec = ego.route_spec;
  hv.arc = 0.0;
  hv.speed = 8.0;
  const Pose pe = w.route_of(ego).pose_at(ego.arc);
  ego.x = pe.position.x;
  ego.y = pe.position.y;
  const Pose ph = w.route_of(hv).pose_at(hv.arc);
  hv.x = ph.position.x;
  hv.y = ph.position.y;
  for (int i = 0; i < 10 && !w.terminal(); ++i) w.step(EgoAction::kConstant);
  // follower settled behind the parked ego without collision
  CHECK_FALSE(w.terminal());
  CHECK(w.vehicles()[1].speed < 1.0);
}
