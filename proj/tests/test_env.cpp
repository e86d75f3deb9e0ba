#include <cmath>
#include <doctest.h>

#include "lanerl/env.hpp"

using namespace lanerl;
using namespace lanerl::env;

namespace {

sim::ScenarioConfig empty_road() {
  sim::ScenarioConfig cfg;
  cfg.sv_count = 0;
  return cfg;
}

sim::VehicleState sv_at(const sim::RoadGeometry& geo, double x, int lane, double vx) {
  sim::VehicleState v;
  v.x = x;
  v.y = sim::lane_center(geo, lane);
  v.vx = vx;
  v.lane_index = lane;
  v.target_lane = lane;
  return v;
}

}  // namespace

TEST_CASE("observation: length, bounds, padding") {
  const ObservationConfig obs_cfg;  // K = 6
  CHECK(observation_size(obs_cfg) == 39);

  sim::World w = sim::spawn_scenario(3, empty_road());
  const ObservationVector obs = encode_observation(w, obs_cfg);
  REQUIRE(static_cast<int>(obs.size()) == 39);
  for (double v : obs) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  // no SVs: the 30 SV entries are zero padding
  for (int i = 5; i < 35; ++i) CHECK(obs[i] == 0.0);

  SUBCASE("bounds hold with dense traffic") {
    sim::ScenarioConfig cfg;
    cfg.sv_count = 30;
    sim::World crowded = sim::spawn_scenario(17, cfg);
    for (double v : encode_observation(crowded, obs_cfg)) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("observation: nearest-K selection is by distance") {
  const ObservationConfig obs_cfg;
  sim::World w = sim::spawn_scenario(3, empty_road());
  // 8 SVs at increasing distance; only the nearest 6 should appear
  for (int i = 0; i < 8; ++i)
    w.svs.push_back(sv_at(w.geometry, w.ego.x + 20.0 + 10.0 * i, 1, 22.0));
  const ObservationVector obs = encode_observation(w, obs_cfg);
  // the SV block starts at index 5; rel-x is normalized by 100
  for (int k = 0; k < 6; ++k) {
    const double rel_x = obs[5 + 5 * k] * 100.0;
    CHECK(rel_x == doctest::Approx(20.0 + 10.0 * k));
  }
}

TEST_CASE("observation: target lane one-hot") {
  const ObservationConfig obs_cfg;
  sim::World w = sim::spawn_scenario(3, empty_road());

  const auto onehot = [&](const sim::World& world) {
    const ObservationVector o = encode_observation(world, obs_cfg);
    return std::vector<double>{o[36], o[37], o[38]};
  };

  // ego in the leftmost lane, target rightmost: "right" entry
  CHECK(onehot(w) == std::vector<double>{0, 0, 1});

  w.ego.y = sim::lane_center(w.geometry, 3);
  w.ego.lane_index = 3;
  CHECK(onehot(w) == std::vector<double>{0, 1, 0});

  // target to the left of the ego maps to the left entry
  sim::World w2 = sim::spawn_scenario(4, empty_road());
  w2.target_lane = 0;
  w2.ego.y = sim::lane_center(w2.geometry, 2);
  w2.ego.lane_index = 2;
  CHECK(onehot(w2) == std::vector<double>{1, 0, 0});
}

TEST_CASE("classify_terminal") {
  sim::World w = sim::spawn_scenario(5, empty_road());

  CHECK(classify_terminal(w) == Outcome::kRunning);

  SUBCASE("success needs both the distance and the lane") {
    w.ego.x = w.target_x + 1.0;
    CHECK(classify_terminal(w) == Outcome::kRunning);  // wrong lane
    w.ego.y = sim::lane_center(w.geometry, 3);
    w.ego.lane_index = 3;
    CHECK(classify_terminal(w) == Outcome::kSuccess);
  }
  SUBCASE("timeout at the horizon") {
    w.sim_time = 20.0;
    CHECK(classify_terminal(w) == Outcome::kTimeout);
  }
  SUBCASE("collision wins every tie") {
    w.sim_time = 20.0;
    w.ego.x = w.target_x + 1.0;
    w.ego.y = sim::lane_center(w.geometry, 3);
    w.ego.lane_index = 3;
    w.svs.push_back(w.ego);  // overlapping vehicle
    CHECK(classify_terminal(w) == Outcome::kCollision);
  }
}

TEST_CASE("reward terms") {
  const RewardConfig rc;
  sim::World w = sim::spawn_scenario(6, empty_road());

  SUBCASE("collision step carries the failure term") {
    w.svs.push_back(w.ego);
    const RewardBreakdown r = compute_reward(w, rc);
    CHECK(r.mission == -rc.w_failure);
  }
  SUBCASE("success step carries the success term") {
    w.ego.x = w.target_x + 1.0;
    w.ego.y = sim::lane_center(w.geometry, 3);
    w.ego.lane_index = 3;
    CHECK(compute_reward(w, rc).mission == rc.w_success);
  }
  SUBCASE("timeout carries no mission term") {
    w.sim_time = 20.0;
    CHECK(compute_reward(w, rc).mission == 0.0);
  }
  SUBCASE("speed ramp endpoints") {
    w.ego.vx = rc.v_max;
    CHECK(compute_reward(w, rc).speed == doctest::Approx(rc.w_speed));
    w.ego.vx = rc.v_min;
    CHECK(compute_reward(w, rc).speed == doctest::Approx(0.0));
    w.ego.vx = rc.v_min - 0.5;
    CHECK(compute_reward(w, rc).speed == 0.0);
  }
  SUBCASE("speed reward is non-decreasing on [v_min, v_max] and zero outside") {
    double prev = -1.0;
    for (double v = rc.v_min; v <= rc.v_max; v += 0.5) {
      w.ego.vx = v;
      const double s = compute_reward(w, rc).speed;
      CHECK(s >= prev);
      prev = s;
    }
    w.ego.vx = rc.v_max + 0.5;
    CHECK(compute_reward(w, rc).speed == 0.0);
  }
  SUBCASE("heading term pays rightward motion and charges leftward") {
    w.ego.heading = 0.05;
    CHECK(compute_reward(w, rc).lanechange == rc.w_right);
    w.ego.heading = -0.05;
    CHECK(compute_reward(w, rc).lanechange == -rc.w_left);
    w.ego.heading = 0.01;  // inside the epsilon band
    CHECK(compute_reward(w, rc).lanechange == 0.0);
  }
  SUBCASE("safety term: hand-evaluated gate and magnitude") {
    // front gap 15 m, ego 20 m/s, front 15 m/s: gate 15/20 < 1, TTC = 3
    w.ego.vx = 20.0;
    w.svs.push_back(sv_at(w.geometry, w.ego.x + 15.0, 0, 15.0));
    const RewardBreakdown r = compute_reward(w, rc);
    CHECK(r.safety == doctest::Approx(-rc.w_safety / 3.0));
  }
  SUBCASE("safety term is zero when not closing") {
    w.ego.vx = 20.0;
    w.svs.push_back(sv_at(w.geometry, w.ego.x + 15.0, 0, 25.0));
    CHECK(compute_reward(w, rc).safety == 0.0);
  }
  SUBCASE("safety term is zero outside the one-second gate") {
    w.ego.vx = 20.0;
    w.svs.push_back(sv_at(w.geometry, w.ego.x + 25.0, 0, 15.0));
    CHECK(compute_reward(w, rc).safety == 0.0);
  }
  SUBCASE("safety term is never positive under traffic") {
    sim::ScenarioConfig cfg;
    cfg.sv_count = 30;
    Environment env(cfg, rc, ObservationConfig{});
    env.reset(19);
    for (int i = 0; i < 100 && !env.done(); ++i) {
      const StepOutcome out = env.step(Action::kAccelerate);
      CHECK(out.breakdown.safety <= 0.0);
    }
  }
}

TEST_CASE("environment episode interface") {
  Environment env(empty_road(), RewardConfig{}, ObservationConfig{});

  SUBCASE("step before reset is a state error") {
    CHECK_THROWS_AS(env.step(Action::kIdle), StateError);
  }

  SUBCASE("reset determinism") {
    const ObservationVector a = env.reset(3);
    const ObservationVector b = env.reset(3);
    CHECK(a == b);
  }

  SUBCASE("idle on an empty road times out at step 400") {
    env.reset(3);
    int steps = 0;
    StepOutcome out;
    while (!env.done()) {
      out = env.step(Action::kIdle);
      ++steps;
      REQUIRE(steps <= 400);
    }
    CHECK(steps == 400);  // 20 s / 0.05 s
    CHECK(out.outcome == Outcome::kTimeout);
    CHECK_THROWS_AS(env.step(Action::kIdle), StateError);
  }

  SUBCASE("reward equals the sum of its breakdown every step") {
    sim::ScenarioConfig cfg;
    cfg.sv_count = 15;
    Environment busy(cfg, RewardConfig{}, ObservationConfig{});
    busy.reset(21);
    Rng rng(5);
    while (!busy.done()) {
      const StepOutcome out = busy.step(action_from_index(rng.uniform_int(0, 4)));
      CHECK(out.reward == out.breakdown.total());
      CHECK(out.done == (out.outcome != Outcome::kRunning));
    }
  }

  SUBCASE("mission success pays w_success and ends the episode") {
    env.reset(8);
    bool saw_success = false;
    for (int i = 0; i < 400 && !env.done(); ++i) {
      const sim::World& w = env.world();
      const Action a = (w.ego.lane_index < 3 || w.ego.target_lane < 3)
                           ? Action::kRightLaneChange
                           : Action::kAccelerate;
      const StepOutcome out = env.step(a);
      if (out.done) {
        CHECK(out.outcome == Outcome::kSuccess);
        CHECK(out.breakdown.mission == RewardConfig{}.w_success);
        saw_success = true;
      }
    }
    CHECK(saw_success);
  }
}
