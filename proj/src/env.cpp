#include "lanerl/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lanerl::env {

namespace {

double squash(double value, double extent) {
  return std::clamp(value / extent, -1.0, 1.0);
}

}  // namespace

int observation_size(const ObservationConfig& cfg) { return 5 * (cfg.k_nearest + 1) + 4; }

ObservationVector encode_observation(const sim::World& w, const ObservationConfig& cfg) {
  const sim::RoadGeometry& geo = w.geometry;
  ObservationVector obs;
  obs.reserve(observation_size(cfg));

  const sim::VehicleState& ego = w.ego;
  obs.push_back(squash(ego.x, geo.lane_length));
  obs.push_back(squash(ego.y, geo.lane_count * geo.lane_width));
  obs.push_back(squash(ego.vx, cfg.speed_extent));
  obs.push_back(squash(ego.vy, cfg.speed_extent));
  obs.push_back(squash(ego.heading, cfg.heading_extent));

  // Nearest K SVs by Euclidean distance, ties broken by index.
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(w.svs.size());
  for (std::size_t i = 0; i < w.svs.size(); ++i) {
    const double dx = w.svs[i].x - ego.x;
    const double dy = w.svs[i].y - ego.y;
    order.emplace_back(dx * dx + dy * dy, i);
  }
  std::sort(order.begin(), order.end());

  for (int k = 0; k < cfg.k_nearest; ++k) {
    if (k < static_cast<int>(order.size())) {
      const sim::VehicleState& sv = w.svs[order[k].second];
      obs.push_back(squash(sv.x - ego.x, cfg.rel_position_extent));
      obs.push_back(squash(sv.y - ego.y, cfg.rel_position_extent));
      obs.push_back(squash(sv.vx - ego.vx, cfg.speed_extent));
      obs.push_back(squash(sv.vy - ego.vy, cfg.speed_extent));
      obs.push_back(squash(sv.heading, cfg.heading_extent));
    } else {
      for (int j = 0; j < 5; ++j) obs.push_back(0.0);
    }
  }

  const double dx = w.target_x - ego.x;
  const double dy = sim::lane_center(geo, w.target_lane) - ego.y;
  obs.push_back(squash(std::sqrt(dx * dx + dy * dy), cfg.target_distance_extent));

  // Lane one-hot relative to the ego; differences beyond one lane map to the
  // corresponding extreme entry.
  const int diff = w.target_lane - ego.lane_index;
  obs.push_back(diff < 0 ? 1.0 : 0.0);
  obs.push_back(diff == 0 ? 1.0 : 0.0);
  obs.push_back(diff > 0 ? 1.0 : 0.0);
  return obs;
}

Outcome classify_terminal(const sim::World& w) {
  for (const sim::VehicleState& sv : w.svs)
    if (sim::check_collision(w.ego, sv)) return Outcome::kCollision;
  if (w.ego.x >= w.target_x && w.ego.lane_index == w.target_lane) return Outcome::kSuccess;
  if (w.sim_time >= w.horizon) return Outcome::kTimeout;
  return Outcome::kRunning;
}

RewardBreakdown compute_reward(const sim::World& after, const RewardConfig& cfg) {
  RewardBreakdown r;

  switch (classify_terminal(after)) {
    case Outcome::kSuccess: r.mission = cfg.w_success; break;
    case Outcome::kCollision: r.mission = -cfg.w_failure; break;
    default: break;
  }

  const double heading = after.ego.heading;
  if (heading > cfg.heading_eps) r.lanechange = cfg.w_right;
  else if (heading < -cfg.heading_eps) r.lanechange = -cfg.w_left;

  const double v_ego = after.ego.speed();
  if (v_ego >= cfg.v_min && v_ego <= cfg.v_max)
    r.speed = cfg.w_speed * (v_ego - cfg.v_min) / (cfg.v_max - cfg.v_min);

  const sim::VehicleState* front =
      sim::nearest_front(after, after.ego.lane_index, after.ego.x, &after.ego);
  if (front && v_ego > 0.0) {
    const double dx = after.ego.x - front->x;
    const double dy = after.ego.y - front->y;
    const double distance = std::sqrt(dx * dx + dy * dy);
    if (distance / v_ego < 1.0) {
      const double t = sim::ttc(after.ego, *front);
      if (std::isfinite(t)) r.safety = -cfg.w_safety / std::max(0.1, t);
    }
  }
  return r;
}

Environment::Environment(sim::ScenarioConfig scenario, RewardConfig reward, ObservationConfig obs)
    : scenario_(std::move(scenario)), reward_cfg_(reward), obs_cfg_(obs) {}

ObservationVector Environment::reset(std::uint64_t seed) {
  world_ = sim::spawn_scenario(seed, scenario_);
  started_ = true;
  done_ = false;
  return encode_observation(world_, obs_cfg_);
}

StepOutcome Environment::step(Action action) {
  if (!started_) throw StateError("step before reset");
  if (done_) throw StateError("step on a terminated episode");

  const sim::MetaActionResult meta = sim::meta_action_controller(
      world_.ego, action, world_.ego.target_lane, world_.ego_target_speed, world_.geometry,
      world_.gains);
  world_.ego.target_lane = meta.target_lane;
  world_.ego_target_speed = meta.target_speed;
  sim::step_world(world_, meta.control);

  StepOutcome out;
  out.outcome = classify_terminal(world_);
  out.done = out.outcome != Outcome::kRunning;
  out.breakdown = compute_reward(world_, reward_cfg_);
  out.reward = out.breakdown.total();
  out.observation = encode_observation(world_, obs_cfg_);
  done_ = out.done;
  return out;
}

const sim::World& Environment::world() const {
  if (!started_) throw StateError("world() before reset");
  return world_;
}

}  // namespace lanerl::env
