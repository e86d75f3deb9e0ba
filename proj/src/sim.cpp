#include "lanerl/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace lanerl::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

/// Steering from a proportional pursuit of target_y: the heading reference
/// points at a spot ahead scaled by the position gain, the steering command
/// closes the heading error.
double pursuit_steering(const VehicleState& v, double target_y, const ControlGains& g) {
  const double heading_ref =
      std::atan(g.position_gain * (target_y - v.y) / std::max(v.speed(), 1.0));
  return clamp(g.heading_gain * (heading_ref - v.heading), -g.steer_max, g.steer_max);
}

/// Kinematic bicycle step, explicit Euler over dt. Position moves along the
/// old velocity, so straight driving advances x by exactly vx*dt.
void integrate(VehicleState& v, double accel, double steer, const RoadGeometry& geo, double dt,
               const ControlGains& g) {
  accel = clamp(accel, -g.accel_max, g.accel_max);
  steer = clamp(steer, -g.steer_max, g.steer_max);
  const double speed = v.speed();
  v.x += v.vx * dt;
  v.y += v.vy * dt;
  const double yaw_rate = speed / v.length * std::tan(steer);
  const double new_heading = v.heading + yaw_rate * dt;
  const double new_speed = clamp(speed + accel * dt, 0.0, 1.2 * geo.speed_limit);
  v.heading = new_heading;
  v.vx = new_speed * std::cos(new_heading);
  v.vy = new_speed * std::sin(new_heading);
  v.lane_index = lane_for_y(geo, v.y);
}

double bumper_gap(const VehicleState& follower, const VehicleState& leader) {
  return leader.x - follower.x - leader.length;
}

/// IDM acceleration of `follower` behind `leader` (nullptr = free road),
/// with the emergency-brake fallback for non-positive gaps.
double accel_following(const VehicleState& follower, const VehicleState* leader,
                       const IdmParams& idm) {
  double gap = kInf;
  double v_leader = 0.0;
  if (leader) {
    gap = bumper_gap(follower, *leader);
    v_leader = leader->vx;
    if (gap <= 0.0) return -idm.brake_hard;
  }
  return idm_acceleration(gap, follower.speed(), v_leader, follower.desired_speed, idm);
}

/// MOBIL lane selection for one SV, evaluated against the pre-step snapshot.
/// Returns the lane to track (possibly the current one).
int mobil_decide(const World& w, const VehicleState& me) {
  const MobilParams& mp = w.mobil;
  const VehicleState* cur_leader = nearest_front(w, me.lane_index, me.x, &me);
  const VehicleState* old_follower = nearest_rear(w, me.lane_index, me.x, &me);
  const double a_self_now = accel_following(me, cur_leader, w.idm);

  int best_lane = me.lane_index;
  double best_gain = mp.accel_threshold;
  for (int cand : {me.lane_index - 1, me.lane_index + 1}) {
    if (cand < 0 || cand >= w.geometry.lane_count) continue;
    const VehicleState* new_leader = nearest_front(w, cand, me.x, &me);
    const VehicleState* new_follower = nearest_rear(w, cand, me.x, &me);
    if (new_leader && bumper_gap(me, *new_leader) < mp.min_clearance) continue;
    if (new_follower && bumper_gap(*new_follower, me) < mp.min_clearance) continue;

    const double a_nf_new = new_follower ? accel_following(*new_follower, &me, w.idm) : 0.0;
    if (new_follower && a_nf_new < -mp.brake_safe) continue;

    const double a_self_new = accel_following(me, new_leader, w.idm);
    const double a_nf_now = new_follower ? accel_following(*new_follower, new_leader, w.idm) : 0.0;
    const double a_of_now = old_follower ? accel_following(*old_follower, &me, w.idm) : 0.0;
    const double a_of_new = old_follower ? accel_following(*old_follower, cur_leader, w.idm) : 0.0;

    const double gain = (a_self_new - a_self_now) +
                        mp.politeness * ((a_nf_new - a_nf_now) + (a_of_new - a_of_now));
    if (gain > best_gain) {
      best_gain = gain;
      best_lane = cand;
    }
  }
  return best_lane;
}

}  // namespace

double VehicleState::speed() const { return std::sqrt(vx * vx + vy * vy); }

double lane_center(const RoadGeometry& geo, int lane) { return (lane + 0.5) * geo.lane_width; }

int lane_for_y(const RoadGeometry& geo, double y) {
  const int lane = static_cast<int>(std::floor(y / geo.lane_width));
  return std::clamp(lane, 0, geo.lane_count - 1);
}

World spawn_scenario(std::uint64_t seed, const ScenarioConfig& config) {
  const RoadGeometry& geo = config.geometry;
  if (geo.lane_count < 2) throw ConfigError("lane_count must be >= 2");
  if (geo.lane_length <= 0 || geo.lane_width <= 0 || geo.speed_limit <= 0)
    throw ConfigError("road geometry must be positive");
  if (config.sv_count < 0) throw ConfigError("sv_count must be >= 0");
  if (!(config.spacing_min > 0) || config.spacing_max < config.spacing_min)
    throw ConfigError("invalid spacing range");
  if (config.sv_speed_max < config.sv_speed_min || config.sv_speed_min < 0)
    throw ConfigError("invalid SV speed range");
  if (config.sv_count * config.spacing_min > geo.lane_count * geo.lane_length)
    throw ConfigError("spacing range cannot fit " + std::to_string(config.sv_count) +
                      " vehicles on the road");

  World w;
  w.geometry = geo;
  w.dt = config.dt;
  w.horizon = config.horizon;
  w.idm = config.idm;
  w.mobil = config.mobil;
  w.gains = config.gains;
  w.rng = Rng(seed);

  w.ego.x = w.rng.uniform(config.ego_x_min, config.ego_x_max);
  w.ego.y = lane_center(geo, 0);
  w.ego.vx = config.ego_speed;
  w.ego.vy = 0.0;
  w.ego.heading = 0.0;
  w.ego.lane_index = 0;
  w.ego.target_lane = 0;
  w.ego.desired_speed = geo.speed_limit;
  w.ego_target_speed = config.ego_speed;

  w.target_x = w.ego.x + config.target_ahead;
  w.target_lane = geo.lane_count - 1;

  // Per-lane cursors advance by a random gap per placed vehicle; the ego
  // keeps a clear bubble in its own lane.
  std::vector<double> cursor(geo.lane_count, w.ego.x - config.spawn_back);
  w.svs.reserve(config.sv_count);
  for (int i = 0; i < config.sv_count; ++i) {
    const int lane = w.rng.uniform_int(0, geo.lane_count - 1);
    cursor[lane] += w.rng.uniform(config.spacing_min, config.spacing_max);
    while (lane == w.ego.lane_index && std::abs(cursor[lane] - w.ego.x) < config.ego_clearance)
      cursor[lane] += w.rng.uniform(config.spacing_min, config.spacing_max);
    if (cursor[lane] > geo.lane_length)
      throw ConfigError("vehicle " + std::to_string(i) + " spawned past the road end");

    VehicleState sv;
    sv.x = cursor[lane];
    sv.y = lane_center(geo, lane);
    const double speed = w.rng.uniform(config.sv_speed_min, config.sv_speed_max);
    sv.vx = speed;
    sv.vy = 0.0;
    sv.heading = 0.0;
    sv.lane_index = lane;
    sv.target_lane = lane;
    sv.desired_speed = std::min(speed, geo.speed_limit);
    w.svs.push_back(sv);
  }
  return w;
}

MetaActionResult meta_action_controller(const VehicleState& v, Action action, int target_lane,
                                        double target_speed, const RoadGeometry& geo,
                                        const ControlGains& gains) {
  MetaActionResult r;
  r.target_lane = target_lane;
  r.target_speed = target_speed;
  switch (action) {
    case Action::kLeftLaneChange:
      if (v.lane_index > 0) r.target_lane = v.lane_index - 1;
      break;
    case Action::kRightLaneChange:
      if (v.lane_index < geo.lane_count - 1) r.target_lane = v.lane_index + 1;
      break;
    case Action::kAccelerate:
      r.target_speed = clamp(target_speed + 1.0, 0.0, geo.speed_limit);
      break;
    case Action::kDecelerate:
      r.target_speed = clamp(target_speed - 1.0, 0.0, geo.speed_limit);
      break;
    case Action::kIdle:
      break;
  }
  r.control.acceleration =
      clamp(gains.speed_gain * (r.target_speed - v.vx), -gains.accel_max, gains.accel_max);
  r.control.steering = pursuit_steering(v, lane_center(geo, r.target_lane), gains);
  return r;
}

double idm_acceleration(double gap, double v, double v_leader, double desired_speed,
                        const IdmParams& params) {
  if (gap <= 0.0) throw DomainError("IDM gap must be positive, got " + std::to_string(gap));
  const double free_flow = std::pow(v / desired_speed, params.exponent);
  const double s_star =
      params.min_spacing + v * params.time_headway +
      v * (v - v_leader) / (2.0 * std::sqrt(params.accel_max * params.brake_comfort));
  const double interaction = (s_star / gap) * (s_star / gap);
  const double a = params.accel_max * (1.0 - free_flow - interaction);
  return clamp(a, -params.brake_hard, params.accel_max);
}

void step_world(World& w, const LowLevelControl& ego_control) {
  // Lane-change decisions first, in index order and immediately visible:
  // a vehicle committing to a lane blocks later deciders from merging onto
  // the same spot in the same tick.
  for (VehicleState& sv : w.svs) {
    const bool centered =
        std::abs(sv.y - lane_center(w.geometry, sv.lane_index)) < w.gains.centered_tolerance;
    if (centered && sv.target_lane == sv.lane_index) sv.target_lane = mobil_decide(w, sv);
  }

  // Controls from the pre-step positions, then integrate everyone.
  struct SvControl {
    double accel;
    double steer;
  };
  std::vector<SvControl> controls(w.svs.size());
  for (std::size_t i = 0; i < w.svs.size(); ++i) {
    const VehicleState& sv = w.svs[i];
    // Follow the more constraining of the current and the target lane.
    double accel = accel_following(sv, nearest_front(w, sv.lane_index, sv.x, &sv), w.idm);
    if (sv.target_lane != sv.lane_index)
      accel =
          std::min(accel, accel_following(sv, nearest_front(w, sv.target_lane, sv.x, &sv), w.idm));
    controls[i] = {accel, pursuit_steering(sv, lane_center(w.geometry, sv.target_lane), w.gains)};
  }

  for (std::size_t i = 0; i < w.svs.size(); ++i)
    integrate(w.svs[i], controls[i].accel, controls[i].steer, w.geometry, w.dt, w.gains);
  integrate(w.ego, ego_control.acceleration, ego_control.steering, w.geometry, w.dt, w.gains);
  w.sim_time += w.dt;
}

bool check_collision(const VehicleState& a, const VehicleState& b) {
  // Separating axis test on the two oriented rectangles.
  const auto corners = [](const VehicleState& v) {
    const double c = std::cos(v.heading), s = std::sin(v.heading);
    const double hl = 0.5 * v.length, hw = 0.5 * v.width;
    std::array<std::array<double, 2>, 4> out;
    int k = 0;
    for (double dx : {+hl, -hl})
      for (double dy : {+hw, -hw})
        out[k++] = {v.x + dx * c - dy * s, v.y + dx * s + dy * c};
    return out;
  };
  const auto ca = corners(a);
  const auto cb = corners(b);
  const std::array<std::array<double, 2>, 4> axes = {{
      {std::cos(a.heading), std::sin(a.heading)},
      {-std::sin(a.heading), std::cos(a.heading)},
      {std::cos(b.heading), std::sin(b.heading)},
      {-std::sin(b.heading), std::cos(b.heading)},
  }};
  for (const auto& ax : axes) {
    double min_a = kInf, max_a = -kInf, min_b = kInf, max_b = -kInf;
    for (const auto& p : ca) {
      const double proj = p[0] * ax[0] + p[1] * ax[1];
      min_a = std::min(min_a, proj);
      max_a = std::max(max_a, proj);
    }
    for (const auto& p : cb) {
      const double proj = p[0] * ax[0] + p[1] * ax[1];
      min_b = std::min(min_b, proj);
      max_b = std::max(max_b, proj);
    }
    if (max_a < min_b || max_b < min_a) return false;
  }
  return true;
}

double ttc(const VehicleState& follower, const VehicleState& leader) {
  if (leader.x < follower.x) throw DomainError("ttc leader is behind the follower");
  const double closing = follower.vx - leader.vx;
  if (closing <= 0.0) return kInf;
  const double dx = follower.x - leader.x;
  const double dy = follower.y - leader.y;
  return std::sqrt(dx * dx + dy * dy) / closing;
}

namespace {

// A vehicle occupies its physical lane and, mid-maneuver, the lane it has
// committed to.
bool occupies_lane(const VehicleState& v, int lane) {
  return v.lane_index == lane || v.target_lane == lane;
}

}  // namespace

const VehicleState* nearest_front(const World& w, int lane, double x, const VehicleState* skip) {
  const VehicleState* best = nullptr;
  const auto consider = [&](const VehicleState& v) {
    if (&v == skip || !occupies_lane(v, lane) || v.x < x) return;
    if (!best || v.x < best->x) best = &v;
  };
  consider(w.ego);
  for (const VehicleState& sv : w.svs) consider(sv);
  return best;
}

const VehicleState* nearest_rear(const World& w, int lane, double x, const VehicleState* skip) {
  const VehicleState* best = nullptr;
  const auto consider = [&](const VehicleState& v) {
    if (&v == skip || !occupies_lane(v, lane) || v.x >= x) return;
    if (!best || v.x > best->x) best = &v;
  };
  consider(w.ego);
  for (const VehicleState& sv : w.svs) consider(sv);
  return best;
}

bool any_sv_collision(const World& w) {
  for (std::size_t i = 0; i < w.svs.size(); ++i)
    for (std::size_t j = i + 1; j < w.svs.size(); ++j)
      if (check_collision(w.svs[i], w.svs[j])) return true;
  return false;
}

}  // namespace lanerl::sim
