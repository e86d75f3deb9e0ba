#pragma once

#include <optional>
#include <vector>

#include "lanerl/core.hpp"
#include "lanerl/rng.hpp"

namespace lanerl::sim {

struct RoadGeometry {
  int lane_count = 4;
  double lane_length = 1000.0;  // m
  double lane_width = 4.0;      // m
  double speed_limit = 30.0;    // m/s
};

/// Center y of a lane. Lane 0 is the leftmost; y grows toward the rightmost lane.
double lane_center(const RoadGeometry& geo, int lane);

/// Lane index the lateral position y falls in, clamped to the road.
int lane_for_y(const RoadGeometry& geo, double y);

/// Pose and velocity of one vehicle in world coordinates, plus the per-vehicle
/// control state the simulation needs (lateral target lane, cruise speed).
struct VehicleState {
  double x = 0.0;        // m, longitudinal, increasing toward the target
  double y = 0.0;        // m, lateral, increasing toward the rightmost lane
  double vx = 0.0;       // m/s
  double vy = 0.0;       // m/s
  double heading = 0.0;  // rad, 0 along +x, positive toward +y
  double length = 5.0;   // m
  double width = 2.0;    // m
  int lane_index = 0;
  int target_lane = 0;          // lane the lateral controller tracks
  double desired_speed = 30.0;  // m/s, cruise speed for surrounding traffic

  double speed() const;
};

struct LowLevelControl {
  double acceleration = 0.0;  // m/s^2
  double steering = 0.0;      // rad
};

/// Car-following parameters for surrounding traffic. desired_speed comes from
/// the vehicle, everything else is shared.
struct IdmParams {
  double accel_max = 1.5;       // m/s^2
  double brake_comfort = 2.0;   // m/s^2
  double min_spacing = 2.0;     // m
  double time_headway = 1.5;    // s
  double exponent = 4.0;
  double brake_hard = 5.0;      // m/s^2, clamp floor
};

struct MobilParams {
  double politeness = 0.3;
  double accel_threshold = 0.2;  // m/s^2
  double brake_safe = 2.0;       // m/s^2
  double min_clearance = 1.0;    // m, bumper gap required in the target lane
};

/// Gains for the shared low-level controller (ego meta-actions and SV lane
/// tracking). Steering comes from a proportional pursuit of the target lane
/// center; acceleration from a proportional speed loop.
struct ControlGains {
  double speed_gain = 2.0;      // 1/s
  double position_gain = 1.0;   // 1/s, completes a lane change in ~2.5 s
  double heading_gain = 1.0;
  double steer_max = 0.5235987755982988;  // pi/6
  double accel_max = 5.0;       // m/s^2
  double centered_tolerance = 0.2;  // m, "in lane" threshold for SV decisions
};

struct ScenarioConfig {
  RoadGeometry geometry;
  int sv_count = 30;
  double spacing_min = 20.0;   // m, longitudinal gap between spawned SVs
  double spacing_max = 70.0;
  double sv_speed_min = 20.0;  // m/s
  double sv_speed_max = 25.0;
  double ego_speed = 20.0;     // m/s
  double ego_x_min = 50.0;     // m, spawn window for the ego
  double ego_x_max = 100.0;
  double spawn_back = 60.0;    // m, how far behind the ego traffic starts
  double ego_clearance = 15.0; // m, ego bubble kept free in its lane
  double target_ahead = 500.0; // m
  double dt = 0.05;            // s
  double horizon = 20.0;       // s, episode duration
  IdmParams idm;
  MobilParams mobil;
  ControlGains gains;
};

struct World {
  RoadGeometry geometry;
  VehicleState ego;
  std::vector<VehicleState> svs;
  double target_x = 0.0;
  int target_lane = 0;
  double sim_time = 0.0;
  double dt = 0.05;
  double ego_target_speed = 0.0;  // m/s, set by meta-actions
  double horizon = 20.0;
  IdmParams idm;
  MobilParams mobil;
  ControlGains gains;
  Rng rng;
};

/// Deterministic scenario sampler: ego at a random x in the leftmost lane,
/// sv_count vehicles lane-uniform with spacing in [spacing_min, spacing_max],
/// speeds in [sv_speed_min, sv_speed_max], none within the ego bubble, target
/// target_ahead meters down the road in the rightmost lane. Identical seeds
/// produce field-for-field identical worlds.
World spawn_scenario(std::uint64_t seed, const ScenarioConfig& config);

struct MetaActionResult {
  LowLevelControl control;
  int target_lane = 0;
  double target_speed = 0.0;
};

/// Translates a discrete decision into low-level control. Lane changes
/// retarget to the adjacent lane when it exists and keep the previous target
/// otherwise; Accelerate/Decelerate move the target speed by 1 m/s (clamped
/// to [0, speed_limit]).
MetaActionResult meta_action_controller(const VehicleState& v, Action action, int target_lane,
                                        double target_speed, const RoadGeometry& geo,
                                        const ControlGains& gains);

/// Standard IDM: a = a_max (1 - (v/v0)^delta - (s*/gap)^2) with
/// s* = s0 + vT + v dv / (2 sqrt(a_max b)), clamped to [-brake_hard, accel_max].
/// gap is the bumper-to-bumper distance; pass +inf when there is no leader.
/// Throws DomainError for gap <= 0.
double idm_acceleration(double gap, double v, double v_leader, double desired_speed,
                        const IdmParams& params);

/// Advances the world by one dt: ego integrates under ego_control, each SV
/// applies IDM car-following plus MOBIL lane selection. Deterministic in
/// (world, control).
void step_world(World& w, const LowLevelControl& ego_control);

/// Oriented-rectangle overlap (separating axis test).
bool check_collision(const VehicleState& a, const VehicleState& b);

/// Time to collision from the follower to a vehicle ahead of it: Euclidean
/// center distance over the longitudinal closing speed, +inf when not
/// closing. Throws DomainError if the leader is behind the follower.
double ttc(const VehicleState& follower, const VehicleState& leader);

/// Nearest vehicle ahead of (x) in `lane`, among ego and SVs, skipping
/// `skip`. Returns nullptr if the lane is clear ahead.
const VehicleState* nearest_front(const World& w, int lane, double x,
                                  const VehicleState* skip = nullptr);
const VehicleState* nearest_rear(const World& w, int lane, double x,
                                 const VehicleState* skip = nullptr);

/// True if any SV pair overlaps (the ego is not considered).
bool any_sv_collision(const World& w);

}  // namespace lanerl::sim
