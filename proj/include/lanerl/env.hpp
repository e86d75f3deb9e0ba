#pragma once

#include <cstdint>
#include <vector>

#include "lanerl/core.hpp"
#include "lanerl/sim.hpp"

namespace lanerl::env {

/// Flat normalized state vector: ego (x, y, vx, vy, heading) in the global
/// frame, the K nearest SVs relative to the ego, target distance d and the
/// lane one-hot l. Length 5*(K+1)+4, every entry in [-1, 1].
using ObservationVector = std::vector<double>;

/// Fixed normalization extents: a feature is divided by its extent and
/// clamped to [-1, 1].
struct ObservationConfig {
  int k_nearest = 6;
  double speed_extent = 30.0;      // m/s, global and relative speeds
  double heading_extent = 1.5707963267948966;  // pi/2
  double rel_position_extent = 100.0;          // m
  double target_distance_extent = 600.0;       // m
};

int observation_size(const ObservationConfig& cfg);

struct RewardConfig {
  double w_success = 10.0;   // mission success
  double w_failure = 10.0;   // mission failure (collision)
  double w_right = 1.0;      // rightward heading bonus
  double w_left = 1.0;       // leftward heading penalty
  double w_speed = 0.5;
  double w_safety = 1.0;
  double heading_eps = 0.02;  // rad
  double v_min = 20.0;        // m/s
  double v_max = 30.0;        // m/s
};

struct RewardBreakdown {
  double mission = 0.0;
  double lanechange = 0.0;
  double speed = 0.0;
  double safety = 0.0;

  double total() const { return mission + lanechange + speed + safety; }
};

struct StepOutcome {
  ObservationVector observation;
  double reward = 0.0;
  RewardBreakdown breakdown;
  bool done = false;
  Outcome outcome = Outcome::kRunning;
};

ObservationVector encode_observation(const sim::World& w, const ObservationConfig& cfg);

/// Reward for the transition into `after`. The mission term keys off the
/// terminal classification, the heading term pays for rightward motion, the
/// speed term ramps over [v_min, v_max], and the safety term penalizes a
/// small time-to-collision with the nearest front vehicle when closer than
/// one second of travel.
RewardBreakdown compute_reward(const sim::World& after, const RewardConfig& cfg);

/// Collision beats Success beats Timeout.
Outcome classify_terminal(const sim::World& w);

/// Episode interface over the simulator: one decision per simulation step.
class Environment {
 public:
  Environment(sim::ScenarioConfig scenario, RewardConfig reward, ObservationConfig obs);

  ObservationVector reset(std::uint64_t seed);
  StepOutcome step(Action action);

  const sim::World& world() const;
  bool done() const { return done_; }
  int observation_size() const { return env::observation_size(obs_cfg_); }
  const sim::ScenarioConfig& scenario() const { return scenario_; }
  const RewardConfig& reward_config() const { return reward_cfg_; }
  const ObservationConfig& observation_config() const { return obs_cfg_; }

 private:
  sim::ScenarioConfig scenario_;
  RewardConfig reward_cfg_;
  ObservationConfig obs_cfg_;
  sim::World world_;
  bool started_ = false;
  bool done_ = true;
};

}  // namespace lanerl::env
