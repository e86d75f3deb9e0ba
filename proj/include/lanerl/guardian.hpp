#pragma once

#include <cstdint>
#include <set>

#include "lanerl/core.hpp"
#include "lanerl/sim.hpp"

namespace lanerl::guardian {

enum class Mode { kIntermittent, kContinuous, kOff };

Mode mode_from_name(const std::string& name);
std::string mode_name(Mode m);

struct GuardianConfig {
  double ttc_front_target = 3.0;  // s, lane-change check vs the target-lane leader
  double ttc_rear_target = 2.0;   // s, lane-change check vs the target-lane follower
  double ttc_front = 2.5;         // s, keep-lane check vs the current leader
  double ttc_rear = 2.0;          // s, keep-lane check vs the current follower
  Mode mode = Mode::kIntermittent;
  double permit_fraction = 0.5;   // used only in intermittent mode
};

/// Episodes (1-based) in which intervention is permitted.
using PermittedSet = std::set<int>;

/// Safety indicator I1: 1 when the proposed action is hazardous. Lane-change
/// actions are checked against the front and rear vehicles of the target
/// lane; the others against the current lane. A lane change at the road edge
/// degrades to the current-lane check.
int safety_indicator(const sim::World& w, Action a_drl, const GuardianConfig& cfg);

/// Draws the permitted-episode set for episodes 1..episode_count, each
/// included independently with probability permit_fraction.
PermittedSet draw_permitted_episodes(std::uint64_t seed, int episode_count,
                                     double permit_fraction);

/// Permission indicator I2 for one episode under the configured mode.
int permission_indicator(int episode, Mode mode, const PermittedSet& permitted);

struct InterventionRecord {
  int step = 0;
  int i1 = 0;
  int i2 = 0;
  Action a_drl = Action::kIdle;
  Action a_expert = Action::kIdle;
  Action a_applied = Action::kIdle;

  bool intervened() const { return i1 == 1 && i2 == 1; }
};

/// a_applied = (1 - I1 I2) a_drl + I1 I2 a_expert.
InterventionRecord applied_action(Action a_drl, Action a_expert, int i1, int i2, int step = 0);

}  // namespace lanerl::guardian
