#include "lanerl/guardian.hpp"

#include <algorithm>

namespace lanerl::guardian {

Mode mode_from_name(const std::string& name) {
  if (name == "intermittent") return Mode::kIntermittent;
  if (name == "continuous") return Mode::kContinuous;
  if (name == "off") return Mode::kOff;
  throw ConfigError("unknown guardian mode: '" + name + "'");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kIntermittent: return "intermittent";
    case Mode::kContinuous: return "continuous";
    case Mode::kOff: return "off";
  }
  throw ConfigError("invalid guardian mode value");
}

int safety_indicator(const sim::World& w, Action a_drl, const GuardianConfig& cfg) {
  const sim::VehicleState& ego = w.ego;
  int lane = ego.lane_index;
  double tau_front = cfg.ttc_front;
  double tau_rear = cfg.ttc_rear;

  if (a_drl == Action::kLeftLaneChange || a_drl == Action::kRightLaneChange) {
    const int offset = (a_drl == Action::kLeftLaneChange) ? -1 : +1;
    const int target = ego.lane_index + offset;
    if (target >= 0 && target < w.geometry.lane_count) {
      lane = target;
      tau_front = cfg.ttc_front_target;
      tau_rear = cfg.ttc_rear_target;
    }
  }

  const sim::VehicleState* front = sim::nearest_front(w, lane, ego.x, &ego);
  if (front && sim::ttc(ego, *front) < tau_front) return 1;
  const sim::VehicleState* rear = sim::nearest_rear(w, lane, ego.x, &ego);
  if (rear && sim::ttc(*rear, ego) < tau_rear) return 1;
  return 0;
}

PermittedSet draw_permitted_episodes(std::uint64_t seed, int episode_count,
                                     double permit_fraction) {
  if (episode_count <= 0) throw ConfigError("episode count must be positive");
  PermittedSet out;
  Rng rng(seed);
  for (int e = 1; e <= episode_count; ++e)
    if (rng.bernoulli(permit_fraction)) out.insert(e);
  return out;
}

int permission_indicator(int episode, Mode mode, const PermittedSet& permitted) {
  switch (mode) {
    case Mode::kContinuous: return 1;
    case Mode::kOff: return 0;
    case Mode::kIntermittent: return permitted.count(episode) ? 1 : 0;
  }
  return 0;
}

InterventionRecord applied_action(Action a_drl, Action a_expert, int i1, int i2, int step) {
  if ((i1 != 0 && i1 != 1) || (i2 != 0 && i2 != 1))
    throw DomainError("indicators must be 0 or 1");
  InterventionRecord rec;
  rec.step = step;
  rec.i1 = i1;
  rec.i2 = i2;
  rec.a_drl = a_drl;
  rec.a_expert = a_expert;
  rec.a_applied = (i1 * i2 == 1) ? a_expert : a_drl;
  return rec;
}

}  // namespace lanerl::guardian
