#include "lanerl/core.hpp"

#include <algorithm>

namespace lanerl {

std::string action_token(Action a) {
  switch (a) {
    case Action::kLeftLaneChange: return "LEFT_LANE_CHANGE";
    case Action::kIdle: return "IDLE";
    case Action::kRightLaneChange: return "RIGHT_LANE_CHANGE";
    case Action::kAccelerate: return "ACCELERATE";
    case Action::kDecelerate: return "DECELERATE";
  }
  throw DomainError("invalid action value");
}

std::string action_name(Action a) {
  switch (a) {
    case Action::kLeftLaneChange: return "left_lane_change";
    case Action::kIdle: return "idle";
    case Action::kRightLaneChange: return "right_lane_change";
    case Action::kAccelerate: return "accelerate";
    case Action::kDecelerate: return "decelerate";
  }
  throw DomainError("invalid action value");
}

Action action_from_token(const std::string& token) {
  for (int i = 0; i < kActionCount; ++i) {
    const Action a = static_cast<Action>(i);
    if (token == action_token(a)) return a;
  }
  throw FormatError("unknown action token: '" + token + "'");
}

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kRunning: return "running";
    case Outcome::kSuccess: return "success";
    case Outcome::kCollision: return "collision";
    case Outcome::kTimeout: return "timeout";
  }
  throw DomainError("invalid outcome value");
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace lanerl
