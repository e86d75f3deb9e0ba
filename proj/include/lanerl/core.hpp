#pragma once

#include <string>
#include <vector>

#include "lanerl/errors.hpp"

namespace lanerl {

/// The five discrete driving decisions. Index values are part of the wire
/// format (checkpoints, CSVs, replay files) and must not be reordered.
enum class Action : int {
  kLeftLaneChange = 0,
  kIdle = 1,
  kRightLaneChange = 2,
  kAccelerate = 3,
  kDecelerate = 4,
};

inline constexpr int kActionCount = 5;

inline Action action_from_index(int i) {
  if (i < 0 || i >= kActionCount) throw DomainError("action index out of range: " + std::to_string(i));
  return static_cast<Action>(i);
}

inline constexpr int action_index(Action a) { return static_cast<int>(a); }

/// Uppercase tokens used by the expert wire format ("Decision: <TOKEN>").
std::string action_token(Action a);

/// Lowercase names used in CSVs and logs.
std::string action_name(Action a);

/// Parses an uppercase token; throws FormatError on anything else.
Action action_from_token(const std::string& token);

/// How an episode ended (or that it has not).
enum class Outcome {
  kRunning,
  kSuccess,
  kCollision,
  kTimeout,
};

std::string outcome_name(Outcome o);

/// Probability vector over discrete actions. Sized kActionCount for the
/// driving task; smaller toy tasks reuse the same representation.
using PolicyDistribution = std::vector<double>;

/// Index of the largest entry; the lowest index wins ties.
int argmax(const std::vector<double>& v);

}  // namespace lanerl
