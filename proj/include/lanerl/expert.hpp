#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>

#include "lanerl/core.hpp"
#include "lanerl/sim.hpp"

namespace lanerl::expert {

enum class AdviceSource { kOracle, kLlm, kLlmFallback, kCache };

std::string advice_source_name(AdviceSource s);

/// One expert consultation: the advised action, the distribution form the
/// learner consumes (argmax always equals the action), where the advice came
/// from and how long it took.
struct ExpertAdvice {
  Action action = Action::kIdle;
  PolicyDistribution distribution;
  AdviceSource source = AdviceSource::kOracle;
  double latency_s = 0.0;
};

/// Probability 1-kappa on the advised action, kappa/4 on each other action.
PolicyDistribution action_to_distribution(Action a, double kappa);

/// Thresholds for the rule-based expert. The TTC predicates mirror the
/// guardian's.
struct OracleConfig {
  double ttc_front_target = 3.0;  // s
  double ttc_rear_target = 2.0;   // s
  double ttc_front = 2.5;         // s
  double cruise_speed = 30.0;     // m/s, stop accelerating within 1 m/s of this
};

/// Deterministic priority rules: move toward the target lane when the
/// adjacent lane is safe, brake when closing on the leader, speed up on a
/// clear road, otherwise hold.
Action rule_oracle(const sim::World& w, const OracleConfig& cfg);

struct PromptBundle {
  std::string system_text;
  std::string scenario_text;
};

/// Deterministic prompt for a chat-completion endpoint: the system text
/// carries the action menu, step-by-step reasoning instructions and the
/// required "Decision: <TOKEN>" final line; the scenario text describes the
/// ego, the K nearest SVs, the lanes and the target, numbers rounded to 0.1.
PromptBundle build_prompt(const sim::World& w, int k_nearest);

/// Parses the last "Decision: <TOKEN>" line (case-insensitive) of a
/// response. Throws FormatError when no such line exists.
Action extract_action(const std::string& response_text);

struct LlmConfig {
  std::string endpoint_url;        // e.g. http://127.0.0.1:8080/v1/chat/completions
  std::string model = "gpt-4o";
  std::string api_key_env = "LLM_API_KEY";
  double timeout_s = 30.0;
  int max_requeries = 3;
  double temperature = 0.0;
  bool cache_enabled = true;
  std::string cache_path;          // optional persisted cache file
  double kappa = 0.05;             // distribution smoothing
  int k_nearest = 6;               // SVs described in the prompt
  bool fallback_enabled = true;    // fall back to the rule oracle on failure
  OracleConfig oracle;             // fallback rules
};

/// Swappable expert interface; the trainer only sees this.
class ExpertPolicy {
 public:
  virtual ~ExpertPolicy() = default;
  virtual ExpertAdvice advise(const sim::World& w) = 0;
};

class OracleExpert : public ExpertPolicy {
 public:
  explicit OracleExpert(OracleConfig cfg = {}, double kappa = 0.05)
      : cfg_(cfg), kappa_(kappa) {}
  ExpertAdvice advise(const sim::World& w) override;

 private:
  OracleConfig cfg_;
  double kappa_;
};

/// Chat-endpoint expert with a scenario-keyed cache, a re-query loop for
/// malformed responses and an oracle fallback. Safe for concurrent advise()
/// calls on distinct states.
class LlmExpert : public ExpertPolicy {
 public:
  explicit LlmExpert(LlmConfig cfg);
  ExpertAdvice advise(const sim::World& w) override;

  int request_count() const { return request_count_; }

 private:
  bool cache_lookup(std::uint64_t key, Action* out);
  void cache_insert(std::uint64_t key, Action a);

  LlmConfig cfg_;
  std::mutex cache_mutex_;
  std::unordered_map<std::uint64_t, Action> cache_;
  int request_count_ = 0;
};

}  // namespace lanerl::expert
