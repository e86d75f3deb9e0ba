#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lanerl/env.hpp"
#include "lanerl/expert.hpp"
#include "lanerl/guardian.hpp"
#include "lanerl/learner.hpp"

namespace lanerl::harness {

inline constexpr const char* kCodeVersion = "1.0.0";

/// Everything one run needs, resolved from a JSON config file plus CLI
/// overrides. The exact resolved form is written next to the outputs.
struct RunConfig {
  std::string label = "run";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out_dir = "runs/out";
  int jobs = 1;
  bool replay_capture = false;
  sim::ScenarioConfig scenario;
  env::RewardConfig reward;
  env::ObservationConfig observation;
  guardian::GuardianConfig guardian;
  std::string expert_kind = "oracle";  // "oracle" or "llm"
  double expert_kappa = 0.05;
  expert::OracleConfig oracle;
  expert::LlmConfig llm;
  learner::TrainerConfig trainer;
};

/// Parses a config JSON document. Unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

std::unique_ptr<expert::ExpertPolicy> make_expert(const RunConfig& cfg);

/// One captured simulation step (post-step state).
struct ReplayStep {
  int step = 0;
  double sim_time = 0.0;
  int action = 0;
  int i1 = 0;
  int i2 = 0;
  sim::VehicleState ego;
  std::vector<sim::VehicleState> svs;
};

struct ReplayEpisode {
  sim::World initial;  // full world before the first action
  std::vector<ReplayStep> steps;
};

/// Driving task the trainer runs against: environment stepping, expert
/// advice for the current state (computed once per state), and the
/// guardian's safety predicate.
class HighwayTask : public learner::Task {
 public:
  HighwayTask(const RunConfig& cfg, expert::ExpertPolicy* expert);

  int observation_size() const override;
  int action_count() const override { return kActionCount; }
  std::vector<double> reset(std::uint64_t seed) override;
  learner::TaskStep step(int action) override;
  PolicyDistribution expert_distribution() override;
  int expert_action() override;
  bool action_unsafe(int action) override;
  void annotate_step(int i1, int i2) override;

  const env::Environment& environment() const { return env_; }

  void set_replay_capture(bool enabled) { capture_ = enabled; }
  const ReplayEpisode& replay() const { return replay_; }

 private:
  const expert::ExpertAdvice& advice();

  env::Environment env_;
  expert::ExpertPolicy* expert_;
  guardian::GuardianConfig guardian_;
  std::optional<expert::ExpertAdvice> advice_;
  bool capture_ = false;
  int step_index_ = 0;
  ReplayEpisode replay_;
};

/// Success fraction over the most recent 20 episodes (fewer at the start),
/// one value per episode.
std::vector<double> rolling_success(const std::vector<Outcome>& outcomes, int window = 20);

// ---- file formats -------------------------------------------------------

/// Writes the training per-episode CSV (schema episodes-v1). Deterministic
/// byte-for-byte given identical records; the wall clock stays out of it.
void write_episodes_csv(const std::string& path,
                        const std::vector<learner::EpisodeRecord>& episodes);
void write_interventions_csv(const std::string& path,
                             const std::vector<learner::TaggedIntervention>& records);
void write_permitted_csv(const std::string& path, const guardian::PermittedSet& permitted);
void write_eval_episodes_csv(const std::string& path,
                             const std::vector<learner::EvalEpisode>& episodes);
void write_js_gap_csv(const std::string& path, const std::vector<double>& js_gap);

struct ParsedEpisodes {
  std::vector<learner::EpisodeRecord> episodes;
};
ParsedEpisodes read_episodes_csv(const std::string& path);

/// Checkpoint directory: one binary per network plus a metadata sidecar.
void save_agent(const learner::Agent& agent, const RunConfig& cfg, const std::string& dir);
learner::Agent load_agent(const std::string& dir, const RunConfig& cfg);

/// Replay files: one JSON line per step after a header line carrying the
/// initial world (schema replay-v1).
void write_replay_file(const std::string& path, const ReplayEpisode& episode);
ReplayEpisode read_replay_file(const std::string& path);

/// Re-simulates the replayed actions from the recorded initial world and
/// returns the maximum absolute state deviation from the recorded states.
double replay_max_deviation(const ReplayEpisode& episode, const RunConfig& cfg);

// ---- CLI commands -------------------------------------------------------

struct TrainOptions {
  std::string config_path;
  std::string algo_override;
  std::string expert_override;
  std::string seeds_override;
  std::string out_override;
  std::string label_override;
  std::string guardian_mode_override;
  int episodes_override = 0;
  int jobs_override = 0;
};

struct EvalOptions {
  std::string checkpoint_dir;
  std::string config_path;  // optional; defaults to the run's resolved config
  std::string out_dir;
  int episodes = 50;
  std::uint64_t seed = 1;
  bool js_against_oracle = false;
  std::string replay_out;
};

struct CompareOptions {
  std::vector<std::string> run_dirs;
  std::string out_path;
};

struct ReplayOptions {
  std::string run_dir;
  int episode = 1;
  std::string out_path;
  bool verify = false;
};

int cli_train(const TrainOptions& opts);
int cli_eval(const EvalOptions& opts);
int cli_compare(const CompareOptions& opts);
int cli_replay(const ReplayOptions& opts);

}  // namespace lanerl::harness
