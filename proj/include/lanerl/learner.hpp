#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lanerl/core.hpp"
#include "lanerl/guardian.hpp"
#include "lanerl/net.hpp"
#include "lanerl/rng.hpp"

namespace lanerl::learner {

/// One replay record. Expert distributions are stored for both endpoints of
/// the transition so the constraint terms never re-query the expert.
struct Transition {
  std::vector<double> s;
  std::vector<double> s_next;
  int action = 0;
  double reward = 0.0;
  bool done = false;
  PolicyDistribution expert_s;
  PolicyDistribution expert_s_next;
  bool intervened = false;
  bool demo = false;
};

/// Ring buffer with an optional protected demonstration segment: FIFO
/// eviction never touches demonstrations, sampling covers everything.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void push(Transition t);
  void push_demo(Transition t);

  int size() const { return static_cast<int>(demo_.size() + ring_.size()); }
  int demo_size() const { return static_cast<int>(demo_.size()); }
  int capacity() const { return capacity_; }
  const Transition& at(int i) const;

  /// Uniform with replacement across all live entries.
  std::vector<int> sample_indices(int n, Rng& rng) const;

 private:
  int capacity_;
  std::vector<Transition> demo_;
  std::vector<Transition> ring_;
  int ring_next_ = 0;
};

enum class Algorithm { kLgdrl, kVanillaSac, kSacRp, kSacBc, kSacDemo };

Algorithm algorithm_from_name(const std::string& name);
std::string algorithm_name(Algorithm a);

struct TrainerConfig {
  Algorithm algorithm = Algorithm::kLgdrl;
  double gamma = 0.9;
  double epsilon = 0.1;         // policy deviation tolerance
  double learning_rate = 5e-4;
  double dual_learning_rate = 5e-4;
  int batch_size = 256;
  int exploration_steps = 1000;  // env steps with uniform-random actions
  int episodes = 500;
  double polyak = 0.99;
  double lambda_init = 1.0;
  double lambda_max = 1e3;
  int buffer_capacity = 40000;
  std::vector<int> hidden = net::kDefaultHidden;
  double entropy_coef = 0.2;  // Vanilla-SAC (fixed, no auto-tuning)
  double rp_penalty = 1.0;    // SAC+RP reward shaping on intervened steps
  double bc_weight = 1.0;     // SAC+BC cloning weight
  double margin = 0.8;        // SAC+Demo margin
  int demo_count = 2000;      // SAC+Demo pre-stored transitions
  guardian::Mode guardian_mode = guardian::Mode::kIntermittent;
  double permit_fraction = 0.5;
};

/// Actor, double critics with targets, their optimizers and the dual variable.
struct Agent {
  net::Mlp actor;
  net::Mlp critic1;
  net::Mlp critic2;
  net::Mlp target1;
  net::Mlp target2;
  net::AdamState actor_opt;
  net::AdamState critic1_opt;
  net::AdamState critic2_opt;
  double lambda = 1.0;
  int obs_dim = 0;
  int n_actions = 0;
};

Agent make_agent(int obs_dim, int n_actions, const TrainerConfig& cfg, std::uint64_t init_seed);

using Batch = std::vector<const Transition*>;

/// Expected value of the next state under the current policy and the target
/// critics, minus the weighted policy-constraint term; exact over the
/// discrete actions.
double state_value(const std::vector<double>& s_next, const PolicyDistribution& expert_next,
                   const Agent& agent, double lambda);

/// Bootstrapped critic targets for the batch (terminal entries collapse to
/// the reward). The form follows the configured algorithm.
std::vector<double> critic_targets(const Batch& batch, const Agent& agent,
                                   const TrainerConfig& cfg);

struct LossEval {
  double loss = 0.0;
  net::Grads grads;
};

/// Mean squared Bellman residual for one critic; for SAC+Demo the margin
/// classification term over demonstration entries is added in.
LossEval critic_loss(const Batch& batch, const net::Mlp& critic,
                     const std::vector<double>& targets, const TrainerConfig& cfg);

/// Loss whose minimization improves the policy objective; gradients stop at
/// the critics.
LossEval actor_loss(const Batch& batch, const Agent& agent, const TrainerConfig& cfg);

/// Batch-mean constraint value js(pi(.|s), pi_e(.|s)).
double constraint_mean(const Batch& batch, const net::Mlp& actor);

/// lambda <- max(0, lambda - lr (epsilon - c_mean)), clamped above as well.
double dual_update(double lambda, double c_mean, const TrainerConfig& cfg);

/// target <- tau * target + (1 - tau) * online, elementwise.
void polyak_update(net::Mlp& target, const net::Mlp& online, double tau);

struct UpdateStats {
  double critic1_loss = 0.0;
  double critic2_loss = 0.0;
  double actor_loss = 0.0;
  double constraint = 0.0;  // batch-mean JS after the actor update (LGDRL)
  double lambda = 0.0;
};

/// One full update: both critics, the actor, the dual variable, the targets,
/// in that order.
UpdateStats update_step(Agent& agent, const Batch& batch, const TrainerConfig& cfg);

/// What the trainer interacts with. Expert and safety queries refer to the
/// task's current state (after the last reset/step).
struct TaskStep {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;       // terminal: the bootstrap stops here
  bool truncated = false;  // episode over without a terminal state
  Outcome outcome = Outcome::kRunning;
};

class Task {
 public:
  virtual ~Task() = default;
  virtual int observation_size() const = 0;
  virtual int action_count() const = 0;
  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  virtual TaskStep step(int action) = 0;
  virtual PolicyDistribution expert_distribution() = 0;
  virtual int expert_action() = 0;
  virtual bool action_unsafe(int action) = 0;
  /// Indicator values for the step just taken; tasks that capture replays
  /// store them, others ignore them.
  virtual void annotate_step(int /*i1*/, int /*i2*/) {}
};

struct EpisodeRecord {
  int episode = 0;  // 1-based
  double episode_return = 0.0;
  Outcome outcome = Outcome::kRunning;
  int steps = 0;
  int intervention_count = 0;
  double intervention_rate = 0.0;
  double lambda = 0.0;
  double mean_constraint = 0.0;
  double wall_clock_s = 0.0;
};

struct TaggedIntervention {
  int episode = 0;
  guardian::InterventionRecord record;
};

struct TrainResult {
  Agent agent;
  std::vector<EpisodeRecord> episodes;
  guardian::PermittedSet permitted;
  std::vector<TaggedIntervention> interventions;  // rows where I1 = 1
};

/// Runs the full training loop. The master seed fans out to the network
/// init, the action/batch sampler, the per-episode scenario seeds, and the
/// intervention schedule. on_episode, when set, fires after each episode.
TrainResult train(Task& task, const TrainerConfig& cfg, std::uint64_t master_seed,
                  const std::function<void(const EpisodeRecord&)>& on_episode = {});

struct EvalEpisode {
  int episode = 0;
  double episode_return = 0.0;
  Outcome outcome = Outcome::kRunning;
  int steps = 0;
};

struct Metrics {
  std::vector<EvalEpisode> episodes;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double return_mean = 0.0;
  double return_std = 0.0;
  double mean_steps = 0.0;
  double mean_policy_latency_s = 0.0;
  std::vector<double> js_gap;  // per step, when requested
  double js_gap_mean = 0.0;
};

/// Greedy evaluation: argmax of the policy each step, no expert, no
/// guardian. Optionally records the per-step JS gap against the task's
/// expert.
Metrics evaluate(Task& task, const Agent& agent, int episodes, std::uint64_t eval_seed,
                 bool js_against_expert = false,
                 const std::function<void(const EvalEpisode&)>& on_episode = {});

}  // namespace lanerl::learner
