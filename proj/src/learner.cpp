#include "lanerl/learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "lanerl/policy_math.hpp"

namespace lanerl::learner {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

net::Mat states_matrix(const Batch& batch, bool next_state) {
  const int dim = static_cast<int>(next_state ? batch.front()->s_next.size()
                                              : batch.front()->s.size());
  net::Mat m(static_cast<int>(batch.size()), dim);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::vector<double>& src = next_state ? batch[b]->s_next : batch[b]->s;
    std::copy(src.begin(), src.end(), m.row(static_cast<int>(b)));
  }
  return m;
}

std::vector<double> row_vector(const net::Mat& m, int r) {
  return std::vector<double>(m.row(r), m.row(r) + m.cols);
}

int sample_from(const PolicyDistribution& probs, Rng& rng) {
  const double u = rng.next_double();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

bool uses_sac_losses(Algorithm a) { return a != Algorithm::kLgdrl; }

double shaped_reward(const Transition& t, const TrainerConfig& cfg) {
  if (cfg.algorithm == Algorithm::kSacRp && t.intervened) return t.reward - cfg.rp_penalty;
  return t.reward;
}

}  // namespace

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity <= 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  const int ring_cap = capacity_ - demo_size();
  if (ring_cap <= 0) throw StateError("demonstration segment fills the whole buffer");
  if (static_cast<int>(ring_.size()) < ring_cap) {
    ring_.push_back(std::move(t));
  } else {
    ring_[ring_next_] = std::move(t);
    ring_next_ = (ring_next_ + 1) % ring_cap;
  }
}

void ReplayBuffer::push_demo(Transition t) {
  if (demo_size() + 1 > capacity_) throw StateError("demo segment exceeds buffer capacity");
  if (static_cast<int>(ring_.size()) > capacity_ - (demo_size() + 1))
    throw StateError("demo segment must be stored before the ring fills");
  t.demo = true;
  demo_.push_back(std::move(t));
}

const Transition& ReplayBuffer::at(int i) const {
  if (i < 0 || i >= size()) throw DomainError("replay index out of range");
  if (i < demo_size()) return demo_[i];
  return ring_[i - demo_size()];
}

std::vector<int> ReplayBuffer::sample_indices(int n, Rng& rng) const {
  if (size() == 0) throw EmptyBufferError("cannot sample from an empty replay buffer");
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) out[i] = rng.uniform_int(0, size() - 1);
  return out;
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "lgdrl") return Algorithm::kLgdrl;
  if (name == "vanilla_sac") return Algorithm::kVanillaSac;
  if (name == "sac_rp") return Algorithm::kSacRp;
  if (name == "sac_bc") return Algorithm::kSacBc;
  if (name == "sac_demo") return Algorithm::kSacDemo;
  throw ConfigError("unknown algorithm: '" + name + "'");
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kLgdrl: return "lgdrl";
    case Algorithm::kVanillaSac: return "vanilla_sac";
    case Algorithm::kSacRp: return "sac_rp";
    case Algorithm::kSacBc: return "sac_bc";
    case Algorithm::kSacDemo: return "sac_demo";
  }
  throw ConfigError("invalid algorithm value");
}

Agent make_agent(int obs_dim, int n_actions, const TrainerConfig& cfg, std::uint64_t init_seed) {
  if (obs_dim <= 0 || n_actions <= 0) throw ConfigError("agent dims must be positive");
  std::vector<int> dims;
  dims.push_back(obs_dim);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(n_actions);

  Rng rng(init_seed);
  Agent a;
  a.actor = net::make_mlp(dims, rng);
  a.critic1 = net::make_mlp(dims, rng);
  a.critic2 = net::make_mlp(dims, rng);
  a.target1 = a.critic1;
  a.target2 = a.critic2;
  net::AdamConfig adam{.learning_rate = cfg.learning_rate};
  a.actor_opt = net::make_adam(a.actor, adam);
  a.critic1_opt = net::make_adam(a.critic1, adam);
  a.critic2_opt = net::make_adam(a.critic2, adam);
  a.lambda = cfg.lambda_init;
  a.obs_dim = obs_dim;
  a.n_actions = n_actions;
  return a;
}

double state_value(const std::vector<double>& s_next, const PolicyDistribution& expert_next,
                   const Agent& agent, double lambda) {
  const PolicyDistribution probs = net::forward_actor(agent.actor, s_next);
  const std::vector<double> q1 = net::forward_critic(agent.target1, s_next);
  const std::vector<double> q2 = net::forward_critic(agent.target2, s_next);
  double v = 0.0;
  for (int a = 0; a < agent.n_actions; ++a) v += probs[a] * std::min(q1[a], q2[a]);
  return v - lambda * policy_math::js_divergence(probs, expert_next);
}

std::vector<double> critic_targets(const Batch& batch, const Agent& agent,
                                   const TrainerConfig& cfg) {
  const net::Mat s_next = states_matrix(batch, true);
  const net::Mat logits = net::forward_batch(agent.actor, s_next);
  const net::Mat q1 = net::forward_batch(agent.target1, s_next);
  const net::Mat q2 = net::forward_batch(agent.target2, s_next);
  const int n_actions = logits.cols;

  std::vector<double> targets(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Transition& t = *batch[b];
    const double r = shaped_reward(t, cfg);
    if (t.done) {
      targets[b] = r;
      continue;
    }
    const int rb = static_cast<int>(b);
    const std::vector<double> lrow = row_vector(logits, rb);
    const PolicyDistribution probs = net::softmax(lrow);
    double v = 0.0;
    if (uses_sac_losses(cfg.algorithm)) {
      const std::vector<double> logp = net::log_softmax(lrow);
      for (int a = 0; a < n_actions; ++a)
        v += probs[a] * (std::min(q1.at(rb, a), q2.at(rb, a)) - cfg.entropy_coef * logp[a]);
    } else {
      for (int a = 0; a < n_actions; ++a) v += probs[a] * std::min(q1.at(rb, a), q2.at(rb, a));
      v -= agent.lambda * policy_math::js_divergence(probs, t.expert_s_next);
    }
    targets[b] = r + cfg.gamma * v;
  }
  return targets;
}

LossEval critic_loss(const Batch& batch, const net::Mlp& critic,
                     const std::vector<double>& targets, const TrainerConfig& cfg) {
  if (targets.size() != batch.size()) throw ShapeError("targets size != batch size");
  const net::Mat s = states_matrix(batch, false);
  net::ForwardCache cache;
  const net::Mat q = net::forward_batch(critic, s, &cache);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  net::Mat dq(q.rows, q.cols);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const int rb = static_cast<int>(b);
    const double residual = q.at(rb, batch[b]->action) - targets[b];
    loss += residual * residual;
    dq.at(rb, batch[b]->action) = 2.0 * residual * inv_b;
  }
  loss /= static_cast<double>(batch.size());

  if (cfg.algorithm == Algorithm::kSacDemo) {
    int n_demo = 0;
    for (const Transition* t : batch) n_demo += t->demo ? 1 : 0;
    if (n_demo > 0) {
      const double inv_d = 1.0 / static_cast<double>(n_demo);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (!batch[b]->demo) continue;
        const int rb = static_cast<int>(b);
        const int a_demo = batch[b]->action;
        int best = 0;
        double best_val = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < q.cols; ++a) {
          const double val = q.at(rb, a) + (a == a_demo ? 0.0 : cfg.margin);
          if (val > best_val) {
            best_val = val;
            best = a;
          }
        }
        loss += (best_val - q.at(rb, a_demo)) * inv_d;
        dq.at(rb, best) += inv_d;
        dq.at(rb, a_demo) -= inv_d;
      }
    }
  }

  LossEval out;
  out.loss = loss;
  out.grads = net::zero_grads(critic);
  net::backward_batch(critic, cache, dq, &out.grads);
  return out;
}

LossEval actor_loss(const Batch& batch, const Agent& agent, const TrainerConfig& cfg) {
  const net::Mat s = states_matrix(batch, false);
  net::ForwardCache cache;
  const net::Mat logits = net::forward_batch(agent.actor, s, &cache);
  const net::Mat q1 = net::forward_batch(agent.critic1, s);
  const net::Mat q2 = net::forward_batch(agent.critic2, s);
  const int n_actions = logits.cols;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  net::Mat dlogits(logits.rows, logits.cols);
  double loss = 0.0;
  std::vector<double> qmin(n_actions);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const int rb = static_cast<int>(b);
    const std::vector<double> lrow = row_vector(logits, rb);
    const PolicyDistribution probs = net::softmax(lrow);
    for (int a = 0; a < n_actions; ++a) qmin[a] = std::min(q1.at(rb, a), q2.at(rb, a));

    if (cfg.algorithm == Algorithm::kLgdrl) {
      double q_bar = 0.0;
      for (int a = 0; a < n_actions; ++a) q_bar += probs[a] * qmin[a];
      const double js = policy_math::js_divergence(probs, batch[b]->expert_s);
      loss += -(q_bar - agent.lambda * js);

      const std::vector<double> g = policy_math::js_gradient_wrt_p(probs, batch[b]->expert_s);
      double g_bar = 0.0;
      for (int a = 0; a < n_actions; ++a) g_bar += probs[a] * g[a];
      for (int a = 0; a < n_actions; ++a)
        dlogits.at(rb, a) =
            -inv_b * (probs[a] * (qmin[a] - q_bar) - agent.lambda * probs[a] * (g[a] - g_bar));
    } else {
      const std::vector<double> logp = net::log_softmax(lrow);
      double f_bar = 0.0;
      for (int a = 0; a < n_actions; ++a)
        f_bar += probs[a] * (qmin[a] - cfg.entropy_coef * logp[a]);
      loss += -f_bar;
      for (int a = 0; a < n_actions; ++a)
        dlogits.at(rb, a) = -inv_b * probs[a] * (qmin[a] - cfg.entropy_coef * logp[a] - f_bar);
    }
  }
  loss /= static_cast<double>(batch.size());

  if (cfg.algorithm == Algorithm::kSacBc) {
    int n_int = 0;
    for (const Transition* t : batch) n_int += t->intervened ? 1 : 0;
    if (n_int > 0) {
      const double scale = cfg.bc_weight / static_cast<double>(n_int);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (!batch[b]->intervened) continue;
        const int rb = static_cast<int>(b);
        const std::vector<double> lrow = row_vector(logits, rb);
        const std::vector<double> logp = net::log_softmax(lrow);
        const PolicyDistribution probs = net::softmax(lrow);
        const int a_e = argmax(batch[b]->expert_s);
        loss += scale * (-logp[a_e]);
        for (int a = 0; a < n_actions; ++a)
          dlogits.at(rb, a) += scale * (probs[a] - (a == a_e ? 1.0 : 0.0));
      }
    }
  }

  LossEval out;
  out.loss = loss;
  out.grads = net::zero_grads(agent.actor);
  net::backward_batch(agent.actor, cache, dlogits, &out.grads);
  return out;
}

double constraint_mean(const Batch& batch, const net::Mlp& actor) {
  const net::Mat s = states_matrix(batch, false);
  const net::Mat logits = net::forward_batch(actor, s);
  double acc = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const PolicyDistribution probs = net::softmax(row_vector(logits, static_cast<int>(b)));
    acc += policy_math::js_divergence(probs, batch[b]->expert_s);
  }
  return acc / static_cast<double>(batch.size());
}

double dual_update(double lambda, double c_mean, const TrainerConfig& cfg) {
  const double next = lambda - cfg.dual_learning_rate * (cfg.epsilon - c_mean);
  return std::clamp(next, 0.0, cfg.lambda_max);
}

void polyak_update(net::Mlp& target, const net::Mlp& online, double tau) {
  if (target.dims != online.dims) throw ShapeError("polyak networks have different shapes");
  for (std::size_t l = 0; l < target.layers.size(); ++l) {
    net::Layer& t = target.layers[l];
    const net::Layer& o = online.layers[l];
    for (std::size_t i = 0; i < t.w.v.size(); ++i) t.w.v[i] = tau * t.w.v[i] + (1.0 - tau) * o.w.v[i];
    for (std::size_t i = 0; i < t.b.size(); ++i) t.b[i] = tau * t.b[i] + (1.0 - tau) * o.b[i];
  }
}

UpdateStats update_step(Agent& agent, const Batch& batch, const TrainerConfig& cfg) {
  const std::vector<double> targets = critic_targets(batch, agent, cfg);
  const LossEval c1 = critic_loss(batch, agent.critic1, targets, cfg);
  const LossEval c2 = critic_loss(batch, agent.critic2, targets, cfg);
  net::adam_step(agent.critic1, c1.grads, agent.critic1_opt);
  net::adam_step(agent.critic2, c2.grads, agent.critic2_opt);

  const LossEval al = actor_loss(batch, agent, cfg);
  net::adam_step(agent.actor, al.grads, agent.actor_opt);

  UpdateStats stats;
  stats.critic1_loss = c1.loss;
  stats.critic2_loss = c2.loss;
  stats.actor_loss = al.loss;
  if (cfg.algorithm == Algorithm::kLgdrl) {
    stats.constraint = constraint_mean(batch, agent.actor);
    agent.lambda = dual_update(agent.lambda, stats.constraint, cfg);
  }
  stats.lambda = agent.lambda;

  polyak_update(agent.target1, agent.critic1, cfg.polyak);
  polyak_update(agent.target2, agent.critic2, cfg.polyak);
  return stats;
}

namespace {

void validate_config(const TrainerConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0)) throw ConfigError("epsilon must be in (0, 1]");
  if (!(cfg.polyak >= 0.0 && cfg.polyak < 1.0) && cfg.polyak != 1.0)
    throw ConfigError("polyak factor must be in [0, 1]");
  if (cfg.batch_size <= 0) throw ConfigError("batch size must be positive");
  if (cfg.episodes <= 0) throw ConfigError("episode count must be positive");
  if (cfg.lambda_init < 0.0) throw ConfigError("lambda must start non-negative");
  if (cfg.buffer_capacity < cfg.batch_size)
    throw ConfigError("buffer capacity smaller than the batch size");
}

Batch gather(const ReplayBuffer& buffer, const std::vector<int>& idx) {
  Batch batch;
  batch.reserve(idx.size());
  for (int i : idx) batch.push_back(&buffer.at(i));
  return batch;
}

}  // namespace

TrainResult train(Task& task, const TrainerConfig& cfg, std::uint64_t master_seed,
                  const std::function<void(const EpisodeRecord&)>& on_episode) {
  validate_config(cfg);
  const std::uint64_t net_seed = seed_stream(master_seed, "net-init");
  const std::uint64_t sampler_seed = seed_stream(master_seed, "sampler");
  const std::uint64_t scenario_seed = seed_stream(master_seed, "scenario");
  const std::uint64_t schedule_seed = seed_stream(master_seed, "schedule");

  const int n_actions = task.action_count();
  Agent agent = make_agent(task.observation_size(), n_actions, cfg, net_seed);
  Rng sampler(sampler_seed);
  ReplayBuffer buffer(cfg.buffer_capacity);

  TrainResult result;
  if (cfg.guardian_mode == guardian::Mode::kIntermittent)
    result.permitted =
        guardian::draw_permitted_episodes(schedule_seed, cfg.episodes, cfg.permit_fraction);

  const bool needs_expert_dist =
      cfg.algorithm == Algorithm::kLgdrl || cfg.algorithm == Algorithm::kSacBc;
  const PolicyDistribution uniform(n_actions, 1.0 / n_actions);

  if (cfg.algorithm == Algorithm::kSacDemo) {
    if (cfg.demo_count <= 0) throw ConfigError("SAC+Demo needs demo_count > 0");
    if (cfg.demo_count >= cfg.buffer_capacity)
      throw ConfigError("demo_count must leave room in the replay buffer");
    const std::uint64_t demo_seed = seed_stream(master_seed, "demo");
    int demo_episode = 0;
    while (buffer.demo_size() < cfg.demo_count) {
      std::vector<double> obs = task.reset(seed_at(demo_seed, demo_episode++));
      PolicyDistribution dist_s = task.expert_distribution();
      while (buffer.demo_size() < cfg.demo_count) {
        const int a = task.expert_action();
        const TaskStep st = task.step(a);
        PolicyDistribution dist_next = task.expert_distribution();
        Transition t;
        t.s = std::move(obs);
        t.s_next = st.obs;
        t.action = a;
        t.reward = st.reward;
        t.done = st.done;
        t.expert_s = std::move(dist_s);
        t.expert_s_next = dist_next;
        buffer.push_demo(std::move(t));
        obs = st.obs;
        dist_s = std::move(dist_next);
        if (st.done || st.truncated) break;
      }
    }
  }

  long global_step = 0;
  for (int episode = 1; episode <= cfg.episodes; ++episode) {
    const auto episode_t0 = Clock::now();
    std::vector<double> obs = task.reset(seed_at(scenario_seed, episode));
    PolicyDistribution dist_s = needs_expert_dist ? task.expert_distribution() : uniform;
    const int i2 = guardian::permission_indicator(episode, cfg.guardian_mode, result.permitted);

    EpisodeRecord rec;
    rec.episode = episode;
    double constraint_sum = 0.0;
    int update_count = 0;

    bool over = false;
    while (!over) {
      int a_drl;
      if (global_step < cfg.exploration_steps) {
        a_drl = sampler.uniform_int(0, n_actions - 1);
      } else {
        a_drl = sample_from(net::forward_actor(agent.actor, obs), sampler);
      }

      const int i1 = task.action_unsafe(a_drl) ? 1 : 0;
      int a_expert = a_drl;
      if (needs_expert_dist || (i1 == 1 && i2 == 1)) a_expert = task.expert_action();
      const guardian::InterventionRecord irec = guardian::applied_action(
          action_from_index(a_drl), action_from_index(a_expert), i1, i2, rec.steps);
      if (i1 == 1) result.interventions.push_back({episode, irec});
      if (irec.intervened()) ++rec.intervention_count;

      const TaskStep st = task.step(action_index(irec.a_applied));
      task.annotate_step(i1, i2);
      PolicyDistribution dist_next = needs_expert_dist ? task.expert_distribution() : uniform;

      Transition t;
      t.s = std::move(obs);
      t.s_next = st.obs;
      t.action = action_index(irec.a_applied);
      t.reward = st.reward;
      t.done = st.done;
      t.expert_s = std::move(dist_s);
      t.expert_s_next = dist_next;
      t.intervened = irec.intervened();
      buffer.push(std::move(t));

      rec.episode_return += st.reward;
      ++rec.steps;
      ++global_step;

      if (buffer.size() >= cfg.batch_size) {
        const Batch batch = gather(buffer, buffer.sample_indices(cfg.batch_size, sampler));
        const UpdateStats stats = update_step(agent, batch, cfg);
        constraint_sum += stats.constraint;
        ++update_count;
      }

      obs = st.obs;
      dist_s = std::move(dist_next);
      over = st.done || st.truncated;
      if (over) rec.outcome = st.outcome;
    }

    rec.intervention_rate =
        rec.steps > 0 ? static_cast<double>(rec.intervention_count) / rec.steps : 0.0;
    rec.lambda = agent.lambda;
    rec.mean_constraint = update_count > 0 ? constraint_sum / update_count : 0.0;
    rec.wall_clock_s = seconds_since(episode_t0);
    result.episodes.push_back(rec);
    if (on_episode) on_episode(rec);
  }

  result.agent = std::move(agent);
  return result;
}

Metrics evaluate(Task& task, const Agent& agent, int episodes, std::uint64_t eval_seed,
                 bool js_against_expert, const std::function<void(const EvalEpisode&)>& on_episode) {
  Metrics m;
  int successes = 0;
  int collisions = 0;
  double latency_sum = 0.0;
  long decision_count = 0;

  for (int ep = 1; ep <= episodes; ++ep) {
    std::vector<double> obs = task.reset(seed_at(eval_seed, ep));
    EvalEpisode rec;
    rec.episode = ep;
    bool over = false;
    while (!over) {
      const auto t0 = Clock::now();
      const PolicyDistribution probs = net::forward_actor(agent.actor, obs);
      const int a = argmax(probs);
      latency_sum += seconds_since(t0);
      ++decision_count;

      if (js_against_expert)
        m.js_gap.push_back(policy_math::js_divergence(probs, task.expert_distribution()));

      const TaskStep st = task.step(a);
      rec.episode_return += st.reward;
      ++rec.steps;
      obs = st.obs;
      over = st.done || st.truncated;
      if (over) rec.outcome = st.outcome;
    }
    successes += rec.outcome == Outcome::kSuccess ? 1 : 0;
    collisions += rec.outcome == Outcome::kCollision ? 1 : 0;
    m.episodes.push_back(rec);
    if (on_episode) on_episode(rec);
  }

  const double n = static_cast<double>(episodes);
  m.success_rate = successes / n;
  m.collision_rate = collisions / n;
  double mean = 0.0, steps = 0.0;
  for (const EvalEpisode& e : m.episodes) {
    mean += e.episode_return;
    steps += e.steps;
  }
  mean /= n;
  double var = 0.0;
  for (const EvalEpisode& e : m.episodes) {
    const double d = e.episode_return - mean;
    var += d * d;
  }
  m.return_mean = mean;
  m.return_std = std::sqrt(var / n);
  m.mean_steps = steps / n;
  m.mean_policy_latency_s = decision_count > 0 ? latency_sum / decision_count : 0.0;
  if (!m.js_gap.empty()) {
    double acc = 0.0;
    for (double v : m.js_gap) acc += v;
    m.js_gap_mean = acc / static_cast<double>(m.js_gap.size());
  }
  return m;
}

}  // namespace lanerl::learner
