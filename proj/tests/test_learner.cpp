#include <cmath>
#include <doctest.h>

#include "lanerl/learner.hpp"
#include "lanerl/policy_math.hpp"
#include "toy_task.hpp"

using namespace lanerl;
using namespace lanerl::learner;

namespace {

Transition make_transition(Rng& rng, int obs_dim, int n_actions, bool done = false) {
  Transition t;
  t.s.resize(obs_dim);
  t.s_next.resize(obs_dim);
  for (double& v : t.s) v = rng.uniform(-1.0, 1.0);
  for (double& v : t.s_next) v = rng.uniform(-1.0, 1.0);
  t.action = rng.uniform_int(0, n_actions - 1);
  t.reward = rng.uniform(-1.0, 1.0);
  t.done = done;
  t.expert_s.resize(n_actions);
  t.expert_s_next.resize(n_actions);
  double sum_s = 0.0, sum_n = 0.0;
  for (int a = 0; a < n_actions; ++a) {
    t.expert_s[a] = rng.uniform(0.01, 1.0);
    t.expert_s_next[a] = rng.uniform(0.01, 1.0);
    sum_s += t.expert_s[a];
    sum_n += t.expert_s_next[a];
  }
  for (int a = 0; a < n_actions; ++a) {
    t.expert_s[a] /= sum_s;
    t.expert_s_next[a] /= sum_n;
  }
  t.intervened = rng.bernoulli(0.3);
  return t;
}

std::vector<Transition> make_batch_storage(Rng& rng, int n, int obs_dim, int n_actions) {
  std::vector<Transition> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(make_transition(rng, obs_dim, n_actions));
  return out;
}

Batch as_batch(const std::vector<Transition>& storage) {
  Batch b;
  for (const Transition& t : storage) b.push_back(&t);
  return b;
}

TrainerConfig small_config(Algorithm algo = Algorithm::kLgdrl) {
  TrainerConfig cfg;
  cfg.algorithm = algo;
  cfg.hidden = {16, 16};
  cfg.batch_size = 8;
  return cfg;
}

}  // namespace

TEST_CASE("replay buffer ring semantics") {
  ReplayBuffer buf(3);
  Rng rng(1);
  for (int i = 0; i < 4; ++i) {
    Transition t;
    t.reward = i;
    buf.push(std::move(t));
  }
  CHECK(buf.size() == 3);
  // the oldest entry (reward 0) was evicted
  std::vector<double> rewards;
  for (int i = 0; i < buf.size(); ++i) rewards.push_back(buf.at(i).reward);
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{1, 2, 3});
}

TEST_CASE("replay buffer protects the demo segment") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 2; ++i) {
    Transition t;
    t.reward = -1 - i;
    buf.push_demo(std::move(t));
  }
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.reward = i;
    buf.push(std::move(t));
  }
  CHECK(buf.size() == 3);
  CHECK(buf.demo_size() == 2);
  CHECK(buf.at(0).reward == -1);
  CHECK(buf.at(1).reward == -2);
  CHECK(buf.at(2).reward == 4);  // only the newest ring entry survives
  CHECK(buf.at(0).demo);
  CHECK_FALSE(buf.at(2).demo);
}

TEST_CASE("replay buffer sampling is seeded and in range") {
  ReplayBuffer buf(16);
  for (int i = 0; i < 10; ++i) buf.push(Transition{});
  Rng a(5), b(5);
  CHECK(buf.sample_indices(32, a) == buf.sample_indices(32, b));
  Rng c(6);
  for (int idx : buf.sample_indices(100, c)) {
    CHECK(idx >= 0);
    CHECK(idx < 10);
  }
  ReplayBuffer empty(4);
  Rng d(7);
  CHECK_THROWS_AS(empty.sample_indices(1, d), EmptyBufferError);
}

TEST_CASE("state_value closed-form cases") {
  const TrainerConfig cfg = small_config();
  Agent agent = make_agent(6, 5, cfg, 99);
  std::vector<double> s(6, 0.25);

  SUBCASE("zero critics, lambda 0: value 0") {
    for (net::Mlp* m : {&agent.target1, &agent.target2})
      for (net::Layer& l : m->layers) {
        std::fill(l.w.v.begin(), l.w.v.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
      }
    const PolicyDistribution expert(5, 0.2);
    CHECK(state_value(s, expert, agent, 0.0) == 0.0);
  }
  SUBCASE("constraint term vanishes when the policy equals the expert") {
    const PolicyDistribution pol = net::forward_actor(agent.actor, s);
    const double v0 = state_value(s, pol, agent, 0.0);
    const double v2 = state_value(s, pol, agent, 2.0);
    CHECK(v0 == doctest::Approx(v2).epsilon(1e-12));
  }
  SUBCASE("one-hot policy picks its min-Q value") {
    // drive the actor to a near-one-hot by a huge bias on action 2
    agent.actor.layers.back().b.assign(5, -50.0);
    agent.actor.layers.back().b[2] = 50.0;
    const std::vector<double> q1 = net::forward_critic(agent.target1, s);
    const std::vector<double> q2 = net::forward_critic(agent.target2, s);
    const PolicyDistribution expert(5, 0.2);
    const double expected = std::min(q1[2], q2[2]);
    CHECK(state_value(s, expert, agent, 0.0) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("critic targets collapse to the reward on terminal transitions") {
  const TrainerConfig cfg = small_config();
  Agent agent = make_agent(4, 3, cfg, 7);
  Rng rng(3);
  std::vector<Transition> storage;
  for (int i = 0; i < 6; ++i) storage.push_back(make_transition(rng, 4, 3, i % 2 == 0));
  const std::vector<double> targets = critic_targets(as_batch(storage), agent, cfg);
  for (std::size_t i = 0; i < storage.size(); ++i)
    if (storage[i].done) CHECK(targets[i] == storage[i].reward);
}

TEST_CASE("critic loss is the mean squared residual") {
  const TrainerConfig cfg = small_config();
  Agent agent = make_agent(4, 3, cfg, 11);
  // zero critic: Q = 0 everywhere
  for (net::Layer& l : agent.critic1.layers) {
    std::fill(l.w.v.begin(), l.w.v.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
  Rng rng(5);
  std::vector<Transition> storage = {make_transition(rng, 4, 3)};
  const LossEval ev = critic_loss(as_batch(storage), agent.critic1, {2.0}, cfg);
  CHECK(ev.loss == doctest::Approx(4.0));

  SUBCASE("zero residual, zero loss") {
    const LossEval ok = critic_loss(as_batch(storage), agent.critic1, {0.0}, cfg);
    CHECK(ok.loss == doctest::Approx(0.0));
  }
}

TEST_CASE("gradient checks: every loss the trainer uses") {
  Rng rng(21);
  const int obs_dim = 6, n_actions = 5;
  std::vector<Transition> storage = make_batch_storage(rng, 8, obs_dim, n_actions);
  // make sure demo/intervened entries exist for the margin/BC paths
  storage[1].demo = true;
  storage[4].demo = true;
  storage[2].intervened = true;
  storage[5].intervened = true;
  const Batch batch = as_batch(storage);

  const auto check_critic = [&](Algorithm algo) {
    TrainerConfig cfg = small_config(algo);
    Agent agent = make_agent(obs_dim, n_actions, cfg, 31);
    const std::vector<double> targets = critic_targets(batch, agent, cfg);
    const LossEval ev = critic_loss(batch, agent.critic1, targets, cfg);
    const auto loss_fn = [&](const net::Mlp& m) {
      return critic_loss(batch, m, targets, cfg).loss;
    };
    Rng coords(101);
    return net::finite_diff_check(loss_fn, agent.critic1, ev.grads, 1e-5, 250, coords);
  };
  const auto check_actor = [&](Algorithm algo) {
    TrainerConfig cfg = small_config(algo);
    Agent agent = make_agent(obs_dim, n_actions, cfg, 33);
    agent.lambda = 0.7;
    const LossEval ev = actor_loss(batch, agent, cfg);
    const auto loss_fn = [&](const net::Mlp& m) {
      Agent probe = agent;
      probe.actor = m;
      return actor_loss(batch, probe, cfg).loss;
    };
    Rng coords(103);
    return net::finite_diff_check(loss_fn, agent.actor, ev.grads, 1e-5, 250, coords);
  };

  CHECK(check_critic(Algorithm::kLgdrl) < 1e-4);
  CHECK(check_critic(Algorithm::kVanillaSac) < 1e-4);
  CHECK(check_critic(Algorithm::kSacDemo) < 1e-4);  // margin term included
  CHECK(check_actor(Algorithm::kLgdrl) < 1e-4);
  CHECK(check_actor(Algorithm::kVanillaSac) < 1e-4);
  CHECK(check_actor(Algorithm::kSacBc) < 1e-4);  // cloning term included
}

TEST_CASE("margin term is zero when the demo action dominates by the margin") {
  TrainerConfig cfg = small_config(Algorithm::kSacDemo);
  Agent agent = make_agent(4, 3, cfg, 41);
  // critic returns bias only; make action 1 dominate by more than the margin
  for (net::Layer& l : agent.critic1.layers) {
    std::fill(l.w.v.begin(), l.w.v.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
  agent.critic1.layers.back().b = {0.0, 2.0, 0.5};

  Rng rng(43);
  std::vector<Transition> storage = {make_transition(rng, 4, 3)};
  storage[0].demo = true;
  storage[0].action = 1;
  const double target = 2.0;  // equals Q(s, 1): the MSE part is zero too
  const LossEval ev = critic_loss(as_batch(storage), agent.critic1, {target}, cfg);
  CHECK(ev.loss == doctest::Approx(0.0));
}

TEST_CASE("sac_rp shapes rewards only on intervened transitions") {
  Rng rng(51);
  std::vector<Transition> storage = make_batch_storage(rng, 6, 4, 3);
  for (Transition& t : storage) t.intervened = false;
  const Batch batch = as_batch(storage);

  TrainerConfig rp = small_config(Algorithm::kSacRp);
  TrainerConfig vanilla = small_config(Algorithm::kVanillaSac);
  Agent agent = make_agent(4, 3, rp, 53);

  // no interventions in the batch: targets identical bit for bit
  CHECK(critic_targets(batch, agent, rp) == critic_targets(batch, agent, vanilla));
  CHECK(actor_loss(batch, agent, rp).loss == actor_loss(batch, agent, vanilla).loss);

  storage[2].intervened = true;
  const std::vector<double> shaped = critic_targets(as_batch(storage), agent, rp);
  const std::vector<double> plain = critic_targets(as_batch(storage), agent, vanilla);
  for (std::size_t i = 0; i < storage.size(); ++i) {
    if (i == 2) CHECK(shaped[i] == doctest::Approx(plain[i] - rp.rp_penalty));
    else CHECK(shaped[i] == plain[i]);
  }
}

TEST_CASE("lgdrl with lambda=0 reduces to the unconstrained actor-critic bit for bit") {
  Rng rng(61);
  const int obs_dim = 5, n_actions = 4;

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Transition> storage = make_batch_storage(rng, 6, obs_dim, n_actions);
    const Batch batch = as_batch(storage);
    TrainerConfig cfg = small_config(Algorithm::kLgdrl);
    cfg.epsilon = 1.0;
    cfg.lambda_init = 0.0;
    Agent agent = make_agent(obs_dim, n_actions, cfg, 200 + trial);
    agent.lambda = 0.0;

    // independent assembly of the unconstrained losses (same summation order)
    const std::vector<double> targets = critic_targets(batch, agent, cfg);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Transition& t = *batch[b];
      double expected;
      if (t.done) {
        expected = t.reward;
      } else {
        const PolicyDistribution probs = net::forward_actor(agent.actor, t.s_next);
        const std::vector<double> q1 = net::forward_critic(agent.target1, t.s_next);
        const std::vector<double> q2 = net::forward_critic(agent.target2, t.s_next);
        double v = 0.0;
        for (int a = 0; a < n_actions; ++a) v += probs[a] * std::min(q1[a], q2[a]);
        expected = t.reward + cfg.gamma * v;
      }
      CHECK(targets[b] == expected);  // bitwise
    }

    double plain_actor = 0.0;
    for (const Transition* t : batch) {
      const PolicyDistribution probs = net::forward_actor(agent.actor, t->s);
      const std::vector<double> q1 = net::forward_critic(agent.critic1, t->s);
      const std::vector<double> q2 = net::forward_critic(agent.critic2, t->s);
      double q_bar = 0.0;
      for (int a = 0; a < n_actions; ++a) q_bar += probs[a] * std::min(q1[a], q2[a]);
      plain_actor += -q_bar;
    }
    plain_actor /= static_cast<double>(batch.size());
    CHECK(actor_loss(batch, agent, cfg).loss == plain_actor);  // bitwise
  }
}

TEST_CASE("dual update arithmetic and clamping") {
  TrainerConfig cfg = small_config();
  cfg.epsilon = 0.1;
  cfg.dual_learning_rate = 5e-4;

  CHECK(dual_update(1.0, 0.3, cfg) == doctest::Approx(1.0001).epsilon(1e-12));
  CHECK(dual_update(1.0, 0.1, cfg) == 1.0);             // c == epsilon: unchanged
  CHECK(dual_update(0.0, 0.05, cfg) == 0.0);            // clamped at zero
  CHECK(dual_update(cfg.lambda_max, 1.0, cfg) == cfg.lambda_max);

  SUBCASE("direction follows the constraint residual") {
    Rng rng(71);
    for (int i = 0; i < 100; ++i) {
      const double lam = rng.uniform(0.0, 10.0);
      const double c = rng.uniform(0.0, 1.0);
      const double next = dual_update(lam, c, cfg);
      if (c > cfg.epsilon) CHECK(next >= lam);
      if (c < cfg.epsilon && lam > 0.0) CHECK(next <= lam);
    }
  }
}

TEST_CASE("polyak update") {
  const TrainerConfig cfg = small_config();
  Agent agent = make_agent(4, 3, cfg, 81);

  SUBCASE("tau=0 copies the online network") {
    polyak_update(agent.target1, agent.critic1, 0.0);
    for (std::size_t l = 0; l < agent.target1.layers.size(); ++l)
      CHECK(agent.target1.layers[l].w.v == agent.critic1.layers[l].w.v);
  }
  SUBCASE("tau=1 leaves the target untouched") {
    const net::Mlp before = agent.target2;
    net::Mlp perturbed = agent.critic2;
    perturbed.layers[0].w.v[0] += 1.0;
    polyak_update(agent.target2, perturbed, 1.0);
    CHECK(agent.target2.layers[0].w.v == before.layers[0].w.v);
  }
  SUBCASE("repeated updates shrink the distance geometrically") {
    const double tau = 0.75;
    net::Mlp target = agent.target1;
    double prev = -1.0;
    for (int k = 0; k < 8; ++k) {
      double dist = 0.0;
      for (std::size_t l = 0; l < target.layers.size(); ++l)
        for (std::size_t i = 0; i < target.layers[l].w.v.size(); ++i)
          dist = std::max(dist,
                          std::abs(target.layers[l].w.v[i] - agent.critic2.layers[l].w.v[i]));
      if (prev >= 0.0) CHECK(dist == doctest::Approx(prev * tau).epsilon(1e-9));
      prev = dist;
      polyak_update(target, agent.critic2, tau);
    }
  }
}

TEST_CASE("training on the toy task runs, is deterministic, honors Off mode") {
  using namespace lanerl::testing;
  const ToyMdp mdp = ToyMdp::make(5);

  TrainerConfig cfg = small_config();
  cfg.episodes = 12;
  cfg.batch_size = 32;
  cfg.buffer_capacity = 4000;
  cfg.exploration_steps = 60;
  cfg.guardian_mode = guardian::Mode::kOff;

  ToyTask task1 = ToyTask::with_optimal_expert(mdp, 0.05);
  const TrainResult r1 = train(task1, cfg, 77);
  ToyTask task2 = ToyTask::with_optimal_expert(mdp, 0.05);
  const TrainResult r2 = train(task2, cfg, 77);

  REQUIRE(r1.episodes.size() == 12);
  for (std::size_t i = 0; i < r1.episodes.size(); ++i) {
    CHECK(r1.episodes[i].episode_return == r2.episodes[i].episode_return);
    CHECK(r1.episodes[i].steps == r2.episodes[i].steps);
    CHECK(r1.episodes[i].lambda == r2.episodes[i].lambda);
    CHECK(r1.episodes[i].intervention_count == 0);  // Off mode
  }
  CHECK(r1.interventions.empty());

  SUBCASE("unsafe predicate plus continuous mode produces interventions") {
    TrainerConfig icfg = cfg;
    icfg.guardian_mode = guardian::Mode::kContinuous;
    ToyTask task3 = ToyTask::with_optimal_expert(mdp, 0.05);
    task3.set_unsafe_predicate([](int, int action) { return action == 0; });
    const TrainResult r3 = train(task3, icfg, 77);
    long total = 0;
    for (const EpisodeRecord& e : r3.episodes) total += e.intervention_count;
    CHECK(total > 0);
    // every intervened step replaced an unsafe action with the expert's
    for (const TaggedIntervention& ti : r3.interventions) {
      CHECK(ti.record.i1 == 1);
      if (ti.record.intervened()) CHECK(ti.record.a_applied == ti.record.a_expert);
    }
  }
}

TEST_CASE("evaluation: greedy, reproducible, js gap against itself is zero") {
  using namespace lanerl::testing;
  const ToyMdp mdp = ToyMdp::make(9);
  TrainerConfig cfg = small_config();
  Agent agent = make_agent(mdp.n_states, mdp.n_actions, cfg, 91);

  ToyTask task = ToyTask::with_optimal_expert(mdp, 0.05);
  const Metrics a = evaluate(task, agent, 5, 1234);
  const Metrics b = evaluate(task, agent, 5, 1234);
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i)
    CHECK(a.episodes[i].episode_return == b.episodes[i].episode_return);

  task.set_mirror(&agent);
  const Metrics mirrored = evaluate(task, agent, 3, 99, true);
  REQUIRE_FALSE(mirrored.js_gap.empty());
  for (double js : mirrored.js_gap) CHECK(js == doctest::Approx(0.0).epsilon(1e-12));
}
