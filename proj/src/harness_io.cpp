#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lanerl/harness.hpp"
#include "lanerl/rng.hpp"

namespace lanerl::harness {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

/// Shortest round-trip decimal form; keeps CSV bytes stable across reruns.
std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);  // binary: no newline translation
  if (!f) throw IoError("cannot open for write: " + path);
  return f;
}

json vehicle_to_json(const sim::VehicleState& v) {
  return json::array({v.x, v.y, v.vx, v.vy, v.heading, v.lane_index, v.target_lane,
                      v.desired_speed});
}

sim::VehicleState vehicle_from_json(const json& j) {
  if (!j.is_array() || j.size() != 8) throw FormatError("vehicle record must have 8 entries");
  sim::VehicleState v;
  v.x = j[0].get<double>();
  v.y = j[1].get<double>();
  v.vx = j[2].get<double>();
  v.vy = j[3].get<double>();
  v.heading = j[4].get<double>();
  v.lane_index = j[5].get<int>();
  v.target_lane = j[6].get<int>();
  v.desired_speed = j[7].get<double>();
  return v;
}

json world_to_json(const sim::World& w) {
  json svs = json::array();
  for (const sim::VehicleState& sv : w.svs) svs.push_back(vehicle_to_json(sv));
  return json{{"lane_count", w.geometry.lane_count},
              {"lane_length", w.geometry.lane_length},
              {"lane_width", w.geometry.lane_width},
              {"speed_limit", w.geometry.speed_limit},
              {"ego", vehicle_to_json(w.ego)},
              {"svs", svs},
              {"target_x", w.target_x},
              {"target_lane", w.target_lane},
              {"sim_time", w.sim_time},
              {"dt", w.dt},
              {"horizon", w.horizon},
              {"ego_target_speed", w.ego_target_speed}};
}

sim::World world_from_json(const json& j, const RunConfig& cfg) {
  sim::World w;
  w.geometry.lane_count = j.at("lane_count").get<int>();
  w.geometry.lane_length = j.at("lane_length").get<double>();
  w.geometry.lane_width = j.at("lane_width").get<double>();
  w.geometry.speed_limit = j.at("speed_limit").get<double>();
  w.ego = vehicle_from_json(j.at("ego"));
  for (const json& sv : j.at("svs")) w.svs.push_back(vehicle_from_json(sv));
  w.target_x = j.at("target_x").get<double>();
  w.target_lane = j.at("target_lane").get<int>();
  w.sim_time = j.at("sim_time").get<double>();
  w.dt = j.at("dt").get<double>();
  w.horizon = j.at("horizon").get<double>();
  w.ego_target_speed = j.at("ego_target_speed").get<double>();
  w.idm = cfg.scenario.idm;
  w.mobil = cfg.scenario.mobil;
  w.gains = cfg.scenario.gains;
  return w;
}

}  // namespace

// ---- HighwayTask ---------------------------------------------------------

HighwayTask::HighwayTask(const RunConfig& cfg, expert::ExpertPolicy* expert)
    : env_(cfg.scenario, cfg.reward, cfg.observation),
      expert_(expert),
      guardian_(cfg.guardian) {}

int HighwayTask::observation_size() const { return env_.observation_size(); }

std::vector<double> HighwayTask::reset(std::uint64_t seed) {
  advice_.reset();
  std::vector<double> obs = env_.reset(seed);
  step_index_ = 0;
  if (capture_) {
    replay_ = ReplayEpisode{};
    replay_.initial = env_.world();
  }
  return obs;
}

learner::TaskStep HighwayTask::step(int action) {
  env::StepOutcome o = env_.step(action_from_index(action));
  advice_.reset();
  if (capture_) {
    ReplayStep rs;
    rs.step = step_index_;
    rs.sim_time = env_.world().sim_time;
    rs.action = action;
    rs.ego = env_.world().ego;
    rs.svs = env_.world().svs;
    replay_.steps.push_back(std::move(rs));
  }
  ++step_index_;

  learner::TaskStep ts;
  ts.obs = std::move(o.observation);
  ts.reward = o.reward;
  ts.done = o.done;
  ts.truncated = false;
  ts.outcome = o.outcome;
  return ts;
}

const expert::ExpertAdvice& HighwayTask::advice() {
  if (!advice_) advice_ = expert_->advise(env_.world());
  return *advice_;
}

PolicyDistribution HighwayTask::expert_distribution() {
  if (!expert_) throw StateError("task has no expert attached");
  return advice().distribution;
}

int HighwayTask::expert_action() {
  if (!expert_) throw StateError("task has no expert attached");
  return action_index(advice().action);
}

bool HighwayTask::action_unsafe(int action) {
  return guardian::safety_indicator(env_.world(), action_from_index(action), guardian_) == 1;
}

void HighwayTask::annotate_step(int i1, int i2) {
  if (capture_ && !replay_.steps.empty()) {
    replay_.steps.back().i1 = i1;
    replay_.steps.back().i2 = i2;
  }
}

// ---- metrics helpers -----------------------------------------------------

std::vector<double> rolling_success(const std::vector<Outcome>& outcomes, int window) {
  std::vector<double> out(outcomes.size());
  int successes = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    successes += outcomes[i] == Outcome::kSuccess ? 1 : 0;
    if (static_cast<int>(i) >= window)
      successes -= outcomes[i - window] == Outcome::kSuccess ? 1 : 0;
    const int denom = std::min<int>(static_cast<int>(i) + 1, window);
    out[i] = static_cast<double>(successes) / denom;
  }
  return out;
}

// ---- CSV formats ---------------------------------------------------------

void write_episodes_csv(const std::string& path,
                        const std::vector<learner::EpisodeRecord>& episodes) {
  std::ofstream f = open_out(path);
  f << "# schema=episodes-v1\n";
  f << "episode,return,outcome,steps,intervention_count,intervention_rate,lambda,"
       "mean_constraint\n";
  for (const learner::EpisodeRecord& e : episodes) {
    f << e.episode << ',' << num(e.episode_return) << ',' << outcome_name(e.outcome) << ','
      << e.steps << ',' << e.intervention_count << ',' << num(e.intervention_rate) << ','
      << num(e.lambda) << ',' << num(e.mean_constraint) << '\n';
  }
}

ParsedEpisodes read_episodes_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "# schema=episodes-v1")
    throw SchemaError("unknown episodes schema in " + path);
  if (!std::getline(f, line)) throw SchemaError("missing header row in " + path);

  ParsedEpisodes out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8) throw SchemaError("bad episode row in " + path + ": " + line);
    learner::EpisodeRecord e;
    e.episode = std::stoi(fields[0]);
    e.episode_return = std::stod(fields[1]);
    if (fields[2] == "success") e.outcome = Outcome::kSuccess;
    else if (fields[2] == "collision") e.outcome = Outcome::kCollision;
    else if (fields[2] == "timeout") e.outcome = Outcome::kTimeout;
    else throw SchemaError("bad outcome '" + fields[2] + "' in " + path);
    e.steps = std::stoi(fields[3]);
    e.intervention_count = std::stoi(fields[4]);
    e.intervention_rate = std::stod(fields[5]);
    e.lambda = std::stod(fields[6]);
    e.mean_constraint = std::stod(fields[7]);
    out.episodes.push_back(e);
  }
  return out;
}

void write_interventions_csv(const std::string& path,
                             const std::vector<learner::TaggedIntervention>& records) {
  std::ofstream f = open_out(path);
  f << "# schema=interventions-v1\n";
  f << "episode,step,i1,i2,a_drl,a_expert,a_applied\n";
  for (const learner::TaggedIntervention& r : records) {
    f << r.episode << ',' << r.record.step << ',' << r.record.i1 << ',' << r.record.i2 << ','
      << action_name(r.record.a_drl) << ',' << action_name(r.record.a_expert) << ','
      << action_name(r.record.a_applied) << '\n';
  }
}

void write_permitted_csv(const std::string& path, const guardian::PermittedSet& permitted) {
  std::ofstream f = open_out(path);
  f << "# schema=permitted-v1\n";
  f << "episode\n";
  for (int e : permitted) f << e << '\n';
}

void write_eval_episodes_csv(const std::string& path,
                             const std::vector<learner::EvalEpisode>& episodes) {
  std::ofstream f = open_out(path);
  f << "# schema=eval-episodes-v1\n";
  f << "episode,return,outcome,steps\n";
  for (const learner::EvalEpisode& e : episodes) {
    f << e.episode << ',' << num(e.episode_return) << ',' << outcome_name(e.outcome) << ','
      << e.steps << '\n';
  }
}

void write_js_gap_csv(const std::string& path, const std::vector<double>& js_gap) {
  std::ofstream f = open_out(path);
  f << "# schema=jsgap-v1\n";
  f << "step,js\n";
  double acc = 0.0;
  for (std::size_t i = 0; i < js_gap.size(); ++i) {
    f << i << ',' << num(js_gap[i]) << '\n';
    acc += js_gap[i];
  }
  f << "mean," << num(js_gap.empty() ? 0.0 : acc / static_cast<double>(js_gap.size())) << '\n';
}

// ---- checkpoints ---------------------------------------------------------

void save_agent(const learner::Agent& agent, const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  net::save_params(agent.actor, dir + "/actor.bin");
  net::save_params(agent.critic1, dir + "/critic1.bin");
  net::save_params(agent.critic2, dir + "/critic2.bin");
  net::save_params(agent.target1, dir + "/target1.bin");
  net::save_params(agent.target2, dir + "/target2.bin");
  json meta{{"code_version", kCodeVersion},
            {"config_hash", config_hash(cfg)},
            {"lambda", agent.lambda},
            {"episodes_trained", cfg.trainer.episodes},
            {"obs_dim", agent.obs_dim},
            {"n_actions", agent.n_actions},
            {"hidden", cfg.trainer.hidden},
            {"algorithm", learner::algorithm_name(cfg.trainer.algorithm)}};
  std::ofstream f = open_out(dir + "/meta.json");
  f << meta.dump(2) << '\n';
}

learner::Agent load_agent(const std::string& dir, const RunConfig& cfg) {
  learner::Agent agent;
  agent.actor = net::load_params(dir + "/actor.bin");
  agent.critic1 = net::load_params(dir + "/critic1.bin");
  agent.critic2 = net::load_params(dir + "/critic2.bin");
  agent.target1 = net::load_params(dir + "/target1.bin");
  agent.target2 = net::load_params(dir + "/target2.bin");

  const int expected_obs = env::observation_size(cfg.observation);
  if (agent.actor.dims.front() != expected_obs)
    throw FormatError("checkpoint input size " + std::to_string(agent.actor.dims.front()) +
                      " does not match configured observation size " +
                      std::to_string(expected_obs));
  agent.obs_dim = agent.actor.dims.front();
  agent.n_actions = agent.actor.dims.back();

  std::ifstream mf(dir + "/meta.json");
  if (mf) {
    json meta;
    try {
      mf >> meta;
      agent.lambda = meta.value("lambda", agent.lambda);
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
    }
  }
  agent.actor_opt = net::make_adam(agent.actor);
  agent.critic1_opt = net::make_adam(agent.critic1);
  agent.critic2_opt = net::make_adam(agent.critic2);
  return agent;
}

// ---- replay files --------------------------------------------------------

void write_replay_file(const std::string& path, const ReplayEpisode& episode) {
  std::ofstream f = open_out(path);
  json header{{"schema", "replay-v1"}, {"initial", world_to_json(episode.initial)}};
  f << header.dump() << '\n';
  for (const ReplayStep& s : episode.steps) {
    json svs = json::array();
    for (const sim::VehicleState& sv : s.svs) svs.push_back(vehicle_to_json(sv));
    json rec{{"step", s.step},     {"time", s.sim_time}, {"action", s.action},
             {"i1", s.i1},         {"i2", s.i2},         {"ego", vehicle_to_json(s.ego)},
             {"svs", std::move(svs)}};
    f << rec.dump() << '\n';
  }
}

ReplayEpisode read_replay_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open replay file: " + path);
  std::string line;
  if (!std::getline(f, line)) throw FormatError("empty replay file: " + path);

  ReplayEpisode out;
  try {
    const json header = json::parse(line);
    if (header.value("schema", "") != "replay-v1")
      throw FormatError("unknown replay schema in " + path);
    RunConfig defaults;
    out.initial = world_from_json(header.at("initial"), defaults);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      ReplayStep s;
      s.step = rec.at("step").get<int>();
      s.sim_time = rec.at("time").get<double>();
      s.action = rec.at("action").get<int>();
      s.i1 = rec.at("i1").get<int>();
      s.i2 = rec.at("i2").get<int>();
      s.ego = vehicle_from_json(rec.at("ego"));
      for (const json& sv : rec.at("svs")) s.svs.push_back(vehicle_from_json(sv));
      out.steps.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError("bad replay record in " + path + ": " + e.what());
  }
  return out;
}

double replay_max_deviation(const ReplayEpisode& episode, const RunConfig& cfg) {
  sim::World w = episode.initial;
  w.idm = cfg.scenario.idm;
  w.mobil = cfg.scenario.mobil;
  w.gains = cfg.scenario.gains;

  double max_dev = 0.0;
  const auto compare = [&](const sim::VehicleState& a, const sim::VehicleState& b) {
    max_dev = std::max({max_dev, std::abs(a.x - b.x), std::abs(a.y - b.y),
                        std::abs(a.vx - b.vx), std::abs(a.vy - b.vy),
                        std::abs(a.heading - b.heading)});
  };

  for (const ReplayStep& s : episode.steps) {
    const sim::MetaActionResult meta =
        sim::meta_action_controller(w.ego, action_from_index(s.action), w.ego.target_lane,
                                    w.ego_target_speed, w.geometry, w.gains);
    w.ego.target_lane = meta.target_lane;
    w.ego_target_speed = meta.target_speed;
    sim::step_world(w, meta.control);

    compare(w.ego, s.ego);
    if (w.svs.size() != s.svs.size()) throw FormatError("replay SV count mismatch");
    for (std::size_t i = 0; i < w.svs.size(); ++i) compare(w.svs[i], s.svs[i]);
  }
  return max_dev;
}

}  // namespace lanerl::harness
