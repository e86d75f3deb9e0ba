#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lanerl/harness.hpp"
#include "lanerl/rng.hpp"

namespace lanerl::harness {

namespace {

using nlohmann::json;

/// Applies `fn` to obj[key] when present and records the key as known.
class SectionReader {
 public:
  SectionReader(const json& obj, std::string name) : obj_(obj), name_(std::move(name)) {
    if (!obj.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
  }

  template <typename T>
  void field(const char* key, T& out) {
    known_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + name_ + "." + key + "': " + e.what());
    }
  }

  const json* subsection(const char* key) {
    known_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  /// Call last: rejects any key not consumed above.
  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (!known_.count(key))
        throw ConfigError("unknown key '" + name_ + "." + key + "'");
  }

 private:
  const json& obj_;
  std::string name_;
  std::set<std::string> known_;
};

void read_scenario(const json& j, sim::ScenarioConfig& s) {
  SectionReader r(j, "scenario");
  r.field("lane_count", s.geometry.lane_count);
  r.field("lane_length", s.geometry.lane_length);
  r.field("lane_width", s.geometry.lane_width);
  r.field("speed_limit", s.geometry.speed_limit);
  r.field("sv_count", s.sv_count);
  r.field("spacing_min", s.spacing_min);
  r.field("spacing_max", s.spacing_max);
  r.field("sv_speed_min", s.sv_speed_min);
  r.field("sv_speed_max", s.sv_speed_max);
  r.field("ego_speed", s.ego_speed);
  r.field("ego_x_min", s.ego_x_min);
  r.field("ego_x_max", s.ego_x_max);
  r.field("spawn_back", s.spawn_back);
  r.field("ego_clearance", s.ego_clearance);
  r.field("target_ahead", s.target_ahead);
  r.field("dt", s.dt);
  r.field("horizon", s.horizon);
  r.finish();
}

void read_control(const json& j, sim::ControlGains& g) {
  SectionReader r(j, "control");
  r.field("speed_gain", g.speed_gain);
  r.field("position_gain", g.position_gain);
  r.field("heading_gain", g.heading_gain);
  r.field("steer_max", g.steer_max);
  r.field("accel_max", g.accel_max);
  r.field("centered_tolerance", g.centered_tolerance);
  r.finish();
}

void read_idm(const json& j, sim::IdmParams& p) {
  SectionReader r(j, "idm");
  r.field("accel_max", p.accel_max);
  r.field("brake_comfort", p.brake_comfort);
  r.field("min_spacing", p.min_spacing);
  r.field("time_headway", p.time_headway);
  r.field("exponent", p.exponent);
  r.field("brake_hard", p.brake_hard);
  r.finish();
}

void read_mobil(const json& j, sim::MobilParams& p) {
  SectionReader r(j, "mobil");
  r.field("politeness", p.politeness);
  r.field("accel_threshold", p.accel_threshold);
  r.field("brake_safe", p.brake_safe);
  r.field("min_clearance", p.min_clearance);
  r.finish();
}

void read_reward(const json& j, env::RewardConfig& c) {
  SectionReader r(j, "reward");
  r.field("w_success", c.w_success);
  r.field("w_failure", c.w_failure);
  r.field("w_right", c.w_right);
  r.field("w_left", c.w_left);
  r.field("w_speed", c.w_speed);
  r.field("w_safety", c.w_safety);
  r.field("heading_eps", c.heading_eps);
  r.field("v_min", c.v_min);
  r.field("v_max", c.v_max);
  r.finish();
}

void read_observation(const json& j, env::ObservationConfig& c) {
  SectionReader r(j, "observation");
  r.field("k_nearest", c.k_nearest);
  r.field("speed_extent", c.speed_extent);
  r.field("heading_extent", c.heading_extent);
  r.field("rel_position_extent", c.rel_position_extent);
  r.field("target_distance_extent", c.target_distance_extent);
  r.finish();
}

void read_guardian(const json& j, guardian::GuardianConfig& c) {
  SectionReader r(j, "guardian");
  r.field("ttc_front_target", c.ttc_front_target);
  r.field("ttc_rear_target", c.ttc_rear_target);
  r.field("ttc_front", c.ttc_front);
  r.field("ttc_rear", c.ttc_rear);
  std::string mode = guardian::mode_name(c.mode);
  r.field("mode", mode);
  c.mode = guardian::mode_from_name(mode);
  r.field("permit_fraction", c.permit_fraction);
  r.finish();
}

void read_expert(const json& j, RunConfig& cfg) {
  SectionReader r(j, "expert");
  r.field("kind", cfg.expert_kind);
  r.field("kappa", cfg.expert_kappa);
  r.field("ttc_front_target", cfg.oracle.ttc_front_target);
  r.field("ttc_rear_target", cfg.oracle.ttc_rear_target);
  r.field("ttc_front", cfg.oracle.ttc_front);
  r.field("cruise_speed", cfg.oracle.cruise_speed);
  r.field("endpoint_url", cfg.llm.endpoint_url);
  r.field("model", cfg.llm.model);
  r.field("api_key_env", cfg.llm.api_key_env);
  r.field("timeout_s", cfg.llm.timeout_s);
  r.field("max_requeries", cfg.llm.max_requeries);
  r.field("temperature", cfg.llm.temperature);
  r.field("cache_enabled", cfg.llm.cache_enabled);
  r.field("cache_path", cfg.llm.cache_path);
  r.field("fallback_enabled", cfg.llm.fallback_enabled);
  r.finish();
  if (cfg.expert_kind != "oracle" && cfg.expert_kind != "llm")
    throw ConfigError("expert.kind must be 'oracle' or 'llm'");
}

void read_trainer(const json& j, learner::TrainerConfig& c) {
  SectionReader r(j, "trainer");
  std::string algorithm = learner::algorithm_name(c.algorithm);
  r.field("algorithm", algorithm);
  c.algorithm = learner::algorithm_from_name(algorithm);
  r.field("gamma", c.gamma);
  r.field("epsilon", c.epsilon);
  r.field("learning_rate", c.learning_rate);
  r.field("dual_learning_rate", c.dual_learning_rate);
  r.field("batch_size", c.batch_size);
  r.field("exploration_steps", c.exploration_steps);
  r.field("episodes", c.episodes);
  r.field("polyak", c.polyak);
  r.field("lambda_init", c.lambda_init);
  r.field("lambda_max", c.lambda_max);
  r.field("buffer_capacity", c.buffer_capacity);
  r.field("hidden", c.hidden);
  r.field("entropy_coef", c.entropy_coef);
  r.field("rp_penalty", c.rp_penalty);
  r.field("bc_weight", c.bc_weight);
  r.field("margin", c.margin);
  r.field("demo_count", c.demo_count);
  r.finish();
}

json scenario_to_json(const sim::ScenarioConfig& s) {
  return json{{"lane_count", s.geometry.lane_count},
              {"lane_length", s.geometry.lane_length},
              {"lane_width", s.geometry.lane_width},
              {"speed_limit", s.geometry.speed_limit},
              {"sv_count", s.sv_count},
              {"spacing_min", s.spacing_min},
              {"spacing_max", s.spacing_max},
              {"sv_speed_min", s.sv_speed_min},
              {"sv_speed_max", s.sv_speed_max},
              {"ego_speed", s.ego_speed},
              {"ego_x_min", s.ego_x_min},
              {"ego_x_max", s.ego_x_max},
              {"spawn_back", s.spawn_back},
              {"ego_clearance", s.ego_clearance},
              {"target_ahead", s.target_ahead},
              {"dt", s.dt},
              {"horizon", s.horizon}};
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  SectionReader root(j, "config");
  root.field("label", cfg.label);
  root.field("seeds", cfg.seeds);
  root.field("out_dir", cfg.out_dir);
  root.field("jobs", cfg.jobs);
  root.field("replay_capture", cfg.replay_capture);
  if (const json* s = root.subsection("scenario")) read_scenario(*s, cfg.scenario);
  if (const json* s = root.subsection("control")) read_control(*s, cfg.scenario.gains);
  if (const json* s = root.subsection("idm")) read_idm(*s, cfg.scenario.idm);
  if (const json* s = root.subsection("mobil")) read_mobil(*s, cfg.scenario.mobil);
  if (const json* s = root.subsection("reward")) read_reward(*s, cfg.reward);
  if (const json* s = root.subsection("observation")) read_observation(*s, cfg.observation);
  if (const json* s = root.subsection("guardian")) read_guardian(*s, cfg.guardian);
  if (const json* s = root.subsection("expert")) read_expert(*s, cfg);
  if (const json* s = root.subsection("trainer")) read_trainer(*s, cfg.trainer);
  root.finish();

  cfg.trainer.guardian_mode = cfg.guardian.mode;
  cfg.trainer.permit_fraction = cfg.guardian.permit_fraction;
  cfg.llm.kappa = cfg.expert_kappa;
  cfg.llm.k_nearest = cfg.observation.k_nearest;
  cfg.llm.oracle = cfg.oracle;
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config file not found: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  json j;
  j["label"] = cfg.label;
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  j["jobs"] = cfg.jobs;
  j["replay_capture"] = cfg.replay_capture;
  j["scenario"] = scenario_to_json(cfg.scenario);
  j["control"] = json{{"speed_gain", cfg.scenario.gains.speed_gain},
                      {"position_gain", cfg.scenario.gains.position_gain},
                      {"heading_gain", cfg.scenario.gains.heading_gain},
                      {"steer_max", cfg.scenario.gains.steer_max},
                      {"accel_max", cfg.scenario.gains.accel_max},
                      {"centered_tolerance", cfg.scenario.gains.centered_tolerance}};
  j["idm"] = json{{"accel_max", cfg.scenario.idm.accel_max},
                  {"brake_comfort", cfg.scenario.idm.brake_comfort},
                  {"min_spacing", cfg.scenario.idm.min_spacing},
                  {"time_headway", cfg.scenario.idm.time_headway},
                  {"exponent", cfg.scenario.idm.exponent},
                  {"brake_hard", cfg.scenario.idm.brake_hard}};
  j["mobil"] = json{{"politeness", cfg.scenario.mobil.politeness},
                    {"accel_threshold", cfg.scenario.mobil.accel_threshold},
                    {"brake_safe", cfg.scenario.mobil.brake_safe},
                    {"min_clearance", cfg.scenario.mobil.min_clearance}};
  j["reward"] = json{{"w_success", cfg.reward.w_success},
                     {"w_failure", cfg.reward.w_failure},
                     {"w_right", cfg.reward.w_right},
                     {"w_left", cfg.reward.w_left},
                     {"w_speed", cfg.reward.w_speed},
                     {"w_safety", cfg.reward.w_safety},
                     {"heading_eps", cfg.reward.heading_eps},
                     {"v_min", cfg.reward.v_min},
                     {"v_max", cfg.reward.v_max}};
  j["observation"] = json{{"k_nearest", cfg.observation.k_nearest},
                          {"speed_extent", cfg.observation.speed_extent},
                          {"heading_extent", cfg.observation.heading_extent},
                          {"rel_position_extent", cfg.observation.rel_position_extent},
                          {"target_distance_extent", cfg.observation.target_distance_extent}};
  j["guardian"] = json{{"ttc_front_target", cfg.guardian.ttc_front_target},
                       {"ttc_rear_target", cfg.guardian.ttc_rear_target},
                       {"ttc_front", cfg.guardian.ttc_front},
                       {"ttc_rear", cfg.guardian.ttc_rear},
                       {"mode", guardian::mode_name(cfg.guardian.mode)},
                       {"permit_fraction", cfg.guardian.permit_fraction}};
  j["expert"] = json{{"kind", cfg.expert_kind},
                     {"kappa", cfg.expert_kappa},
                     {"ttc_front_target", cfg.oracle.ttc_front_target},
                     {"ttc_rear_target", cfg.oracle.ttc_rear_target},
                     {"ttc_front", cfg.oracle.ttc_front},
                     {"cruise_speed", cfg.oracle.cruise_speed},
                     {"endpoint_url", cfg.llm.endpoint_url},
                     {"model", cfg.llm.model},
                     {"api_key_env", cfg.llm.api_key_env},
                     {"timeout_s", cfg.llm.timeout_s},
                     {"max_requeries", cfg.llm.max_requeries},
                     {"temperature", cfg.llm.temperature},
                     {"cache_enabled", cfg.llm.cache_enabled},
                     {"cache_path", cfg.llm.cache_path},
                     {"fallback_enabled", cfg.llm.fallback_enabled}};
  j["trainer"] = json{{"algorithm", learner::algorithm_name(cfg.trainer.algorithm)},
                      {"gamma", cfg.trainer.gamma},
                      {"epsilon", cfg.trainer.epsilon},
                      {"learning_rate", cfg.trainer.learning_rate},
                      {"dual_learning_rate", cfg.trainer.dual_learning_rate},
                      {"batch_size", cfg.trainer.batch_size},
                      {"exploration_steps", cfg.trainer.exploration_steps},
                      {"episodes", cfg.trainer.episodes},
                      {"polyak", cfg.trainer.polyak},
                      {"lambda_init", cfg.trainer.lambda_init},
                      {"lambda_max", cfg.trainer.lambda_max},
                      {"buffer_capacity", cfg.trainer.buffer_capacity},
                      {"hidden", cfg.trainer.hidden},
                      {"entropy_coef", cfg.trainer.entropy_coef},
                      {"rp_penalty", cfg.trainer.rp_penalty},
                      {"bc_weight", cfg.trainer.bc_weight},
                      {"margin", cfg.trainer.margin},
                      {"demo_count", cfg.trainer.demo_count}};
  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(serialize_run_config(cfg)); }

std::unique_ptr<expert::ExpertPolicy> make_expert(const RunConfig& cfg) {
  if (cfg.expert_kind == "oracle")
    return std::make_unique<expert::OracleExpert>(cfg.oracle, cfg.expert_kappa);
  if (cfg.expert_kind == "llm") return std::make_unique<expert::LlmExpert>(cfg.llm);
  throw ConfigError("unknown expert kind: '" + cfg.expert_kind + "'");
}

}  // namespace lanerl::harness
