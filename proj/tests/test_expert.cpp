#include <atomic>
#include <doctest.h>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lanerl/expert.hpp"

using namespace lanerl;
using namespace lanerl::expert;

namespace {

sim::World empty_world(std::uint64_t seed = 2) {
  sim::ScenarioConfig cfg;
  cfg.sv_count = 0;
  return sim::spawn_scenario(seed, cfg);
}

sim::VehicleState sv_at(const sim::RoadGeometry& geo, double x, int lane, double vx) {
  sim::VehicleState v;
  v.x = x;
  v.y = sim::lane_center(geo, lane);
  v.vx = vx;
  v.lane_index = lane;
  v.target_lane = lane;
  return v;
}

/// Scripted chat-completion endpoint for the client tests.
class MockEndpoint {
 public:
  explicit MockEndpoint(std::vector<std::string> replies, int delay_ms = 0)
      : replies_(std::move(replies)), delay_ms_(delay_ms) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
      if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
      const int i = std::min<int>(hits_.fetch_add(1), static_cast<int>(replies_.size()) - 1);
      nlohmann::json body{
          {"choices", {{{"message", {{"role", "assistant"}, {"content", replies_[i]}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this]() { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  int hits() const { return hits_.load(); }

 private:
  std::vector<std::string> replies_;
  int delay_ms_;
  httplib::Server server_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::thread thread_;
};

LlmConfig mock_config(const std::string& url) {
  LlmConfig cfg;
  cfg.endpoint_url = url;
  cfg.timeout_s = 5.0;
  cfg.api_key_env.clear();
  return cfg;
}

}  // namespace

TEST_CASE("action_to_distribution") {
  const PolicyDistribution onehot = action_to_distribution(Action::kIdle, 0.0);
  CHECK(onehot == PolicyDistribution{0, 1, 0, 0, 0});

  const PolicyDistribution smooth = action_to_distribution(Action::kIdle, 0.05);
  CHECK(smooth[1] == doctest::Approx(0.95));
  for (int i : {0, 2, 3, 4}) CHECK(smooth[i] == doctest::Approx(0.0125));

  for (double kappa : {0.0, 0.05, 0.2}) {
    double sum = 0.0;
    for (double p : action_to_distribution(Action::kDecelerate, kappa)) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(action_to_distribution(Action::kIdle, 0.5), DomainError);
}

TEST_CASE("rule oracle priorities") {
  const OracleConfig cfg;

  SUBCASE("clear adjacent lane: move toward the target") {
    sim::World w = empty_world();
    CHECK(rule_oracle(w, cfg) == Action::kRightLaneChange);
  }
  SUBCASE("unsafe adjacent lane, slow leader ahead: decelerate") {
    sim::World w = empty_world();
    w.ego.y = sim::lane_center(w.geometry, 3);
    w.ego.lane_index = 3;
    w.ego.target_lane = 3;
    w.ego.vx = 25.0;
    // front gap 8 m, front speed 18: TTC = 8/7 = 1.14 < 2.5
    w.svs.push_back(sv_at(w.geometry, w.ego.x + 8.0, 3, 18.0));
    CHECK(rule_oracle(w, cfg) == Action::kDecelerate);
  }
  SUBCASE("already cruising near the limit: idle") {
    sim::World w = empty_world();
    w.ego.y = sim::lane_center(w.geometry, 3);
    w.ego.lane_index = 3;
    w.ego.target_lane = 3;
    w.ego.vx = 29.5;
    CHECK(rule_oracle(w, cfg) == Action::kIdle);
  }
  SUBCASE("slow and clear: accelerate") {
    sim::World w = empty_world();
    w.ego.y = sim::lane_center(w.geometry, 3);
    w.ego.lane_index = 3;
    w.ego.target_lane = 3;
    w.ego.vx = 22.0;
    CHECK(rule_oracle(w, cfg) == Action::kAccelerate);
  }
  SUBCASE("pure function of the world") {
    sim::ScenarioConfig scfg;
    scfg.sv_count = 20;
    const sim::World w = sim::spawn_scenario(5, scfg);
    CHECK(rule_oracle(w, cfg) == rule_oracle(w, cfg));
  }
}

TEST_CASE("oracle expert advice invariants") {
  OracleExpert expert;
  sim::ScenarioConfig scfg;
  scfg.sv_count = 25;
  sim::World w = sim::spawn_scenario(9, scfg);
  for (int i = 0; i < 50; ++i) {
    const ExpertAdvice adv = expert.advise(w);
    CHECK(adv.source == AdviceSource::kOracle);
    CHECK(argmax(adv.distribution) == action_index(adv.action));
    double sum = 0.0;
    for (double p : adv.distribution) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    sim::step_world(w, sim::LowLevelControl{});
  }
}

TEST_CASE("build_prompt") {
  sim::ScenarioConfig scfg;
  scfg.sv_count = 30;
  const sim::World w = sim::spawn_scenario(13, scfg);

  const PromptBundle a = build_prompt(w, 6);
  const PromptBundle b = build_prompt(w, 6);
  CHECK(a.system_text == b.system_text);
  CHECK(a.scenario_text == b.scenario_text);

  // exactly K SV lines
  int sv_lines = 0;
  std::istringstream lines(a.scenario_text);
  std::string line;
  while (std::getline(lines, line))
    if (line.rfind("- Vehicle", 0) == 0) ++sv_lines;
  CHECK(sv_lines == 6);

  // the action menu carries all five tokens
  for (int i = 0; i < kActionCount; ++i)
    CHECK(a.system_text.find(action_token(static_cast<Action>(i))) != std::string::npos);

  SUBCASE("empty road sentinel") {
    const PromptBundle p = build_prompt(empty_world(), 6);
    CHECK(p.scenario_text.find("no surrounding vehicles") != std::string::npos);
  }
}

TEST_CASE("extract_action") {
  CHECK(extract_action("reasoning...\nDecision: RIGHT_LANE_CHANGE") == Action::kRightLaneChange);
  CHECK(extract_action("decision: idle") == Action::kIdle);
  CHECK(extract_action("**Decision: ACCELERATE**") == Action::kAccelerate);
  CHECK_THROWS_AS(extract_action("I would turn right."), FormatError);
  CHECK_THROWS_AS(extract_action(""), FormatError);
  // the last decision line wins
  CHECK(extract_action("Decision: IDLE\nwait, no.\nDecision: DECELERATE") == Action::kDecelerate);
  // a chat round trip of every token parses back
  for (int i = 0; i < kActionCount; ++i) {
    const Action a = static_cast<Action>(i);
    CHECK(extract_action("Decision: " + action_token(a)) == a);
  }
}

TEST_CASE("llm_advise: valid response on the first try") {
  MockEndpoint server({"Let me think.\nDecision: RIGHT_LANE_CHANGE"});
  LlmExpert expert(mock_config(server.url()));
  const ExpertAdvice adv = expert.advise(empty_world());
  CHECK(adv.action == Action::kRightLaneChange);
  CHECK(adv.source == AdviceSource::kLlm);
  CHECK(server.hits() == 1);
}

TEST_CASE("llm_advise: re-query after a malformed response") {
  MockEndpoint server({"I would merge right.", "Decision: RIGHT_LANE_CHANGE"});
  LlmExpert expert(mock_config(server.url()));
  const ExpertAdvice adv = expert.advise(empty_world());
  CHECK(adv.action == Action::kRightLaneChange);
  CHECK(adv.source == AdviceSource::kLlm);
  CHECK(server.hits() == 2);  // exactly one re-query
}

TEST_CASE("llm_advise: cache makes the second call free") {
  MockEndpoint server({"Decision: ACCELERATE"});
  LlmExpert expert(mock_config(server.url()));
  const sim::World w = empty_world();
  const ExpertAdvice first = expert.advise(w);
  CHECK(first.source == AdviceSource::kLlm);
  const ExpertAdvice second = expert.advise(w);
  CHECK(second.source == AdviceSource::kCache);
  CHECK(second.action == first.action);
  CHECK(server.hits() == 1);
}

TEST_CASE("llm_advise: endpoint down falls back to the oracle") {
  LlmConfig cfg = mock_config("http://127.0.0.1:9/v1/chat/completions");  // nothing listens
  cfg.timeout_s = 1.0;
  LlmExpert expert(cfg);
  const sim::World w = empty_world();
  const ExpertAdvice adv = expert.advise(w);
  CHECK(adv.source == AdviceSource::kLlmFallback);
  CHECK(adv.action == rule_oracle(w, cfg.oracle));

  SUBCASE("fallback disabled raises") {
    cfg.fallback_enabled = false;
    LlmExpert strict(cfg);
    CHECK_THROWS_AS(strict.advise(w), EndpointError);
  }
}

TEST_CASE("llm_advise: persistent malformed responses exhaust re-queries") {
  MockEndpoint server({"no decision here"});
  LlmConfig cfg = mock_config(server.url());
  cfg.max_requeries = 2;
  LlmExpert expert(cfg);
  const ExpertAdvice adv = expert.advise(empty_world());
  CHECK(adv.source == AdviceSource::kLlmFallback);
  CHECK(server.hits() == 3);  // initial + 2 re-queries
}
