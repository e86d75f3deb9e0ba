#include "lanerl/expert.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lanerl/rng.hpp"

namespace lanerl::expert {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

double ttc_or_inf(const sim::VehicleState* follower, const sim::VehicleState* leader) {
  if (!follower || !leader) return std::numeric_limits<double>::infinity();
  return sim::ttc(*follower, *leader);
}

}  // namespace

std::string advice_source_name(AdviceSource s) {
  switch (s) {
    case AdviceSource::kOracle: return "oracle";
    case AdviceSource::kLlm: return "llm";
    case AdviceSource::kLlmFallback: return "llm_fallback";
    case AdviceSource::kCache: return "cache";
  }
  throw DomainError("invalid advice source");
}

PolicyDistribution action_to_distribution(Action a, double kappa) {
  if (kappa < 0.0 || kappa > 0.2) throw DomainError("kappa must be in [0, 0.2]");
  PolicyDistribution d(kActionCount, kappa / (kActionCount - 1));
  d[action_index(a)] = 1.0 - kappa;
  return d;
}

Action rule_oracle(const sim::World& w, const OracleConfig& cfg) {
  const sim::VehicleState& ego = w.ego;

  if (ego.lane_index != w.target_lane) {
    const int dir = (w.target_lane > ego.lane_index) ? +1 : -1;
    const int cand = ego.lane_index + dir;
    const sim::VehicleState* front = sim::nearest_front(w, cand, ego.x, &ego);
    const sim::VehicleState* rear = sim::nearest_rear(w, cand, ego.x, &ego);
    const bool safe = ttc_or_inf(&ego, front) >= cfg.ttc_front_target &&
                      ttc_or_inf(rear, &ego) >= cfg.ttc_rear_target;
    if (safe) return dir > 0 ? Action::kRightLaneChange : Action::kLeftLaneChange;
  }

  const sim::VehicleState* front = sim::nearest_front(w, ego.lane_index, ego.x, &ego);
  const double front_ttc = ttc_or_inf(&ego, front);
  if (front_ttc < cfg.ttc_front) return Action::kDecelerate;
  if (ego.speed() < cfg.cruise_speed - 1.0 && front_ttc >= 2.0 * cfg.ttc_front)
    return Action::kAccelerate;
  return Action::kIdle;
}

PromptBundle build_prompt(const sim::World& w, int k_nearest) {
  PromptBundle p;
  p.system_text =
      "You are an expert highway driver choosing the next maneuver for the ego vehicle.\n"
      "You will receive the kinematic states of the ego vehicle and nearby vehicles,\n"
      "the lane layout, and the target location.\n"
      "\n"
      "Think through the situation step by step before deciding:\n"
      "1. Locate every nearby vehicle relative to the ego vehicle.\n"
      "2. Judge whether moving toward the target lane is safe right now.\n"
      "3. Judge whether the current speed should change.\n"
      "4. Pick exactly one action.\n"
      "\n"
      "Available actions:\n"
      "- LEFT_LANE_CHANGE: move one lane to the left, speed unchanged\n"
      "- IDLE: stay in the lane, speed unchanged\n"
      "- RIGHT_LANE_CHANGE: move one lane to the right, speed unchanged\n"
      "- ACCELERATE: raise the target speed by 1 m/s\n"
      "- DECELERATE: lower the target speed by 1 m/s\n"
      "\n"
      "Write your reasoning, then end with one line of exactly this form:\n"
      "Decision: <TOKEN>\n"
      "where <TOKEN> is one of LEFT_LANE_CHANGE, IDLE, RIGHT_LANE_CHANGE, ACCELERATE, "
      "DECELERATE.\n";

  const sim::RoadGeometry& geo = w.geometry;
  const sim::VehicleState& ego = w.ego;
  std::ostringstream s;
  s << "Road: " << geo.lane_count << " lanes, lane width " << fmt1(geo.lane_width)
    << " m, speed limit " << fmt1(geo.speed_limit)
    << " m/s. Lane 1 is the leftmost lane, lane " << geo.lane_count << " the rightmost.\n";
  s << "Ego vehicle: lane " << (ego.lane_index + 1) << ", speed " << fmt1(ego.speed())
    << " m/s, offset " << fmt1(ego.y - sim::lane_center(geo, ego.lane_index))
    << " m from the lane center, heading " << fmt1(ego.heading * 180.0 / M_PI) << " deg.\n";
  const double dx = w.target_x - ego.x;
  const double dy = sim::lane_center(geo, w.target_lane) - ego.y;
  s << "Target: lane " << (w.target_lane + 1) << ", " << fmt1(std::sqrt(dx * dx + dy * dy))
    << " m away.\n";

  // K nearest SVs by Euclidean distance, described relative to the ego.
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < w.svs.size(); ++i) {
    const double ddx = w.svs[i].x - ego.x;
    const double ddy = w.svs[i].y - ego.y;
    order.emplace_back(ddx * ddx + ddy * ddy, i);
  }
  std::sort(order.begin(), order.end());
  const int shown = std::min<int>(k_nearest, static_cast<int>(order.size()));
  if (shown == 0) {
    s << "There are no surrounding vehicles nearby.\n";
  } else {
    s << "Surrounding vehicles (nearest " << shown << "):\n";
    for (int k = 0; k < shown; ++k) {
      const sim::VehicleState& sv = w.svs[order[k].second];
      const double rel_x = sv.x - ego.x;
      const double rel_v = sv.vx - ego.vx;
      s << "- Vehicle " << (k + 1) << ": lane " << (sv.lane_index + 1) << ", "
        << fmt1(std::abs(rel_x)) << " m " << (rel_x >= 0.0 ? "ahead" : "behind") << ", "
        << fmt1(std::abs(rel_v)) << " m/s " << (rel_v >= 0.0 ? "faster" : "slower")
        << " than the ego vehicle.\n";
    }
  }
  p.scenario_text = s.str();
  return p;
}

Action extract_action(const std::string& response_text) {
  static const std::regex pattern(
      "decision\\s*:\\s*(LEFT_LANE_CHANGE|IDLE|RIGHT_LANE_CHANGE|ACCELERATE|DECELERATE)",
      std::regex::icase);
  std::smatch m;
  std::string found;
  std::istringstream lines(response_text);
  std::string line;
  while (std::getline(lines, line)) {
    if (std::regex_search(line, m, pattern)) found = m[1].str();
  }
  if (found.empty())
    throw FormatError("no 'Decision: <TOKEN>' line in response");
  std::transform(found.begin(), found.end(), found.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return action_from_token(found);
}

ExpertAdvice OracleExpert::advise(const sim::World& w) {
  const auto t0 = Clock::now();
  ExpertAdvice adv;
  adv.action = rule_oracle(w, cfg_);
  adv.distribution = action_to_distribution(adv.action, kappa_);
  adv.source = AdviceSource::kOracle;
  adv.latency_s = seconds_since(t0);
  return adv;
}

namespace {

// Splits http://host:port/path into the client base and the request path.
void split_url(const std::string& url, std::string* base, std::string* path) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = (scheme_end == std::string::npos) ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) {
    *base = url;
    *path = "/";
  } else {
    *base = url.substr(0, path_start);
    *path = url.substr(path_start);
  }
}

}  // namespace

LlmExpert::LlmExpert(LlmConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.max_requeries < 0) throw ConfigError("max_requeries must be >= 0");
  if (cfg_.timeout_s <= 0) throw ConfigError("timeout must be positive");
  if (cfg_.kappa < 0.0 || cfg_.kappa > 0.2) throw ConfigError("kappa must be in [0, 0.2]");
  if (cfg_.cache_enabled && !cfg_.cache_path.empty()) {
    std::ifstream f(cfg_.cache_path);
    std::string hash_str, action_str, model;
    while (f >> hash_str >> action_str >> model) {
      if (model != cfg_.model) continue;
      cache_[std::stoull(hash_str)] = action_from_token(action_str);
    }
  }
}

bool LlmExpert::cache_lookup(std::uint64_t key, Action* out) {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  const auto it = cache_.find(key);
  if (it == cache_.end()) return false;
  *out = it->second;
  return true;
}

void LlmExpert::cache_insert(std::uint64_t key, Action a) {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  if (!cache_.emplace(key, a).second) return;
  if (!cfg_.cache_path.empty()) {
    std::ofstream f(cfg_.cache_path, std::ios::app);
    f << key << ' ' << action_token(a) << ' ' << cfg_.model << '\n';
  }
}

ExpertAdvice LlmExpert::advise(const sim::World& w) {
  const auto t0 = Clock::now();
  const PromptBundle prompt = build_prompt(w, cfg_.k_nearest);
  const std::uint64_t key = fnv1a(prompt.scenario_text);

  ExpertAdvice adv;
  if (cfg_.cache_enabled && cache_lookup(key, &adv.action)) {
    adv.source = AdviceSource::kCache;
    adv.distribution = action_to_distribution(adv.action, cfg_.kappa);
    adv.latency_s = seconds_since(t0);
    return adv;
  }

  std::string base, path;
  split_url(cfg_.endpoint_url, &base, &path);
  httplib::Client client(base);
  const int timeout_whole = static_cast<int>(cfg_.timeout_s);
  client.set_connection_timeout(timeout_whole, 0);
  client.set_read_timeout(timeout_whole, 0);

  nlohmann::json messages = nlohmann::json::array();
  messages.push_back({{"role", "system"}, {"content", prompt.system_text}});
  messages.push_back({{"role", "user"}, {"content", prompt.scenario_text}});

  const char* api_key = cfg_.api_key_env.empty() ? nullptr : std::getenv(cfg_.api_key_env.c_str());
  httplib::Headers headers;
  if (api_key) headers.emplace("Authorization", std::string("Bearer ") + api_key);

  for (int attempt = 0; attempt <= cfg_.max_requeries; ++attempt) {
    nlohmann::json body = {
        {"model", cfg_.model}, {"messages", messages}, {"temperature", cfg_.temperature}};
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res || res->status != 200) break;  // endpoint failure: fall back

    std::string content;
    try {
      content = nlohmann::json::parse(res->body)
                    .at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      break;
    }

    ++request_count_;
    try {
      adv.action = extract_action(content);
      adv.source = AdviceSource::kLlm;
      adv.distribution = action_to_distribution(adv.action, cfg_.kappa);
      adv.latency_s = seconds_since(t0);
      if (cfg_.cache_enabled) cache_insert(key, adv.action);
      return adv;
    } catch (const FormatError&) {
      // Re-query with the malformed reply and a correction instruction.
      messages.push_back({{"role", "assistant"}, {"content", content}});
      messages.push_back(
          {{"role", "user"},
           {"content",
            "Your previous reply was not in the required format. Answer again and end "
            "with exactly one line of the form 'Decision: <TOKEN>'."}});
    }
  }

  if (!cfg_.fallback_enabled)
    throw EndpointError("LLM endpoint failed and fallback is disabled: " + cfg_.endpoint_url);
  adv.action = rule_oracle(w, cfg_.oracle);
  adv.source = AdviceSource::kLlmFallback;
  adv.distribution = action_to_distribution(adv.action, cfg_.kappa);
  adv.latency_s = seconds_since(t0);
  return adv;
}

}  // namespace lanerl::expert
