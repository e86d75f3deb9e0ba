#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "lanerl/harness.hpp"

namespace lanerl::harness {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw ConfigError("empty seed list: '" + text + "'");
  return seeds;
}

struct SeedSummary {
  std::uint64_t seed = 0;
  long total_steps = 0;
  long total_interventions = 0;
  double total_intervention_rate = 0.0;
  double mean_return = 0.0;
  double final_rolling20 = 0.0;
  int successes = 0;
  int collisions = 0;
  int timeouts = 0;
  double final_lambda = 0.0;
  double wall_clock_s = 0.0;
};

SeedSummary summarize(std::uint64_t seed, const learner::TrainResult& result) {
  SeedSummary s;
  s.seed = seed;
  std::vector<Outcome> outcomes;
  for (const learner::EpisodeRecord& e : result.episodes) {
    s.total_steps += e.steps;
    s.total_interventions += e.intervention_count;
    s.mean_return += e.episode_return;
    s.wall_clock_s += e.wall_clock_s;
    outcomes.push_back(e.outcome);
    if (e.outcome == Outcome::kSuccess) ++s.successes;
    else if (e.outcome == Outcome::kCollision) ++s.collisions;
    else ++s.timeouts;
  }
  if (!result.episodes.empty()) {
    s.mean_return /= static_cast<double>(result.episodes.size());
    s.final_rolling20 = rolling_success(outcomes).back();
    s.final_lambda = result.episodes.back().lambda;
  }
  s.total_intervention_rate =
      s.total_steps > 0 ? static_cast<double>(s.total_interventions) / s.total_steps : 0.0;
  return s;
}

json summary_to_json(const SeedSummary& s) {
  return json{{"seed", s.seed},
              {"total_steps", s.total_steps},
              {"total_interventions", s.total_interventions},
              {"total_intervention_rate", s.total_intervention_rate},
              {"mean_return", s.mean_return},
              {"final_rolling20_success", s.final_rolling20},
              {"successes", s.successes},
              {"collisions", s.collisions},
              {"timeouts", s.timeouts},
              {"final_lambda", s.final_lambda},
              {"wall_clock_s", s.wall_clock_s}};
}

/// Trains one seed and writes its output directory. Returns the summary.
SeedSummary run_training_seed(const RunConfig& cfg, std::uint64_t seed,
                              const std::string& seed_dir) {
  std::unique_ptr<expert::ExpertPolicy> exp = make_expert(cfg);
  HighwayTask task(cfg, exp.get());
  task.set_replay_capture(cfg.replay_capture);

  std::function<void(const learner::EpisodeRecord&)> on_episode;
  if (cfg.replay_capture) {
    on_episode = [&](const learner::EpisodeRecord& rec) {
      write_replay_file(seed_dir + "/replays/episode_" + std::to_string(rec.episode) + ".jsonl",
                        task.replay());
    };
  }

  const learner::TrainResult result = learner::train(task, cfg.trainer, seed, on_episode);

  fs::create_directories(seed_dir);
  {
    std::ofstream f(seed_dir + "/resolved_config.json", std::ios::binary);
    f << serialize_run_config(cfg);
  }
  write_episodes_csv(seed_dir + "/episodes.csv", result.episodes);
  write_interventions_csv(seed_dir + "/interventions.csv", result.interventions);
  write_permitted_csv(seed_dir + "/permitted_episodes.csv", result.permitted);
  save_agent(result.agent, cfg, seed_dir + "/checkpoint");

  const SeedSummary summary = summarize(seed, result);
  json j = summary_to_json(summary);
  j["label"] = cfg.label;
  j["algorithm"] = learner::algorithm_name(cfg.trainer.algorithm);
  j["expert"] = cfg.expert_kind;
  j["config_hash"] = config_hash(cfg);
  j["code_version"] = kCodeVersion;
  j["episodes"] = cfg.trainer.episodes;
  j["permitted_episodes"] = result.permitted.size();
  std::ofstream f(seed_dir + "/summary.json", std::ios::binary);
  f << j.dump(2) << '\n';
  return summary;
}

}  // namespace

int cli_train(const TrainOptions& opts) {
  RunConfig cfg;
  try {
    cfg = load_run_config(opts.config_path);
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << '\n';
    return 2;
  }

  try {
    if (!opts.algo_override.empty())
      cfg.trainer.algorithm = learner::algorithm_from_name(opts.algo_override);
    if (!opts.expert_override.empty()) {
      if (opts.expert_override != "oracle" && opts.expert_override != "llm")
        throw ConfigError("expert must be 'oracle' or 'llm'");
      cfg.expert_kind = opts.expert_override;
    }
    if (!opts.seeds_override.empty()) cfg.seeds = parse_seed_list(opts.seeds_override);
    if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
    if (!opts.label_override.empty()) cfg.label = opts.label_override;
    if (!opts.guardian_mode_override.empty()) {
      cfg.guardian.mode = guardian::mode_from_name(opts.guardian_mode_override);
      cfg.trainer.guardian_mode = cfg.guardian.mode;
    }
    if (opts.episodes_override > 0) cfg.trainer.episodes = opts.episodes_override;
    if (opts.jobs_override > 0) cfg.jobs = opts.jobs_override;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << '\n';
    return 2;
  }

  try {
    fs::create_directories(cfg.out_dir);
    std::vector<SeedSummary> summaries(cfg.seeds.size());
    std::vector<std::string> errors(cfg.seeds.size());

    const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(cfg.seeds.size())));
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cfg.seeds.size()) return;
        const std::string seed_dir = cfg.out_dir + "/seed" + std::to_string(cfg.seeds[i]);
        try {
          summaries[i] = run_training_seed(cfg, cfg.seeds[i], seed_dir);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    };
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
      for (std::thread& t : pool) t.join();
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
      if (!errors[i].empty())
        throw StateError("seed " + std::to_string(cfg.seeds[i]) + " failed: " + errors[i]);

    json per_seed = json::array();
    for (const SeedSummary& s : summaries) per_seed.push_back(summary_to_json(s));
    json run{{"label", cfg.label},
             {"algorithm", learner::algorithm_name(cfg.trainer.algorithm)},
             {"expert", cfg.expert_kind},
             {"config_hash", config_hash(cfg)},
             {"code_version", kCodeVersion},
             {"seeds", cfg.seeds},
             {"per_seed", per_seed}};
    std::ofstream f(cfg.out_dir + "/summary.json", std::ios::binary);
    f << run.dump(2) << '\n';
    std::cout << "trained " << cfg.seeds.size() << " seed(s) into " << cfg.out_dir << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << '\n';
    return 1;
  }
}

int cli_eval(const EvalOptions& opts) {
  RunConfig cfg;
  try {
    const std::string cfg_path =
        opts.config_path.empty() ? opts.checkpoint_dir + "/resolved_config.json"
                                 : opts.config_path;
    cfg = load_run_config(cfg_path);
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << '\n';
    return 2;
  }

  try {
    const learner::Agent agent = load_agent(opts.checkpoint_dir + "/checkpoint", cfg);

    std::unique_ptr<expert::ExpertPolicy> oracle;
    if (opts.js_against_oracle)
      oracle = std::make_unique<expert::OracleExpert>(cfg.oracle, cfg.expert_kappa);
    HighwayTask task(cfg, oracle.get());

    const std::string out_dir =
        opts.out_dir.empty() ? opts.checkpoint_dir + "/eval" : opts.out_dir;
    fs::create_directories(out_dir);

    const bool capture = !opts.replay_out.empty();
    task.set_replay_capture(capture);
    std::function<void(const learner::EvalEpisode&)> on_episode;
    if (capture) {
      fs::create_directories(opts.replay_out);
      on_episode = [&](const learner::EvalEpisode& rec) {
        write_replay_file(opts.replay_out + "/episode_" + std::to_string(rec.episode) + ".jsonl",
                          task.replay());
      };
    }

    const learner::Metrics metrics = learner::evaluate(task, agent, opts.episodes, opts.seed,
                                                       opts.js_against_oracle, on_episode);

    write_eval_episodes_csv(out_dir + "/episodes.csv", metrics.episodes);
    if (opts.js_against_oracle) write_js_gap_csv(out_dir + "/js_gap.csv", metrics.js_gap);

    json j{{"checkpoint", opts.checkpoint_dir},
           {"episodes", opts.episodes},
           {"seed", opts.seed},
           {"success_rate", metrics.success_rate},
           {"collision_rate", metrics.collision_rate},
           {"return_mean", metrics.return_mean},
           {"return_std", metrics.return_std},
           {"mean_steps", metrics.mean_steps},
           {"mean_policy_latency_s", metrics.mean_policy_latency_s},
           {"code_version", kCodeVersion},
           {"config_hash", config_hash(cfg)}};
    if (opts.js_against_oracle) j["js_gap_mean"] = metrics.js_gap_mean;
    std::ofstream f(out_dir + "/metrics.json", std::ios::binary);
    f << j.dump(2) << '\n';
    std::cout << "evaluated " << opts.episodes << " episode(s): success_rate="
              << metrics.success_rate << " collision_rate=" << metrics.collision_rate << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << '\n';
    return 1;
  }
}

namespace {

struct RunData {
  std::string label;
  std::vector<ParsedEpisodes> seeds;
};

RunData load_run_dir(const std::string& dir) {
  RunData run;
  run.label = fs::path(dir).filename().string();
  if (run.label.empty()) run.label = dir;

  std::vector<std::string> files;
  if (fs::exists(fs::path(dir) / "episodes.csv")) {
    files.push_back((fs::path(dir) / "episodes.csv").string());
  } else {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "episodes.csv"))
        names.push_back((entry.path() / "episodes.csv").string());
    }
    std::sort(names.begin(), names.end());
    files = std::move(names);
  }
  if (files.empty()) throw MissingDataError("no episodes.csv under " + dir);
  for (const std::string& f : files) run.seeds.push_back(read_episodes_csv(f));
  return run;
}

}  // namespace

int cli_compare(const CompareOptions& opts) {
  try {
    if (opts.run_dirs.size() < 2) throw ConfigError("compare needs at least 2 run directories");
    std::vector<RunData> runs;
    for (const std::string& dir : opts.run_dirs) runs.push_back(load_run_dir(dir));

    const std::size_t n_episodes = runs.front().seeds.front().episodes.size();
    for (const RunData& run : runs)
      for (const ParsedEpisodes& seed : run.seeds)
        if (seed.episodes.size() != n_episodes)
          throw SchemaError("mismatched episode counts across runs");

    // Per-seed rolling success, then per-episode mean/std across seeds.
    struct RunStats {
      std::vector<std::vector<double>> rolling;  // per seed
      double total_interventions = 0.0;
      double total_steps = 0.0;
    };
    std::vector<RunStats> stats(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) {
      for (const ParsedEpisodes& seed : runs[r].seeds) {
        std::vector<Outcome> outcomes;
        for (const learner::EpisodeRecord& e : seed.episodes) {
          outcomes.push_back(e.outcome);
          stats[r].total_interventions += e.intervention_count;
          stats[r].total_steps += e.steps;
        }
        stats[r].rolling.push_back(rolling_success(outcomes));
      }
    }

    const auto mean_std = [](const std::vector<double>& xs) {
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      return std::pair<double, double>(mean, std::sqrt(var / static_cast<double>(xs.size())));
    };
    const auto num = [](double v) {
      char buf[64];
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      return std::string(buf, res.ptr);
    };

    const fs::path out_path(opts.out_path);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    std::ofstream f(opts.out_path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + opts.out_path);
    f << "# schema=compare-v1\n";
    f << "episode";
    for (const RunData& run : runs)
      f << ',' << run.label << "_return_mean," << run.label << "_return_std," << run.label
        << "_success20_mean," << run.label << "_success20_std," << run.label
        << "_cum_interventions_mean";
    f << '\n';

    std::vector<std::vector<double>> cum(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) cum[r].assign(runs[r].seeds.size(), 0.0);

    for (std::size_t e = 0; e < n_episodes; ++e) {
      f << (e + 1);
      for (std::size_t r = 0; r < runs.size(); ++r) {
        std::vector<double> rets, rolls;
        for (std::size_t s = 0; s < runs[r].seeds.size(); ++s) {
          rets.push_back(runs[r].seeds[s].episodes[e].episode_return);
          rolls.push_back(stats[r].rolling[s][e]);
          cum[r][s] += runs[r].seeds[s].episodes[e].intervention_count;
        }
        const auto [rm, rs] = mean_std(rets);
        const auto [sm, ss] = mean_std(rolls);
        const auto [cm, cs] = mean_std(cum[r]);
        f << ',' << num(rm) << ',' << num(rs) << ',' << num(sm) << ',' << num(ss) << ','
          << num(cm);
      }
      f << '\n';
    }
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double rate =
          stats[r].total_steps > 0 ? stats[r].total_interventions / stats[r].total_steps : 0.0;
      f << "# total " << runs[r].label << " interventions=" << num(stats[r].total_interventions)
        << " steps=" << num(stats[r].total_steps) << " intervention_rate=" << num(rate) << '\n';
      std::cout << runs[r].label << ": total_intervention_rate=" << rate << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "compare: " << e.what() << '\n';
    return 1;
  }
}

int cli_replay(const ReplayOptions& opts) {
  try {
    const std::string path =
        opts.run_dir + "/replays/episode_" + std::to_string(opts.episode) + ".jsonl";
    if (!fs::exists(path))
      throw MissingDataError("no replay for episode " + std::to_string(opts.episode) + " at " +
                             path + " (was replay capture enabled?)");
    const ReplayEpisode episode = read_replay_file(path);
    std::cout << "replay: " << episode.steps.size() << " step(s)\n";

    if (opts.verify) {
      const RunConfig cfg = load_run_config(opts.run_dir + "/resolved_config.json");
      const double dev = replay_max_deviation(episode, cfg);
      std::cout << "replay: max re-simulation deviation " << dev << '\n';
      if (dev > 1e-9) {
        std::cerr << "replay: deviation exceeds 1e-9\n";
        return 1;
      }
    }
    if (!opts.out_path.empty()) write_replay_file(opts.out_path, episode);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "replay: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace lanerl::harness
