#include <CLI11.hpp>

#include "lanerl/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lanerl: expert-guided reinforcement learning for highway lane-change driving"};
  app.require_subcommand(1);

  lanerl::harness::TrainOptions train_opts;
  CLI::App* train = app.add_subcommand("train", "train an agent (one run per seed)");
  train->add_option("--config", train_opts.config_path, "run config JSON file")->required();
  train->add_option("--algo", train_opts.algo_override,
                    "algorithm: lgdrl|vanilla_sac|sac_rp|sac_bc|sac_demo");
  train->add_option("--expert", train_opts.expert_override, "expert backend: oracle|llm");
  train->add_option("--seeds", train_opts.seeds_override, "comma-separated seed list");
  train->add_option("--episodes", train_opts.episodes_override, "episode count override");
  train->add_option("--out", train_opts.out_override, "output directory");
  train->add_option("--label", train_opts.label_override, "run label");
  train->add_option("--guardian-mode", train_opts.guardian_mode_override,
                    "intermittent|continuous|off");
  train->add_option("--jobs", train_opts.jobs_override, "parallel seed workers");

  lanerl::harness::EvalOptions eval_opts;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a trained checkpoint greedily");
  eval->add_option("--checkpoint", eval_opts.checkpoint_dir,
                   "seed directory containing checkpoint/ and resolved_config.json")
      ->required();
  eval->add_option("--config", eval_opts.config_path, "config override (defaults to the run's)");
  eval->add_option("--episodes", eval_opts.episodes, "evaluation episodes");
  eval->add_option("--seed", eval_opts.seed, "evaluation seed");
  eval->add_option("--out", eval_opts.out_dir, "output directory (default <checkpoint>/eval)");
  eval->add_flag("--js-against-oracle", eval_opts.js_against_oracle,
                 "record the per-step JS gap against the rule oracle");
  eval->add_option("--replay-out", eval_opts.replay_out, "write per-episode replay files here");

  lanerl::harness::CompareOptions compare_opts;
  CLI::App* compare = app.add_subcommand("compare", "aggregate runs into one comparison CSV");
  compare->add_option("runs", compare_opts.run_dirs, "run directories (>= 2)")->required();
  compare->add_option("--out", compare_opts.out_path, "comparison CSV path")->required();

  lanerl::harness::ReplayOptions replay_opts;
  CLI::App* replay = app.add_subcommand("replay", "inspect or verify a captured replay");
  replay->add_option("--run", replay_opts.run_dir, "seed directory of the run")->required();
  replay->add_option("--episode", replay_opts.episode, "episode number (1-based)");
  replay->add_option("--out", replay_opts.out_path, "re-emit the replay to this path");
  replay->add_flag("--verify", replay_opts.verify, "re-simulate and check the recorded states");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return lanerl::harness::cli_train(train_opts);
  if (eval->parsed()) return lanerl::harness::cli_eval(eval_opts);
  if (compare->parsed()) return lanerl::harness::cli_compare(compare_opts);
  if (replay->parsed()) return lanerl::harness::cli_replay(replay_opts);
  return 1;
}
