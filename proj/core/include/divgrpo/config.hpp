#pragma once

#include <cstdint>
#include <string>

#include "divgrpo/objective.hpp"

namespace divgrpo {

// Full run description. Serializes to a flat dotted-key text format; parsing
// is strict (unknown keys are errors) and round-trips exactly.
struct RunConfig {
  struct Task {
    int difficulty = 1;       // number of operators per expression
    int train_problems = 236;
    int probe_problems = 64;  // held out from training, greedy-probed
    int max_len = 8;
    bool operator==(const Task&) const = default;
  } task;

  struct PolicyCfg {
    std::string backend = "neural";  // "neural" | "tabular"
    int embed = 16;
    int window = 8;
    int hidden = 64;
    int context_order = 2;  // tabular backend only
    uint64_t init_seed = 1;
    bool operator==(const PolicyCfg&) const = default;
  } policy;

  struct Objective {
    double clip_epsilon = 0.2;
    double kl_beta = 1e-4;
    double diversity_weight = 0.01;
    std::string gating = "positive_only";  // positive_only | all_samples | off
    bool sequence_level_ratio = false;
    bool operator==(const Objective&) const = default;
  } objective;

  struct Optimizer {
    std::string kind = "adamw";  // "adamw" | "sgd"
    double lr = 5e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::string lr_schedule = "constant";  // "constant" | "cosine"
    bool operator==(const Optimizer&) const = default;
  } optimizer;

  // Cold-start RL needs dense per-prompt signal inside the 300-step budget:
  // every step covers the whole training pool with a wide group, and rollouts
  // run slightly hot (objective-side log-probs stay at temperature 1).
  struct Schedule {
    int steps = 300;
    int prompts_per_step = 236;
    int group_size = 12;
    double temperature = 1.2;
    bool operator==(const Schedule&) const = default;
  } schedule;

  struct Eval {
    int k = 16;
    int eval_every = 10;
    std::string metrics = "all";  // "all" | "basic" (pass metrics only)
    bool operator==(const Eval&) const = default;
  } eval;

  struct Io {
    std::string output_dir = "runs";
    bool dump_rollouts = true;
    int checkpoint_every = 100;
    bool operator==(const Io&) const = default;
  } io;

  uint64_t seed = 1;

  bool operator==(const RunConfig&) const = default;

  // "toy": minutes-scale defaults above. "paper": the reference
  // hyperparameters (lr 3e-6 cosine, beta 1e-4, lambda 0.01 positive-only,
  // G=6, temperature 0.9) kept on the micro task.
  static RunConfig preset(const std::string& name);

  static RunConfig parse(const std::string& text);
  std::string render() const;

  void validate() const;
  GatingMode gating_mode() const;
  ObjectiveConfig objective_config() const;
  uint64_t config_hash() const;  // FNV-1a over the canonical rendering
};

}  // namespace divgrpo
