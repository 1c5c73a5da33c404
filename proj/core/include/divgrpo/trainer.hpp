#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "divgrpo/config.hpp"
#include "divgrpo/metrics.hpp"
#include "divgrpo/objective.hpp"
#include "divgrpo/optim.hpp"

namespace divgrpo {

struct StepLogRow {
  int step = 0;
  double total = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double diversity = 0.0;
  double clip_fraction = 0.0;
  double mean_entropy = 0.0;       // sampling-policy entropy over rollout tokens
  double positive_fraction = 0.0;  // accuracy==1 share of the step's trajectories
  std::optional<double> probe_pass1;  // greedy probe, when scheduled (post-update)
  double wall_time_s = 0.0;           // zeroed in deterministic mode

  static std::string csv_header();
  std::string csv_row() const;
  static std::vector<StepLogRow> read_csv(std::istream& in);
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::vector<StepLogRow> steplog;
  std::unique_ptr<Policy> final_policy;
  std::vector<Problem> train_problems;
  std::vector<Problem> probe_problems;
};

// Splits one deterministic unique pool: the first train_problems entries train,
// the last probe_problems are held out for greedy probes and evaluation.
std::vector<Problem> train_problems_from_config(const RunConfig& config, const Vocabulary& vocab);
std::vector<Problem> probe_problems_from_config(const RunConfig& config, const Vocabulary& vocab);

std::unique_ptr<Policy> make_policy(const RunConfig& config, const Vocabulary& vocab);

// Full training run: per step snapshot pi_old, collect groups, one ascent step
// on the combined objective, log, checkpoint. Always single-threaded;
// `deterministic` additionally zeroes wall-clock fields so outputs are
// byte-stable for identical config+seed.
TrainResult train(const RunConfig& config, bool deterministic = false);

struct EvalOutput {
  MetricsReport report;
  std::vector<EvalSample> samples;
};

// Greedy pass for pass@1 plus k temperature samples per problem; fills
// mean_entropy from temperature-1 sampling over the same prompts.
EvalOutput evaluate_policy(const Policy& policy, const std::vector<Problem>& problems, int k,
                           double temperature, int max_len, uint64_t seed,
                           bool diversity_metrics = true);

// Recomputes the logged objective of one step from its rollout dump rows, the
// frozen reference policy, and the problem set. Relies on the one-update-per-
// batch schedule: at evaluation time theta == old, so dumped old_logprobs are
// the theta log-probs and every ratio is exactly 1.
double recompute_step_objective(const std::vector<RolloutRow>& step_rows, int group_size,
                                const std::vector<Problem>& problems, const Policy& ref_policy,
                                const ObjectiveConfig& config);

// Study over a finished run directory: one metrics row per checkpoint plus the
// potential-vs-diversity regression. Writes study.csv and study.json into the
// run dir and returns the table.
StudyResult run_study(const std::filesystem::path& run_dir);

}  // namespace divgrpo
