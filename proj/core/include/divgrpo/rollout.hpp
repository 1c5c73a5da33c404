#pragma once

#include <iosfwd>
#include <vector>

#include "divgrpo/policy.hpp"
#include "divgrpo/tasks.hpp"

namespace divgrpo {

// One sampled completion with everything the objective needs to re-weight it:
// temperature-1 log-probs under the sampling (old) policy and its rewards.
struct Trajectory {
  int problem_id = 0;
  std::vector<TokenId> tokens;
  std::vector<double> old_log_probs;  // length == tokens.size(); finite and <= 0
  RewardRecord reward;
  // Diagnostic only: temperature-1 entropy of each sampling context. Not part
  // of the dump format.
  std::vector<double> token_entropies;

  int length() const { return static_cast<int>(tokens.size()); }
};

// The unit GRPO operates on: G completions of one prompt plus standardized
// advantages. Degenerate groups (zero reward variance) carry all-zero
// advantages and, with beta = lambda = 0, contribute zero gradient.
struct GroupBatch {
  int problem_id = 0;
  std::vector<TokenId> prompt;  // the conditioning prompt shared by the group
  std::vector<Trajectory> trajectories;
  std::vector<double> advantages;  // empty until finalized
  bool degenerate = false;

  int group_size() const { return static_cast<int>(trajectories.size()); }
};

// Samples G completions from the frozen snapshot, scores them, and returns the
// batch with advantages unset. Trajectory i uses the independent stream
// mix_seed(seed, i), so collection for different problems may run concurrently
// against the same immutable snapshot and assemble deterministically.
GroupBatch collect_group(const PolicySnapshot& snapshot, const Problem& problem, int group_size,
                         double temperature, int max_len, uint64_t seed);

// Group standardization with population (biased) std. Rewards with population
// std below 1e-6 yield all zeros and degenerate=true.
std::pair<std::vector<double>, bool> compute_advantages(const std::vector<double>& rewards);

// Fills batch.advantages/degenerate from the trajectories' total rewards.
void finalize_advantages(GroupBatch& batch);

// JSONL dump, one line per trajectory:
// {step, problem_id, tokens, old_logprobs, accuracy, format, total_reward, advantage}
void dump_rollouts_jsonl(int step, const GroupBatch& batch, std::ostream& out);

struct RolloutRow {
  int step = 0;
  int problem_id = 0;
  std::vector<TokenId> tokens;
  std::vector<double> old_log_probs;
  int accuracy = 0;
  int format = 0;
  double total_reward = 0.0;
  double advantage = 0.0;
};

std::vector<RolloutRow> read_rollouts_jsonl(std::istream& in);

}  // namespace divgrpo
