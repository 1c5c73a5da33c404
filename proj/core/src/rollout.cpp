#include "divgrpo/rollout.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "divgrpo/json.hpp"
#include "divgrpo/rng.hpp"

namespace divgrpo {

GroupBatch collect_group(const PolicySnapshot& snapshot, const Problem& problem, int group_size,
                         double temperature, int max_len, uint64_t seed) {
  if (group_size < 2) throw ContractError("collect_group: group size must be >= 2");
  const Policy& policy = snapshot.policy();
  GroupBatch batch;
  batch.problem_id = problem.id;
  batch.prompt = problem.prompt;
  batch.trajectories.reserve(group_size);
  for (int i = 0; i < group_size; ++i) {
    SampleResult s =
        sample_completion_ex(policy, problem.prompt, temperature, max_len, mix_seed(seed, i));
    Trajectory t;
    t.problem_id = problem.id;
    t.tokens = std::move(s.tokens);
    t.old_log_probs = std::move(s.log_probs);
    t.token_entropies = std::move(s.token_entropies);
    t.reward = score_response(problem, t.tokens, policy.vocab());
    batch.trajectories.push_back(std::move(t));
  }
  return batch;
}

std::pair<std::vector<double>, bool> compute_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw ContractError("compute_advantages: need at least 2 rewards");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw NumericError("compute_advantages: non-finite reward");
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;  // population variance, no Bessel correction
  const double std_dev = std::sqrt(var);
  if (std_dev < 1e-6) {
    return {std::vector<double>(rewards.size(), 0.0), true};
  }
  std::vector<double> adv(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / std_dev;
  return {adv, false};
}

void finalize_advantages(GroupBatch& batch) {
  std::vector<double> rewards;
  rewards.reserve(batch.trajectories.size());
  for (const Trajectory& t : batch.trajectories) rewards.push_back(t.reward.total);
  auto [adv, degenerate] = compute_advantages(rewards);
  batch.advantages = std::move(adv);
  batch.degenerate = degenerate;
}

void dump_rollouts_jsonl(int step, const GroupBatch& batch, std::ostream& out) {
  for (size_t i = 0; i < batch.trajectories.size(); ++i) {
    const Trajectory& t = batch.trajectories[i];
    json j;
    j["step"] = step;
    j["problem_id"] = t.problem_id;
    j["tokens"] = t.tokens;
    j["old_logprobs"] = t.old_log_probs;
    j["accuracy"] = t.reward.accuracy;
    j["format"] = t.reward.format;
    j["total_reward"] = t.reward.total;
    j["advantage"] = batch.advantages.empty() ? 0.0 : batch.advantages[i];
    out << j.dump() << "\n";
  }
}

std::vector<RolloutRow> read_rollouts_jsonl(std::istream& in) {
  std::vector<RolloutRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(std::string("rollout dump parse: ") + e.what());
    }
    RolloutRow r;
    r.step = j.at("step").get<int>();
    r.problem_id = j.at("problem_id").get<int>();
    r.tokens = j.at("tokens").get<std::vector<TokenId>>();
    r.old_log_probs = j.at("old_logprobs").get<std::vector<double>>();
    r.accuracy = j.at("accuracy").get<int>();
    r.format = j.at("format").get<int>();
    r.total_reward = j.at("total_reward").get<double>();
    r.advantage = j.at("advantage").get<double>();
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace divgrpo
