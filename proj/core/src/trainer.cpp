#include "divgrpo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "divgrpo/checkpoint.hpp"
#include "divgrpo/json.hpp"
#include "divgrpo/rng.hpp"

namespace divgrpo {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string hash8(uint64_t h) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08llx", static_cast<unsigned long long>(h >> 32));
  return buf;
}

}  // namespace

std::string StepLogRow::csv_header() {
  return "step,total,surrogate,kl,diversity,clip_fraction,mean_entropy,positive_fraction,"
         "probe_pass1,wall_time_s";
}

std::string StepLogRow::csv_row() const {
  std::string row = std::to_string(step) + "," + fmt(total) + "," + fmt(surrogate) + "," +
                    fmt(kl) + "," + fmt(diversity) + "," + fmt(clip_fraction) + "," +
                    fmt(mean_entropy) + "," + fmt(positive_fraction) + ",";
  if (probe_pass1) row += fmt(*probe_pass1);
  row += "," + fmt(wall_time_s);
  return row;
}

std::vector<StepLogRow> StepLogRow::read_csv(std::istream& in) {
  std::vector<StepLogRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(10);
    StepLogRow r;
    r.step = std::stoi(cells[0]);
    r.total = std::stod(cells[1]);
    r.surrogate = std::stod(cells[2]);
    r.kl = std::stod(cells[3]);
    r.diversity = std::stod(cells[4]);
    r.clip_fraction = std::stod(cells[5]);
    r.mean_entropy = std::stod(cells[6]);
    r.positive_fraction = std::stod(cells[7]);
    if (!cells[8].empty()) r.probe_pass1 = std::stod(cells[8]);
    if (!cells[9].empty()) r.wall_time_s = std::stod(cells[9]);
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::vector<Problem> whole_pool(const RunConfig& config, const Vocabulary& vocab) {
  return generate_problems(vocab, config.task.train_problems + config.task.probe_problems,
                           config.task.difficulty, mix_seed(config.seed, 0x9a5b));
}

}  // namespace

std::vector<Problem> train_problems_from_config(const RunConfig& config, const Vocabulary& vocab) {
  auto pool = whole_pool(config, vocab);
  pool.resize(config.task.train_problems);
  return pool;
}

std::vector<Problem> probe_problems_from_config(const RunConfig& config, const Vocabulary& vocab) {
  auto pool = whole_pool(config, vocab);
  return std::vector<Problem>(pool.begin() + config.task.train_problems, pool.end());
}

std::unique_ptr<Policy> make_policy(const RunConfig& config, const Vocabulary& vocab) {
  if (config.policy.backend == "tabular") {
    auto p = std::make_unique<TabularPolicy>(vocab, config.policy.context_order);
    Rng rng(config.policy.init_seed);
    for (int i = 0; i < p->logits().size(); ++i) p->logits()[i] = rng.uniform(-0.08, 0.08);
    return p;
  }
  NeuralPolicy::Dims dims;
  dims.embed = config.policy.embed;
  dims.window = config.policy.window;
  dims.hidden = config.policy.hidden;
  return std::make_unique<NeuralPolicy>(vocab, dims, config.policy.init_seed);
}

namespace {

double greedy_pass1(const Policy& policy, const std::vector<Problem>& problems, int max_len) {
  double hits = 0;
  for (const Problem& p : problems) {
    auto resp = greedy_completion(policy, p.prompt, max_len);
    hits += score_response(p, resp, policy.vocab()).accuracy;
  }
  return hits / double(problems.size());
}

double cosine_scale(const std::string& schedule, int step, int total_steps) {
  if (schedule != "cosine" || total_steps <= 0) return 1.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / double(total_steps)));
}

}  // namespace

TrainResult train(const RunConfig& config, bool deterministic) {
  config.validate();
  const Vocabulary vocab = Vocabulary::micro_math();

  TrainResult result;
  result.train_problems = train_problems_from_config(config, vocab);
  result.probe_problems = probe_problems_from_config(config, vocab);

  const std::string run_name = hash8(config.config_hash()) + "-s" + std::to_string(config.seed);
  result.run_dir = std::filesystem::path(config.io.output_dir) / run_name;
  std::error_code ec;
  std::filesystem::create_directories(result.run_dir, ec);
  if (ec) throw IoError("train: cannot create run dir " + result.run_dir.string());

  {
    std::ofstream cfg_out(result.run_dir / "config.txt", std::ios::binary);
    if (!cfg_out) throw IoError("train: cannot write config.txt");
    cfg_out << config.render();
  }

  std::unique_ptr<Policy> policy = make_policy(config, vocab);
  save_checkpoint_file(*policy, (result.run_dir / "ckpt_init.json").string());
  const PolicySnapshot reference(*policy, SnapshotRole::reference);

  Optimizer optimizer(
      {config.optimizer.kind, config.optimizer.lr, config.optimizer.weight_decay,
       config.optimizer.beta1, config.optimizer.beta2, config.optimizer.eps},
      policy->params());

  std::ofstream steplog(result.run_dir / "steplog.csv", std::ios::binary);
  if (!steplog) throw IoError("train: cannot write steplog.csv");
  steplog << StepLogRow::csv_header() << "\n";

  std::ofstream rollout_dump;
  if (config.io.dump_rollouts) {
    rollout_dump.open(result.run_dir / "rollouts.jsonl", std::ios::binary);
    if (!rollout_dump) throw IoError("train: cannot write rollouts.jsonl");
  }

  const ObjectiveConfig obj_cfg = config.objective_config();
  const int n_train = static_cast<int>(result.train_problems.size());

  for (int step = 0; step < config.schedule.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const PolicySnapshot old_snapshot(*policy, SnapshotRole::old_policy);

    // Step's prompt subset: seeded draw without replacement when possible.
    Rng pick(mix_seed(config.seed, 0x5e1ec7, step));
    std::vector<int> chosen;
    while (static_cast<int>(chosen.size()) < config.schedule.prompts_per_step) {
      const int idx = pick.below(n_train);
      if (std::find(chosen.begin(), chosen.end(), idx) != chosen.end() &&
          n_train >= config.schedule.prompts_per_step) {
        continue;
      }
      chosen.push_back(idx);
    }

    std::vector<GroupBatch> groups;
    groups.reserve(chosen.size());
    double entropy_sum = 0.0;
    long long token_count = 0;
    int positives = 0, trajectories = 0;
    for (size_t j = 0; j < chosen.size(); ++j) {
      const Problem& problem = result.train_problems[chosen[j]];
      GroupBatch g = collect_group(old_snapshot, problem, config.schedule.group_size,
                                   config.schedule.temperature, config.task.max_len,
                                   mix_seed(config.seed, step, j));
      finalize_advantages(g);
      for (const Trajectory& t : g.trajectories) {
        for (double h : t.token_entropies) entropy_sum += h;
        token_count += t.length();
        positives += t.reward.accuracy;
        ++trajectories;
      }
      if (config.io.dump_rollouts) dump_rollouts_jsonl(step, g, rollout_dump);
      groups.push_back(std::move(g));
    }

    BatchObjective batch;
    try {
      batch = batch_objective_gradients(*policy, reference, groups, obj_cfg);
    } catch (const NumericError& e) {
      json diag;
      diag["step"] = step;
      diag["error"] = e.what();
      diag["problem_ids"] = json::array();
      for (const GroupBatch& g : groups) diag["problem_ids"].push_back(g.problem_id);
      std::ofstream diag_out(result.run_dir / "abort_diagnostic.json", std::ios::binary);
      diag_out << diag.dump(2) << "\n";
      throw;
    }

    optimizer.step_ascent(policy->params(), batch.gradients,
                          cosine_scale(config.optimizer.lr_schedule, step,
                                       config.schedule.steps));

    StepLogRow row;
    row.step = step;
    row.total = batch.breakdown.total;
    row.surrogate = batch.breakdown.surrogate;
    row.kl = batch.breakdown.kl;
    row.diversity = batch.breakdown.diversity;
    row.clip_fraction = batch.breakdown.clip_fraction;
    row.mean_entropy = token_count ? entropy_sum / token_count : 0.0;
    row.positive_fraction = trajectories ? double(positives) / trajectories : 0.0;
    if (step % config.eval.eval_every == 0 || step + 1 == config.schedule.steps) {
      row.probe_pass1 = greedy_pass1(*policy, result.probe_problems, config.task.max_len);
    }
    const auto t1 = std::chrono::steady_clock::now();
    row.wall_time_s =
        deterministic ? 0.0 : std::chrono::duration<double>(t1 - t0).count();
    steplog << row.csv_row() << "\n";
    result.steplog.push_back(std::move(row));

    if ((step + 1) % config.io.checkpoint_every == 0 && step + 1 < config.schedule.steps) {
      save_checkpoint_file(*policy,
                           (result.run_dir / ("ckpt_step" + std::to_string(step + 1) + ".json"))
                               .string());
    }
  }

  save_checkpoint_file(*policy, (result.run_dir / "ckpt_final.json").string());
  steplog.flush();
  if (!steplog) throw IoError("train: steplog write failed");
  result.final_policy = std::move(policy);
  return result;
}

EvalOutput evaluate_policy(const Policy& policy, const std::vector<Problem>& problems, int k,
                           double temperature, int max_len, uint64_t seed,
                           bool diversity_metrics) {
  if (problems.empty()) throw ContractError("evaluate_policy: no problems");
  EvalOutput out;
  out.samples = collect_eval_samples(policy, problems, k, temperature, max_len, seed);
  if (diversity_metrics) {
    out.report = compute_metrics(out.samples, policy.vocab());
  } else {
    out.report.pass1 = pass_at_1(out.samples);
    out.report.passk = pass_at_k(out.samples).second;
    out.report.potential_k = potential_at_k(out.samples);
  }
  std::vector<std::vector<TokenId>> prompts;
  prompts.reserve(problems.size());
  for (const Problem& p : problems) prompts.push_back(p.prompt);
  out.report.mean_entropy =
      mean_token_entropy(policy, prompts, static_cast<int>(2 * problems.size()),
                         mix_seed(seed, 0xe27));
  return out;
}

double recompute_step_objective(const std::vector<RolloutRow>& step_rows, int group_size,
                                const std::vector<Problem>& problems, const Policy& ref_policy,
                                const ObjectiveConfig& config) {
  if (step_rows.empty() || step_rows.size() % group_size != 0) {
    throw ContractError("recompute_step_objective: rows do not form whole groups");
  }
  std::map<int, const Problem*> by_id;
  for (const Problem& p : problems) by_id[p.id] = &p;

  const int n_groups = static_cast<int>(step_rows.size()) / group_size;
  double acc = 0.0;
  for (int g = 0; g < n_groups; ++g) {
    double group_value = 0.0;
    double gate_sum = 0.0;
    for (int i = 0; i < group_size; ++i) {
      const RolloutRow& row = step_rows[g * group_size + i];
      auto it = by_id.find(row.problem_id);
      if (it == by_id.end()) {
        throw ContractError("recompute_step_objective: unknown problem id " +
                            std::to_string(row.problem_id));
      }
      // theta == old at evaluation time: every ratio is exactly one, so the
      // clipped-min term reduces to the advantage itself.
      double surrogate_i = 0.0;
      for (size_t t = 0; t < row.tokens.size(); ++t) surrogate_i += row.advantage;
      surrogate_i /= double(row.tokens.size());

      double value_i = surrogate_i;
      if (config.kl_beta > 0.0) {
        const std::vector<double> ref_lp =
            sequence_log_probs(ref_policy, it->second->prompt, row.tokens);
        double kl = 0.0;
        for (size_t t = 0; t < row.tokens.size(); ++t) {
          const double log_u = ref_lp[t] - row.old_log_probs[t];
          kl += std::exp(log_u) - log_u - 1.0;
        }
        value_i -= config.kl_beta * kl / double(row.tokens.size());
      }
      group_value += value_i;

      if (config.diversity_weight > 0.0 && config.gating != GatingMode::off) {
        const bool counted =
            config.gating == GatingMode::all_samples || row.accuracy == 1;
        if (counted) {
          double d = 0.0;
          for (double lp : row.old_log_probs) d -= lp;  // ratio == 1
          gate_sum += d / double(row.old_log_probs.size());
        }
      }
    }
    double j_group = group_value / group_size;
    if (config.diversity_weight > 0.0 && config.gating != GatingMode::off) {
      j_group += config.diversity_weight * (gate_sum / group_size);
    }
    acc += j_group;
  }
  return acc / n_groups;
}

StudyResult run_study(const std::filesystem::path& run_dir) {
  std::ifstream cfg_in(run_dir / "config.txt", std::ios::binary);
  if (!cfg_in) throw ContractError("study: missing config.txt in " + run_dir.string());
  std::stringstream buf;
  buf << cfg_in.rdbuf();
  const RunConfig config = RunConfig::parse(buf.str());
  const Vocabulary vocab = Vocabulary::micro_math();

  struct Entry {
    std::string name;
    std::unique_ptr<Policy> policy;
  };
  std::vector<Entry> entries;
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) == 0 && name.size() > 10 && e.path().extension() == ".json") {
      paths.push_back(e.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    entries.push_back({p.stem().string(), load_checkpoint_file(p.string(), vocab)});
  }
  if (entries.size() < 3) {
    throw ContractError("study: need at least 3 checkpoints, found " +
                        std::to_string(entries.size()));
  }

  const auto problems = probe_problems_from_config(config, vocab);
  std::vector<std::pair<std::string, const Policy*>> descriptors;
  for (const Entry& e : entries) descriptors.push_back({e.name, e.policy.get()});
  StudyResult result = diversity_potential_study(descriptors, problems, config.eval.k,
                                                 config.schedule.temperature,
                                                 config.task.max_len, mix_seed(config.seed, 0x57));

  {
    std::ofstream csv(run_dir / "study.csv", std::ios::binary);
    csv << "name,pass1,div_equ,potential_k\n";
    for (const StudyRow& r : result.rows) {
      csv << r.name << "," << fmt(r.pass1) << ",";
      if (r.div_equ) csv << fmt(*r.div_equ);
      csv << ",";
      if (r.potential_k) csv << fmt(*r.potential_k);
      csv << "\n";
    }
  }
  {
    json j;
    j["pass1_threshold"] = result.pass1_threshold;
    j["rows"] = json::array();
    for (const StudyRow& r : result.rows) {
      json row;
      row["name"] = r.name;
      row["pass1"] = r.pass1;
      row["div_equ"] = r.div_equ ? json(*r.div_equ) : json(nullptr);
      row["potential_k"] = r.potential_k ? json(*r.potential_k) : json(nullptr);
      j["rows"].push_back(row);
    }
    if (result.regression) {
      j["regression"] = {{"slope", result.regression->slope},
                         {"intercept", result.regression->intercept},
                         {"r2", result.regression->r2},
                         {"n", result.regression->n}};
    } else {
      j["regression"] = nullptr;
    }
    std::ofstream js(run_dir / "study.json", std::ios::binary);
    js << j.dump(2) << "\n";
  }
  return result;
}

}  // namespace divgrpo
