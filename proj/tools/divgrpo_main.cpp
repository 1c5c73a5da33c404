// divgrpo command-line interface: train / evaluate / verify / study / metrics.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "divgrpo/checkpoint.hpp"
#include "divgrpo/trainer.hpp"
#include "divgrpo/verify.hpp"

namespace fs = std::filesystem;
using namespace divgrpo;

namespace {

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return RunConfig::parse(ss.str());
}

RunConfig load_run_dir_config(const fs::path& run_dir) {
  return load_config_file((run_dir / "config.txt").string());
}

int cmd_train(const std::string& config_path, const std::string& preset, uint64_t seed,
              bool seed_set, const std::string& out_dir, bool deterministic) {
  RunConfig config =
      config_path.empty() ? RunConfig::preset(preset) : load_config_file(config_path);
  if (seed_set) config.seed = seed;
  if (!out_dir.empty()) config.io.output_dir = out_dir;

  TrainResult result = train(config, deterministic);
  std::cout << "run_dir: " << result.run_dir.string() << "\n";
  if (!result.steplog.empty()) {
    const StepLogRow& last = result.steplog.back();
    std::cout << "final step " << last.step << ": J=" << last.total
              << " entropy=" << last.mean_entropy;
    if (last.probe_pass1) std::cout << " probe_pass1=" << *last.probe_pass1;
    std::cout << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& ckpt, int k, double temperature, uint64_t seed,
                 const std::string& problems_path) {
  const Vocabulary vocab = Vocabulary::micro_math();
  auto policy = load_checkpoint_file(ckpt, vocab);
  const fs::path run_dir = fs::path(ckpt).parent_path();

  std::vector<Problem> problems;
  int max_len = 12;
  if (!problems_path.empty()) {
    std::ifstream in(problems_path, std::ios::binary);
    if (!in) throw IoError("cannot open problems file " + problems_path);
    problems = import_problems_jsonl(in, vocab);
  } else {
    const RunConfig config = load_run_dir_config(run_dir);
    problems = probe_problems_from_config(config, vocab);
    max_len = config.task.max_len;
  }

  EvalOutput out = evaluate_policy(*policy, problems, k, temperature, max_len, seed);

  const std::string tag = fs::path(ckpt).stem().string();
  const fs::path dump_path =
      run_dir / ("eval_" + tag + "_k" + std::to_string(k) + "_s" + std::to_string(seed) +
                 ".jsonl");
  std::ofstream dump(dump_path, std::ios::binary);
  write_eval_dump_jsonl(out.samples, dump);
  std::ofstream mj(run_dir / "metrics.json", std::ios::binary);
  mj << out.report.to_json_string() << "\n";

  std::cout << out.report.to_json_string() << "\n";
  std::cout << MetricsReport::csv_header() << "\n" << out.report.csv_row() << "\n";
  std::cout << "eval_dump: " << dump_path.string() << "\n";
  return 0;
}

int cmd_verify(const std::string& suite) {
  VerifyReport report = run_verify(suite);
  std::cout << report.to_json_string() << "\n";
  return report.all_passed() ? 0 : 1;
}

int cmd_study(const std::string& run_dir) {
  StudyResult result = run_study(run_dir);
  std::cout << "name,pass1,div_equ,potential_k\n";
  for (const StudyRow& r : result.rows) {
    std::cout << r.name << "," << r.pass1 << ",";
    if (r.div_equ) std::cout << *r.div_equ;
    std::cout << ",";
    if (r.potential_k) std::cout << *r.potential_k;
    std::cout << "\n";
  }
  if (result.regression) {
    std::cout << "regression: slope=" << result.regression->slope
              << " intercept=" << result.regression->intercept << " r2=" << result.regression->r2
              << " n=" << result.regression->n << "\n";
  } else {
    std::cout << "regression: omitted (fewer than 2 usable rows above pass1 threshold "
              << result.pass1_threshold << ")\n";
  }
  return 0;
}

int cmd_metrics(const std::string& dump_path) {
  std::ifstream in(dump_path, std::ios::binary);
  if (!in) throw IoError("cannot open dump " + dump_path);
  auto samples = read_eval_dump_jsonl(in);
  const Vocabulary vocab = Vocabulary::micro_math();
  MetricsReport report = compute_metrics(samples, vocab);
  std::cout << report.to_json_string() << "\n";
  std::cout << MetricsReport::csv_header() << "\n" << report.csv_row() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divgrpo: diversity-aware group-relative policy optimization on micro-math"};
  app.require_subcommand(1);

  std::string config_path, preset = "toy", out_dir;
  uint64_t seed = 0;
  bool deterministic = false;
  auto* train_cmd = app.add_subcommand("train", "run a training loop");
  train_cmd->add_option("--config", config_path, "config file (flat key = value)");
  train_cmd->add_option("--preset", preset, "toy or paper (when --config absent)");
  auto* seed_opt = train_cmd->add_option("--seed", seed, "override config seed");
  train_cmd->add_option("--out", out_dir, "override io.output_dir");
  train_cmd->add_flag("--deterministic", deterministic,
                      "serial execution with zeroed wall-clock fields");

  std::string ckpt, problems_path;
  int k = 16;
  double temperature = 0.9;
  uint64_t eval_seed = 1;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--k", k, "samples per problem");
  eval_cmd->add_option("--temp", temperature, "sampling temperature");
  eval_cmd->add_option("--seed", eval_seed, "sampling seed");
  eval_cmd->add_option("--problems", problems_path, "problems JSONL (default: run probe set)");

  std::string suite = "all";
  auto* verify_cmd = app.add_subcommand("verify", "run verification suites");
  verify_cmd->add_option("--suite", suite, "identity|grad|metrics|all");

  std::string run_dir;
  auto* study_cmd = app.add_subcommand("study", "diversity-potential study over checkpoints");
  study_cmd->add_option("--run-dir", run_dir, "training run directory")->required();

  std::string dump_path;
  auto* metrics_cmd = app.add_subcommand("metrics", "metrics over an eval dump");
  metrics_cmd->add_option("--dump", dump_path, "eval dump JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      return cmd_train(config_path, preset, seed, !seed_opt->empty(), out_dir, deterministic);
    }
    if (eval_cmd->parsed()) return cmd_evaluate(ckpt, k, temperature, eval_seed, problems_path);
    if (verify_cmd->parsed()) return cmd_verify(suite);
    if (study_cmd->parsed()) return cmd_study(run_dir);
    if (metrics_cmd->parsed()) return cmd_metrics(dump_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
