#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "divgrpo/policy.hpp"
#include "divgrpo/tasks.hpp"

namespace divgrpo {

struct EvalResponse {
  std::vector<TokenId> tokens;
  int accuracy = 0;
};

// Per-problem evaluation unit: one greedy decode plus k temperature samples,
// all scored by the task's accuracy rule.
struct EvalSample {
  int problem_id = 0;
  EvalResponse greedy;
  std::vector<EvalResponse> samples;
};

struct MetricsReport {
  double pass1 = 0.0;
  double passk = 0.0;
  std::optional<double> potential_k;  // undefined when every problem passes greedily
  std::optional<double> div_equ;      // undefined when no problem yields equations
  int div_equ_excluded = 0;           // problems without extracted equations
  double div_ngram = 0.0;
  std::optional<double> div_selfbleu;  // needs k >= 2
  std::optional<double> mean_entropy;  // filled only when a policy is available

  std::string to_json_string() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Greedy accuracy over problems.
double pass_at_1(std::span<const EvalSample> samples);

// Any-of-k indicator per problem plus its mean. All problems must share k.
std::pair<std::vector<int>, double> pass_at_k(std::span<const EvalSample> samples);

// sum Pass@k (1 - Pass@1) / sum (1 - Pass@1); nullopt when the denominator
// vanishes (every problem already passes at 1).
std::optional<double> potential_at_k(std::span<const EvalSample> samples);

// Mean over problems of |unique|/|all| over equations pooled from the k
// responses, x100. Problems with no equations are excluded (count reported);
// nullopt when every problem is excluded.
struct DivEquResult {
  std::optional<double> value;
  int excluded = 0;
};
DivEquResult div_equ(std::span<const EvalSample> samples, const Vocabulary& vocab);

// Mean over responses of the mean distinct-n-gram ratio for n in 1..4
// (orders longer than the response are skipped), x100.
double div_ngram(std::span<const std::vector<TokenId>> responses);

// BLEU-4 with uniform weights, add-one smoothed modified precisions, and the
// standard brevity penalty against the closest reference length.
double bleu4(const std::vector<TokenId>& candidate,
             const std::vector<std::vector<TokenId>>& references);

// 100 minus mean Self-BLEU (each response scored against its k-1 siblings),
// averaged over problems. Requires k >= 2.
double div_selfbleu(std::span<const EvalSample> samples);

// Average entropy of the next-token distribution (temperature 1) over tokens
// generated while sampling `budget` completions round-robin over the prompts.
double mean_token_entropy(const Policy& policy,
                          std::span<const std::vector<TokenId>> prompts, int budget,
                          uint64_t seed = 0);

// Full report over eval samples (entropy left unset).
MetricsReport compute_metrics(std::span<const EvalSample> samples, const Vocabulary& vocab);

// ---- evaluation drivers -------------------------------------------------------

std::vector<EvalSample> collect_eval_samples(const Policy& policy,
                                             const std::vector<Problem>& problems, int k,
                                             double temperature, int max_len, uint64_t seed);

// Eval dump JSONL: {problem_id, greedy:{tokens,accuracy}, samples:[...]}.
void write_eval_dump_jsonl(std::span<const EvalSample> samples, std::ostream& out);
std::vector<EvalSample> read_eval_dump_jsonl(std::istream& in);

// ---- diversity-potential study --------------------------------------------------

struct StudyRow {
  std::string name;
  double pass1 = 0.0;
  std::optional<double> div_equ;
  std::optional<double> potential_k;
};

struct Regression {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int n = 0;
};

// Ordinary least squares y = slope*x + intercept. nullopt for fewer than two
// points or a degenerate (vertical) x spread.
std::optional<Regression> fit_least_squares(std::span<const std::pair<double, double>> points);

struct StudyResult {
  std::vector<StudyRow> rows;
  std::optional<Regression> regression;  // absent when the subset is too small
  double pass1_threshold = 0.4;
};

// One row per policy; least-squares fit of potential@k against Div-Equ over
// the subset with pass1 > threshold (regression omitted below 2 usable rows).
StudyResult diversity_potential_study(
    const std::vector<std::pair<std::string, const Policy*>>& policies,
    const std::vector<Problem>& problems, int k, double temperature, int max_len, uint64_t seed,
    double pass1_threshold = 0.4);

}  // namespace divgrpo
