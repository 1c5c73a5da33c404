#include "divgrpo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "divgrpo/json.hpp"
#include "divgrpo/rng.hpp"

namespace divgrpo {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string MetricsReport::to_json_string() const {
  json j;
  j["pass1"] = pass1;
  j["passk"] = passk;
  j["potential_k"] = potential_k ? json(*potential_k) : json(nullptr);
  j["div_equ"] = div_equ ? json(*div_equ) : json(nullptr);
  j["div_equ_excluded"] = div_equ_excluded;
  j["div_ngram"] = div_ngram;
  j["div_selfbleu"] = div_selfbleu ? json(*div_selfbleu) : json(nullptr);
  j["mean_entropy"] = mean_entropy ? json(*mean_entropy) : json(nullptr);
  return j.dump(2);
}

std::string MetricsReport::csv_header() {
  return "pass1,passk,potential_k,div_equ,div_equ_excluded,div_ngram,div_selfbleu,mean_entropy";
}

std::string MetricsReport::csv_row() const {
  std::string row = fmt(pass1) + "," + fmt(passk) + ",";
  row += potential_k ? fmt(*potential_k) : "";
  row += ",";
  row += div_equ ? fmt(*div_equ) : "";
  row += "," + std::to_string(div_equ_excluded) + "," + fmt(div_ngram) + ",";
  row += div_selfbleu ? fmt(*div_selfbleu) : "";
  row += ",";
  row += mean_entropy ? fmt(*mean_entropy) : "";
  return row;
}

double pass_at_1(std::span<const EvalSample> samples) {
  if (samples.empty()) throw ContractError("pass_at_1: no samples");
  double hits = 0;
  for (const EvalSample& s : samples) hits += s.greedy.accuracy;
  return hits / double(samples.size());
}

std::pair<std::vector<int>, double> pass_at_k(std::span<const EvalSample> samples) {
  if (samples.empty()) throw ContractError("pass_at_k: no samples");
  const size_t k = samples.front().samples.size();
  if (k == 0) throw ContractError("pass_at_k: zero responses per problem");
  std::vector<int> indicators;
  indicators.reserve(samples.size());
  double sum = 0;
  for (const EvalSample& s : samples) {
    if (s.samples.size() != k) throw ContractError("pass_at_k: ragged k across problems");
    int any = 0;
    for (const EvalResponse& r : s.samples) any |= r.accuracy;
    indicators.push_back(any);
    sum += any;
  }
  return {indicators, sum / double(samples.size())};
}

std::optional<double> potential_at_k(std::span<const EvalSample> samples) {
  auto [passk, aggregate] = pass_at_k(samples);
  double num = 0, den = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const int p1 = samples[i].greedy.accuracy;
    num += passk[i] * (1 - p1);
    den += 1 - p1;
  }
  if (den == 0) return std::nullopt;
  return num / den;
}

DivEquResult div_equ(std::span<const EvalSample> samples, const Vocabulary& vocab) {
  DivEquResult out;
  double sum = 0;
  int counted = 0;
  for (const EvalSample& s : samples) {
    std::vector<std::string> all;
    for (const EvalResponse& r : s.samples) {
      auto eqs = extract_equations(r.tokens, vocab);
      all.insert(all.end(), eqs.begin(), eqs.end());
    }
    if (all.empty()) {
      ++out.excluded;
      continue;
    }
    std::set<std::string> unique(all.begin(), all.end());
    sum += double(unique.size()) / double(all.size());
    ++counted;
  }
  if (counted) out.value = 100.0 * sum / counted;
  return out;
}

double div_ngram(std::span<const std::vector<TokenId>> responses) {
  if (responses.empty()) throw ContractError("div_ngram: no responses");
  double total = 0;
  int counted = 0;
  for (const auto& resp : responses) {
    const int len = static_cast<int>(resp.size());
    double acc = 0;
    int orders = 0;
    for (int n = 1; n <= 4; ++n) {
      if (len < n) break;
      std::set<std::vector<TokenId>> distinct;
      const int count = len - n + 1;
      for (int i = 0; i < count; ++i) {
        distinct.insert(std::vector<TokenId>(resp.begin() + i, resp.begin() + i + n));
      }
      acc += double(distinct.size()) / count;
      ++orders;
    }
    if (orders == 0) continue;  // empty response: no defined orders
    total += acc / orders;
    ++counted;
  }
  if (counted == 0) throw ContractError("div_ngram: all responses empty");
  return 100.0 * total / counted;
}

namespace {

std::map<std::vector<TokenId>, int> ngram_counts(const std::vector<TokenId>& tokens, int n) {
  std::map<std::vector<TokenId>, int> counts;
  for (int i = 0; i + n <= static_cast<int>(tokens.size()); ++i) {
    counts[std::vector<TokenId>(tokens.begin() + i, tokens.begin() + i + n)]++;
  }
  return counts;
}

}  // namespace

double bleu4(const std::vector<TokenId>& candidate,
             const std::vector<std::vector<TokenId>>& references) {
  if (references.empty()) throw ContractError("bleu4: no references");
  if (candidate.empty()) return 0.0;

  double log_precision = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const auto cand = ngram_counts(candidate, n);
    long long total = 0, matched = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      int best = 0;
      for (const auto& ref : references) {
        const auto rc = ngram_counts(ref, n);
        auto it = rc.find(gram);
        if (it != rc.end()) best = std::max(best, it->second);
      }
      matched += std::min<long long>(count, best);
    }
    // Add-one smoothing on every order; empty orders contribute log 1 = 0.
    log_precision += 0.25 * std::log(double(matched + 1) / double(total + 1));
  }

  // Brevity penalty against the closest reference length (ties go short).
  const long long c = static_cast<long long>(candidate.size());
  long long r = static_cast<long long>(references.front().size());
  for (const auto& ref : references) {
    const long long len = static_cast<long long>(ref.size());
    if (std::llabs(len - c) < std::llabs(r - c) || (std::llabs(len - c) == std::llabs(r - c) && len < r)) {
      r = len;
    }
  }
  const double bp = (c >= r) ? 1.0 : std::exp(1.0 - double(r) / double(c));
  return bp * std::exp(log_precision);
}

double div_selfbleu(std::span<const EvalSample> samples) {
  if (samples.empty()) throw ContractError("div_selfbleu: no samples");
  double problem_sum = 0;
  for (const EvalSample& s : samples) {
    const size_t k = s.samples.size();
    if (k < 2) throw ContractError("div_selfbleu: needs at least 2 responses per problem");
    double self_bleu = 0;
    for (size_t i = 0; i < k; ++i) {
      std::vector<std::vector<TokenId>> refs;
      refs.reserve(k - 1);
      for (size_t j = 0; j < k; ++j) {
        if (j != i) refs.push_back(s.samples[j].tokens);
      }
      self_bleu += 100.0 * bleu4(s.samples[i].tokens, refs);
    }
    problem_sum += 100.0 - self_bleu / double(k);
  }
  return problem_sum / double(samples.size());
}

double mean_token_entropy(const Policy& policy, std::span<const std::vector<TokenId>> prompts,
                          int budget, uint64_t seed) {
  if (budget < 1) throw ContractError("mean_token_entropy: budget must be >= 1");
  if (prompts.empty()) throw ContractError("mean_token_entropy: no prompts");
  double sum = 0;
  long long tokens = 0;
  for (int i = 0; i < budget; ++i) {
    const auto& prompt = prompts[i % prompts.size()];
    SampleResult r = sample_completion_ex(policy, prompt, 1.0, 64, mix_seed(seed, i));
    for (double h : r.token_entropies) {
      sum += h;
      ++tokens;
    }
  }
  return tokens ? sum / tokens : 0.0;
}

MetricsReport compute_metrics(std::span<const EvalSample> samples, const Vocabulary& vocab) {
  MetricsReport rep;
  rep.pass1 = pass_at_1(samples);
  rep.passk = pass_at_k(samples).second;
  rep.potential_k = potential_at_k(samples);
  DivEquResult de = div_equ(samples, vocab);
  rep.div_equ = de.value;
  rep.div_equ_excluded = de.excluded;
  std::vector<std::vector<TokenId>> responses;
  for (const EvalSample& s : samples) {
    for (const EvalResponse& r : s.samples) responses.push_back(r.tokens);
  }
  rep.div_ngram = div_ngram(responses);
  if (!samples.empty() && samples.front().samples.size() >= 2) {
    rep.div_selfbleu = div_selfbleu(samples);
  }
  return rep;
}

std::vector<EvalSample> collect_eval_samples(const Policy& policy,
                                             const std::vector<Problem>& problems, int k,
                                             double temperature, int max_len, uint64_t seed) {
  if (k < 1) throw ContractError("collect_eval_samples: k must be >= 1");
  std::vector<EvalSample> out;
  out.reserve(problems.size());
  for (const Problem& p : problems) {
    EvalSample s;
    s.problem_id = p.id;
    s.greedy.tokens = greedy_completion(policy, p.prompt, max_len);
    s.greedy.accuracy = score_response(p, s.greedy.tokens, policy.vocab()).accuracy;
    for (int j = 0; j < k; ++j) {
      EvalResponse r;
      auto [toks, lps] =
          sample_completion(policy, p.prompt, temperature, max_len, mix_seed(seed, p.id, j));
      r.tokens = std::move(toks);
      r.accuracy = score_response(p, r.tokens, policy.vocab()).accuracy;
      s.samples.push_back(std::move(r));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_eval_dump_jsonl(std::span<const EvalSample> samples, std::ostream& out) {
  for (const EvalSample& s : samples) {
    json j;
    j["problem_id"] = s.problem_id;
    j["greedy"] = {{"tokens", s.greedy.tokens}, {"accuracy", s.greedy.accuracy}};
    json arr = json::array();
    for (const EvalResponse& r : s.samples) {
      arr.push_back({{"tokens", r.tokens}, {"accuracy", r.accuracy}});
    }
    j["samples"] = arr;
    out << j.dump() << "\n";
  }
}

std::vector<EvalSample> read_eval_dump_jsonl(std::istream& in) {
  std::vector<EvalSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(std::string("eval dump parse: ") + e.what());
    }
    EvalSample s;
    s.problem_id = j.at("problem_id").get<int>();
    s.greedy.tokens = j.at("greedy").at("tokens").get<std::vector<TokenId>>();
    s.greedy.accuracy = j.at("greedy").at("accuracy").get<int>();
    for (const json& r : j.at("samples")) {
      EvalResponse resp;
      resp.tokens = r.at("tokens").get<std::vector<TokenId>>();
      resp.accuracy = r.at("accuracy").get<int>();
      s.samples.push_back(std::move(resp));
    }
    out.push_back(std::move(s));
  }
  return out;
}

StudyResult diversity_potential_study(
    const std::vector<std::pair<std::string, const Policy*>>& policies,
    const std::vector<Problem>& problems, int k, double temperature, int max_len, uint64_t seed,
    double pass1_threshold) {
  if (policies.size() < 3) {
    throw ContractError("diversity_potential_study: need at least 3 policy descriptors");
  }
  StudyResult out;
  out.pass1_threshold = pass1_threshold;
  for (const auto& [name, policy] : policies) {
    auto samples = collect_eval_samples(*policy, problems, k, temperature, max_len, seed);
    StudyRow row;
    row.name = name;
    row.pass1 = pass_at_1(samples);
    row.div_equ = div_equ(samples, policy->vocab()).value;
    row.potential_k = potential_at_k(samples);
    out.rows.push_back(std::move(row));
  }

  std::vector<std::pair<double, double>> points;  // (div_equ, potential)
  for (const StudyRow& row : out.rows) {
    if (row.pass1 > pass1_threshold && row.div_equ && row.potential_k) {
      points.push_back({*row.div_equ, *row.potential_k});
    }
  }
  out.regression = fit_least_squares(points);
  return out;
}

std::optional<Regression> fit_least_squares(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(points.size());
  for (auto [x, y] : points) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return std::nullopt;
  Regression reg;
  reg.slope = (n * sxy - sx * sy) / denom;
  reg.intercept = (sy - reg.slope * sx) / n;
  reg.n = static_cast<int>(points.size());
  double ss_res = 0, ss_tot = 0;
  const double ymean = sy / n;
  for (auto [x, y] : points) {
    const double pred = reg.slope * x + reg.intercept;
    ss_res += (y - pred) * (y - pred);
    ss_tot += (y - ymean) * (y - ymean);
  }
  reg.r2 = (ss_tot > 0) ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  return reg;
}

}  // namespace divgrpo
