#include "divgrpo/verify.hpp"

#include <chrono>
#include <cmath>

#include "divgrpo/metrics.hpp"
#include "divgrpo/rng.hpp"

namespace divgrpo {

bool VerifyReport::all_passed() const {
  for (const SuiteResult& s : suites) {
    if (!s.passed) return false;
  }
  return true;
}

std::string VerifyReport::to_json_string() const {
  json j;
  j["suites"] = json::array();
  for (const SuiteResult& s : suites) {
    j["suites"].push_back({{"name", s.name}, {"passed", s.passed}, {"details", s.details}});
  }
  j["all_passed"] = all_passed();
  return j.dump(2);
}

namespace {

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Synthetic group off an old policy with a fixed accuracy pattern; used where
// the suite needs reward structure without the micro-math pipeline.
GroupBatch sampled_group(const Policy& old_policy, int G, int max_len, uint64_t seed,
                         const std::vector<int>& accuracy_pattern) {
  GroupBatch group;
  group.problem_id = 0;
  for (int i = 0; i < G; ++i) {
    SampleResult s = sample_completion_ex(old_policy, {}, 1.0, max_len, mix_seed(seed, i));
    Trajectory t;
    t.tokens = std::move(s.tokens);
    t.old_log_probs = std::move(s.log_probs);
    const int acc = accuracy_pattern[i % accuracy_pattern.size()];
    t.reward = RewardRecord::make(acc, acc);
    group.trajectories.push_back(std::move(t));
  }
  finalize_advantages(group);
  return group;
}

}  // namespace

SuiteResult verify_identity_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult out;
  out.name = "identity";
  double max_gap = 0.0, max_ps_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n_generic = 1 + trial % 2;            // |V| = 3 or 4
    const int max_len = 2 + trial % 3;              // 2..4
    Vocabulary v = Vocabulary::generic(n_generic);
    TabularPolicy theta = TabularPolicy::random(v, 1, mix_seed(0x1de, 2 * trial), 1.5);
    TabularPolicy old_p = TabularPolicy::random(v, 1, mix_seed(0x1de, 2 * trial + 1), 1.5);
    IdentityReport rep = verify_identity(theta, old_p, {}, max_len);
    max_gap = std::max(max_gap, rep.gap);
    max_ps_gap = std::max(max_ps_gap, rep.gap_per_sequence);
  }
  out.passed = max_gap < 1e-10;
  out.details["trials"] = 50;
  out.details["max_gap"] = max_gap;
  out.details["tolerance"] = 1e-10;
  out.details["max_per_sequence_gap"] = max_ps_gap;  // informational; nonzero by design
  out.details["runtime_s"] = elapsed_s(t0);
  return out;
}

SuiteResult verify_grad_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult out;
  out.name = "grad";
  Vocabulary v = Vocabulary::generic(2);  // |V| = 4
  TabularPolicy old_p = TabularPolicy::random(v, 1, 0x6badd1, 0.8);
  TabularPolicy theta = TabularPolicy::random(v, 1, 0x7e7a, 0.8);
  PolicySnapshot ref(TabularPolicy::random(v, 1, 0xef, 0.8), SnapshotRole::reference);
  GroupBatch group = sampled_group(old_p, 4, 5, 0x90ab, {1, 0, 0, 1});

  double max_err = 0.0;
  int cells = 0;
  for (GatingMode gating :
       {GatingMode::positive_only, GatingMode::all_samples, GatingMode::off}) {
    for (double eps : {0.1, 0.2, 0.3}) {
      for (double beta : {0.0, 1e-4, 0.1}) {
        for (double lambda : {0.0, 0.01, 0.1}) {
          ObjectiveConfig cfg;
          cfg.clip_epsilon = eps;
          cfg.kl_beta = beta;
          cfg.diversity_weight = lambda;
          cfg.gating = gating;
          auto f = [&](ad::Tape& t, const std::vector<ad::Value>& leaves) {
            return combined_objective_node(t, leaves, theta, ref, group, cfg).total;
          };
          max_err = std::max(max_err, ad::finite_difference_check(f, theta.params(), 1e-5));
          ++cells;
        }
      }
    }
  }
  out.passed = max_err < 1e-4;
  out.details["grid_cells"] = cells;
  out.details["max_rel_err"] = max_err;
  out.details["tolerance"] = 1e-4;
  out.details["runtime_s"] = elapsed_s(t0);
  return out;
}

SuiteResult verify_metrics_suite(const KlFn& kl) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult out;
  out.name = "metrics";
  bool ok = true;
  json fail = json::array();

  // k3 positivity: 1e5 random ratios in (0.01, 100); zero only at u == 1.
  {
    Rng rng(0x1c33);
    double min_val = 1e300;
    bool positivity = true, zero_locates = true;
    for (int i = 0; i < 100000; ++i) {
      const double u = rng.uniform(0.01, 100.0);
      const double val = kl(u);
      min_val = std::min(min_val, val);
      if (val < 0.0) positivity = false;
      if (val < 1e-12 && std::abs(u - 1.0) > 2e-6) zero_locates = false;
    }
    const double at_one = kl(1.0);
    if (!(std::abs(at_one) <= 1e-12)) zero_locates = false;
    if (!positivity || !zero_locates) {
      ok = false;
      fail.push_back("k3 positivity/zero-location");
    }
    out.details["k3_min"] = min_val;
    out.details["k3_at_one"] = at_one;
  }

  // potential@k fixture and the binary-table identity.
  {
    std::vector<EvalSample> s(3);
    s[0].greedy.accuracy = 1;
    s[0].samples = {{{0}, 1}};
    s[1].greedy.accuracy = 0;
    s[1].samples = {{{0}, 1}};
    s[2].greedy.accuracy = 0;
    s[2].samples = {{{0}, 0}};
    auto pot = potential_at_k(s);
    if (!pot || *pot != 0.5) {
      ok = false;
      fail.push_back("potential fixture");
    }

    Rng rng(0xab1e);
    bool identity = true;
    for (int table = 0; table < 1000; ++table) {
      const int n = 1 + rng.below(10);
      long long lhs = 0, rhs = 0;
      for (int i = 0; i < n; ++i) {
        const int p1 = rng.below(2);
        const int pk = p1 ? 1 : rng.below(2);
        lhs += pk * (1 - p1);
        rhs += pk - p1;
      }
      if (lhs != rhs) identity = false;
    }
    if (!identity) {
      ok = false;
      fail.push_back("potential binary identity");
    }
  }

  // Self-BLEU of identical responses and the repeated-token n-gram fixture.
  {
    EvalSample s;
    for (int i = 0; i < 3; ++i) s.samples.push_back({{1, 2, 3, 4}, 0});
    const double sb = div_selfbleu(std::vector<EvalSample>{s});
    if (std::abs(sb) > 1e-9) {
      ok = false;
      fail.push_back("self-bleu identical");
    }
    out.details["selfbleu_identical"] = sb;

    std::vector<std::vector<TokenId>> rep{{7, 7, 7, 7}};
    const double dn = div_ngram(rep);
    if (std::abs(dn - 52.0833333333) > 0.01) {
      ok = false;
      fail.push_back("div_ngram fixture");
    }
    out.details["div_ngram_aaaa"] = dn;
  }

  // Advantage contract and the no-gradient-from-degenerate-groups property.
  {
    auto [adv, degenerate] = compute_advantages({1, 1, 0, 0});
    if (degenerate || adv != std::vector<double>{1, 1, -1, -1}) {
      ok = false;
      fail.push_back("advantage exact fixture");
    }
    auto [zeros, all_equal] = compute_advantages({0.7, 0.7, 0.7});
    bool zero_ok = all_equal;
    for (double a : zeros) zero_ok = zero_ok && a == 0.0;
    if (!zero_ok) {
      ok = false;
      fail.push_back("degenerate advantages");
    }

    Vocabulary v = Vocabulary::generic(2);
    TabularPolicy p = TabularPolicy::random(v, 1, 0xdead, 1.0);
    PolicySnapshot ref(p, SnapshotRole::reference);
    GroupBatch group = sampled_group(p, 4, 5, 0xbeef, {1});
    ObjectiveConfig cfg;
    cfg.kl_beta = 0.0;
    cfg.diversity_weight = 0.0;
    BatchObjective res = batch_objective_gradients(p, ref, std::span(&group, 1), cfg);
    double norm = 0.0;
    for (const Array& g : res.gradients) {
      for (double x : g.flat()) norm += x * x;
    }
    norm = std::sqrt(norm);
    out.details["degenerate_grad_norm"] = norm;
    if (!(norm < 1e-10)) {
      ok = false;
      fail.push_back("degenerate zero gradient");
    }
  }

  out.passed = ok;
  out.details["failed_checks"] = fail;
  out.details["runtime_s"] = elapsed_s(t0);
  return out;
}

VerifyReport run_verify(const std::string& selector, const KlFn& kl) {
  VerifyReport report;
  const bool all = selector == "all";
  if (all || selector == "identity") report.suites.push_back(verify_identity_suite());
  if (all || selector == "grad") report.suites.push_back(verify_grad_suite());
  if (all || selector == "metrics") report.suites.push_back(verify_metrics_suite(kl));
  if (report.suites.empty()) {
    throw ContractError("verify: unknown suite '" + selector +
                        "' (expected identity|grad|metrics|all)");
  }
  return report;
}

}  // namespace divgrpo
