#pragma once

#include <functional>
#include <string>
#include <vector>

#include "divgrpo/json.hpp"
#include "divgrpo/objective.hpp"

namespace divgrpo {

struct SuiteResult {
  std::string name;
  bool passed = false;
  json details;
};

struct VerifyReport {
  std::vector<SuiteResult> suites;
  bool all_passed() const;
  std::string to_json_string() const;
};

// Injectable k3 hook so a corrupted estimator is detectable by the suite
// (negative-control fixture in the tests).
using KlFn = std::function<double(double)>;

// Enumeration identity over 50 seeded random tabular pairs (V<=4,
// max_len<=4): exact-form gap must stay below 1e-10.
SuiteResult verify_identity_suite();

// Finite-difference check of the combined objective over the full gating x
// (eps, beta, lambda) grid on a tabular policy: rel err < 1e-4 per cell.
SuiteResult verify_grad_suite();

// Metric fixtures, k3 positivity over 1e5 ratios, the potential@k identity on
// random binary tables, and the advantage contract (including the
// degenerate-group zero-gradient property).
SuiteResult verify_metrics_suite(const KlFn& kl = k3_estimator);

// selector: identity | grad | metrics | all.
VerifyReport run_verify(const std::string& selector, const KlFn& kl = k3_estimator);

}  // namespace divgrpo
