#pragma once

#include <span>
#include <vector>

#include "divgrpo/rollout.hpp"

namespace divgrpo {

enum class GatingMode { positive_only, all_samples, off };

struct ObjectiveConfig {
  double clip_epsilon = 0.2;       // PPO-style clip range, in (0,1)
  double kl_beta = 1e-4;           // KL penalty weight, >= 0
  double diversity_weight = 0.01;  // lambda, >= 0
  GatingMode gating = GatingMode::positive_only;
  // Clip on the whole-sequence probability ratio instead of the per-token
  // mean. Overflow-prone, so only trajectories with T <= 16 are accepted;
  // exists to compare the two aggregation forms at short lengths.
  bool sequence_level_ratio = false;

  void validate() const;
};

// All terms reported with the sign convention of the maximized objective:
// total = surrogate - kl_beta * kl + diversity_weight * diversity.
struct LossBreakdown {
  double surrogate = 0.0;      // clipped-min importance term, group mean
  double kl = 0.0;             // k3 estimate, per-token mean then group mean
  double diversity = 0.0;      // gated diversity surrogate (0 when inactive)
  double total = 0.0;
  double clip_fraction = 0.0;  // tokens where the clipped branch is strictly lower
  double mean_ratio = 0.0;
};

// k3 estimator of KL(pi_theta || pi_ref) from a single ratio u = ref/theta:
// u - log u - 1. Nonnegative, zero exactly at u = 1.
double k3_estimator(double u);

// ---- differentiable builders -------------------------------------------------
// `leaves` must come from policy.bind(tape); old/ref quantities enter as
// constants so gradients flow only through pi_theta.

// Per-token k3 values (T x 1) for the realized tokens of a trajectory.
ad::Value kl_k3_node(ad::Tape& tape, const std::vector<ad::Value>& leaves, const Policy& policy,
                     const PolicySnapshot& ref, TokenSpan prompt, const Trajectory& traj);
std::vector<double> kl_k3(const Policy& policy, const PolicySnapshot& ref, TokenSpan prompt,
                          const Trajectory& traj);

struct SurrogateDiag {
  long long clipped_tokens = 0;
  long long total_tokens = 0;
  double ratio_sum = 0.0;
  double surrogate_value = 0.0;  // without the KL part
  double kl_value = 0.0;
};

// GRPO group objective: (1/G) sum_i [ mean_t min(r A_i, clip(r) A_i) - beta KL_i ].
ad::Value grpo_surrogate_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                              const Policy& policy, const PolicySnapshot& ref,
                              const GroupBatch& group, const ObjectiveConfig& config,
                              SurrogateDiag* diag = nullptr);

// Importance-weighted entropy surrogate of one trajectory:
// -(1/T) sum_t (pi_theta / pi_old) log pi_theta on the realized tokens, with
// pi_old a recorded constant and pi_theta differentiated through both factors.
ad::Value diversity_surrogate_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                                   const Policy& policy, TokenSpan prompt,
                                   const Trajectory& traj);
double diversity_surrogate(const Policy& policy, TokenSpan prompt, const Trajectory& traj);

// Group-mean gated diversity: positive_only sums accurate trajectories only,
// divided by G either way (keeps lambda comparable across groups).
ad::Value gated_diversity_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                               const Policy& policy, const GroupBatch& group,
                               const ObjectiveConfig& config);
double gated_diversity(const Policy& policy, const GroupBatch& group,
                       const ObjectiveConfig& config);

struct ObjectiveNodes {
  ad::Value total;
  LossBreakdown breakdown;
};

// J = grpo_surrogate + lambda * gated_diversity. When lambda == 0 or gating is
// off, the diversity term is not built at all, making the lambda=0 path
// bit-identical to a diversity-free objective.
ObjectiveNodes combined_objective_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                                       const Policy& policy, const PolicySnapshot& ref,
                                       const GroupBatch& group, const ObjectiveConfig& config);
LossBreakdown combined_objective(const Policy& policy, const PolicySnapshot& ref,
                                 const GroupBatch& group, const ObjectiveConfig& config);

// Mean objective over several groups with gradients for the policy parameters
// (in params() order). One tape, one backward.
struct BatchObjective {
  LossBreakdown breakdown;       // terms averaged over groups, clip/ratio over tokens
  std::vector<Array> gradients;  // d(total)/d(param)
};
BatchObjective batch_objective_gradients(const Policy& policy, const PolicySnapshot& ref,
                                         std::span<const GroupBatch> groups,
                                         const ObjectiveConfig& config);

// ---- verification ------------------------------------------------------------

// Exhaustive-enumeration check that the importance-weighted surrogate equals
// the true mean conditional entropy along old-policy trajectories.
//
// The token-sum forms E_old[ sum_t H(pi_theta(.|ctx_t)) ] and
// E_old[ sum_t -(pi_theta/pi_old) log pi_theta ] are equal exactly, for any
// EOS/length structure; lhs/rhs report them normalized by E[T] so the scale is
// per-token. The per-sequence-normalized variant (1/T inside the expectation,
// which is what the trainable estimator uses) is reported alongside: its gap
// is generally nonzero when T varies across sequences, and quantifies the
// length-weighting approximation rather than an implementation bug.
struct IdentityReport {
  double lhs = 0.0;   // E[sum_t H] / E[T]
  double rhs = 0.0;   // E[sum_t importance-weighted -log pi] / E[T]
  double gap = 0.0;   // |lhs - rhs|, < 1e-10 by construction
  double lhs_per_sequence = 0.0;  // E[(1/T) sum_t H]
  double rhs_per_sequence = 0.0;  // E[(1/T) sum_t f]
  double gap_per_sequence = 0.0;
  double expected_length = 0.0;
};

IdentityReport verify_identity(const Policy& theta, const Policy& old_policy, TokenSpan prompt,
                               int max_len);

// Per-token gradient-direction records for the diversity term: coefficient
// -(1 + log p_t) is positive exactly when p_t < 1/e, i.e. diversity ascent
// raises the probability of rare realized tokens.
struct TokenGradientRecord {
  double prob = 0.0;
  double coefficient = 0.0;
  bool positive = false;
};

std::vector<TokenGradientRecord> gradient_direction_report(const Policy& policy, TokenSpan prompt,
                                                           const Trajectory& traj);

}  // namespace divgrpo
