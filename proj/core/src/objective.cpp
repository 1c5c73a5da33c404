#include "divgrpo/objective.hpp"

#include <cmath>

namespace divgrpo {

void ObjectiveConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw ContractError("ObjectiveConfig: clip_epsilon must lie in (0,1)");
  }
  if (kl_beta < 0.0) throw ContractError("ObjectiveConfig: kl_beta must be >= 0");
  if (diversity_weight < 0.0) throw ContractError("ObjectiveConfig: diversity_weight must be >= 0");
}

double k3_estimator(double u) {
  if (!(u > 0.0) || !std::isfinite(u)) throw NumericError("k3_estimator: ratio must be finite and positive");
  return u - std::log(u) - 1.0;
}

namespace {

ad::Value old_logprob_constant(ad::Tape& tape, const Trajectory& traj) {
  if (traj.old_log_probs.size() != traj.tokens.size()) {
    throw ContractError("objective: trajectory old log-probs out of sync with tokens");
  }
  return tape.constant(Array::column(traj.old_log_probs));
}

void require_finite_ratios(const Array& ratios, int traj_index) {
  for (int t = 0; t < ratios.size(); ++t) {
    if (!std::isfinite(ratios[t])) {
      throw NumericError("grpo_surrogate: non-finite ratio at trajectory " +
                         std::to_string(traj_index) + ", token " + std::to_string(t));
    }
  }
}

}  // namespace

ad::Value kl_k3_node(ad::Tape& tape, const std::vector<ad::Value>& leaves, const Policy& policy,
                     const PolicySnapshot& ref, TokenSpan prompt, const Trajectory& traj) {
  if (!ref.valid()) throw ContractError("kl_k3: missing reference snapshot");
  if (ref.policy().vocab().hash() != policy.vocab().hash()) {
    throw ContractError("kl_k3: policies use different vocabularies");
  }
  ad::Value logp = policy.sequence_log_probs_node(tape, leaves, prompt, traj.tokens);
  std::vector<double> ref_lp = sequence_log_probs(ref.policy(), prompt, traj.tokens);
  ad::Value ref_const = tape.constant(Array::column(std::move(ref_lp)));
  // u = exp(log ref - log theta); k3 = u - log u - 1.
  ad::Value log_u = ad::sub(ref_const, logp);
  ad::Value u = ad::exp(log_u);
  for (int t = 0; t < u.val().size(); ++t) {
    if (!std::isfinite(u.val()[t])) {
      throw NumericError("kl_k3: non-finite ratio at token " + std::to_string(t));
    }
  }
  return ad::add_scalar(ad::sub(u, log_u), -1.0);
}

std::vector<double> kl_k3(const Policy& policy, const PolicySnapshot& ref, TokenSpan prompt,
                          const Trajectory& traj) {
  ad::Tape tape;
  auto leaves = policy.bind(tape);
  ad::Value node = kl_k3_node(tape, leaves, policy, ref, prompt, traj);
  return {node.val().flat().begin(), node.val().flat().end()};
}

ad::Value grpo_surrogate_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                              const Policy& policy, const PolicySnapshot& ref,
                              const GroupBatch& group, const ObjectiveConfig& config,
                              SurrogateDiag* diag) {
  config.validate();
  const int G = group.group_size();
  if (G < 1) throw ContractError("grpo_surrogate: empty group");
  if (static_cast<int>(group.advantages.size()) != G) {
    throw ContractError("grpo_surrogate: advantages not computed for this group");
  }
  const double lo = 1.0 - config.clip_epsilon;
  const double hi = 1.0 + config.clip_epsilon;

  SurrogateDiag local;
  ad::Value acc;
  for (int i = 0; i < G; ++i) {
    const Trajectory& traj = group.trajectories[i];
    const double advantage = group.advantages[i];
    ad::Value logp = policy.sequence_log_probs_node(tape, leaves, group.prompt, traj.tokens);
    ad::Value old_const = old_logprob_constant(tape, traj);

    ad::Value surrogate_i;
    if (config.sequence_level_ratio) {
      if (traj.length() > 16) {
        throw ContractError("grpo_surrogate: sequence-level ratio limited to T <= 16");
      }
      ad::Value seq_ratio = ad::exp(ad::sum(ad::sub(logp, old_const)));
      require_finite_ratios(seq_ratio.val(), i);
      ad::Value unclipped = ad::mul_scalar(seq_ratio, advantage);
      ad::Value clipped = ad::mul_scalar(ad::clamp(seq_ratio, lo, hi), advantage);
      local.total_tokens += 1;
      local.ratio_sum += seq_ratio.val()[0];
      if (clipped.val()[0] < unclipped.val()[0]) local.clipped_tokens += 1;
      surrogate_i = ad::minimum(unclipped, clipped);
    } else {
      ad::Value ratio = ad::exp(ad::sub(logp, old_const));
      require_finite_ratios(ratio.val(), i);
      ad::Value unclipped = ad::mul_scalar(ratio, advantage);
      ad::Value clipped = ad::mul_scalar(ad::clamp(ratio, lo, hi), advantage);
      for (int t = 0; t < ratio.val().size(); ++t) {
        local.total_tokens += 1;
        local.ratio_sum += ratio.val()[t];
        if (clipped.val()[t] < unclipped.val()[t]) local.clipped_tokens += 1;
      }
      surrogate_i = ad::mean(ad::minimum(unclipped, clipped));
    }
    local.surrogate_value += surrogate_i.item();

    ad::Value contribution = surrogate_i;
    if (config.kl_beta > 0.0) {
      ad::Value kl_i = ad::mean(kl_k3_node(tape, leaves, policy, ref, group.prompt, traj));
      local.kl_value += kl_i.item();
      contribution = ad::sub(surrogate_i, ad::mul_scalar(kl_i, config.kl_beta));
    } else {
      std::vector<double> k3 = kl_k3(policy, ref, group.prompt, traj);
      double kl_i = 0.0;
      for (double v : k3) kl_i += v;
      local.kl_value += kl_i / k3.size();
    }
    acc = acc.valid() ? ad::add(acc, contribution) : contribution;
  }
  local.surrogate_value /= G;
  local.kl_value /= G;
  if (diag) *diag = local;
  return ad::mul_scalar(acc, 1.0 / G);
}

ad::Value diversity_surrogate_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                                   const Policy& policy, TokenSpan prompt,
                                   const Trajectory& traj) {
  if (traj.length() < 1) throw ContractError("diversity_surrogate: empty trajectory");
  ad::Value logp = policy.sequence_log_probs_node(tape, leaves, prompt, traj.tokens);
  ad::Value old_const = old_logprob_constant(tape, traj);
  // ratio carries gradient through pi_theta; pi_old is a recorded constant.
  ad::Value ratio = ad::exp(ad::sub(logp, old_const));
  return ad::neg(ad::mean(ad::mul(ratio, logp)));
}

double diversity_surrogate(const Policy& policy, TokenSpan prompt, const Trajectory& traj) {
  ad::Tape tape;
  auto leaves = policy.bind(tape);
  return diversity_surrogate_node(tape, leaves, policy, prompt, traj).item();
}

ad::Value gated_diversity_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                               const Policy& policy, const GroupBatch& group,
                               const ObjectiveConfig& config) {
  if (config.gating == GatingMode::off) return tape.constant_scalar(0.0);
  const int G = group.group_size();
  ad::Value acc;
  for (const Trajectory& traj : group.trajectories) {
    if (config.gating == GatingMode::positive_only && traj.reward.accuracy != 1) continue;
    ad::Value d = diversity_surrogate_node(tape, leaves, policy, group.prompt, traj);
    acc = acc.valid() ? ad::add(acc, d) : d;
  }
  if (!acc.valid()) return tape.constant_scalar(0.0);
  return ad::mul_scalar(acc, 1.0 / G);
}

double gated_diversity(const Policy& policy, const GroupBatch& group,
                       const ObjectiveConfig& config) {
  ad::Tape tape;
  auto leaves = policy.bind(tape);
  return gated_diversity_node(tape, leaves, policy, group, config).item();
}

ObjectiveNodes combined_objective_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                                       const Policy& policy, const PolicySnapshot& ref,
                                       const GroupBatch& group, const ObjectiveConfig& config) {
  config.validate();
  SurrogateDiag diag;
  ad::Value total = grpo_surrogate_node(tape, leaves, policy, ref, group, config, &diag);

  ObjectiveNodes out;
  out.breakdown.surrogate = diag.surrogate_value;
  out.breakdown.kl = diag.kl_value;
  out.breakdown.clip_fraction =
      diag.total_tokens ? double(diag.clipped_tokens) / diag.total_tokens : 0.0;
  out.breakdown.mean_ratio = diag.total_tokens ? diag.ratio_sum / diag.total_tokens : 0.0;

  // Skipping the diversity term entirely at lambda=0 keeps that path
  // bit-identical to an objective with no diversity code at all.
  if (config.diversity_weight > 0.0 && config.gating != GatingMode::off) {
    ad::Value gated = gated_diversity_node(tape, leaves, policy, group, config);
    out.breakdown.diversity = gated.item();
    total = ad::add(total, ad::mul_scalar(gated, config.diversity_weight));
  }
  out.total = total;
  out.breakdown.total = total.item();
  return out;
}

LossBreakdown combined_objective(const Policy& policy, const PolicySnapshot& ref,
                                 const GroupBatch& group, const ObjectiveConfig& config) {
  ad::Tape tape;
  auto leaves = policy.bind(tape);
  return combined_objective_node(tape, leaves, policy, ref, group, config).breakdown;
}

BatchObjective batch_objective_gradients(const Policy& policy, const PolicySnapshot& ref,
                                         std::span<const GroupBatch> groups,
                                         const ObjectiveConfig& config) {
  if (groups.empty()) throw ContractError("batch_objective_gradients: no groups");
  ad::Tape tape;
  auto leaves = policy.bind(tape);

  BatchObjective out;
  long long clipped = 0, tokens = 0;
  double ratio_sum = 0.0;
  ad::Value acc;
  for (const GroupBatch& group : groups) {
    SurrogateDiag diag;
    ad::Value total = grpo_surrogate_node(tape, leaves, policy, ref, group, config, &diag);
    if (config.diversity_weight > 0.0 && config.gating != GatingMode::off) {
      ad::Value gated = gated_diversity_node(tape, leaves, policy, group, config);
      out.breakdown.diversity += gated.item();
      total = ad::add(total, ad::mul_scalar(gated, config.diversity_weight));
    }
    out.breakdown.surrogate += diag.surrogate_value;
    out.breakdown.kl += diag.kl_value;
    clipped += diag.clipped_tokens;
    tokens += diag.total_tokens;
    ratio_sum += diag.ratio_sum;
    acc = acc.valid() ? ad::add(acc, total) : total;
  }
  const double n = static_cast<double>(groups.size());
  ad::Value mean_total = ad::mul_scalar(acc, 1.0 / n);
  out.breakdown.surrogate /= n;
  out.breakdown.kl /= n;
  out.breakdown.diversity /= n;
  out.breakdown.total = mean_total.item();
  out.breakdown.clip_fraction = tokens ? double(clipped) / tokens : 0.0;
  out.breakdown.mean_ratio = tokens ? ratio_sum / tokens : 0.0;

  tape.backward(mean_total);
  for (const ad::Value& leaf : leaves) out.gradients.push_back(leaf.grad());
  return out;
}

IdentityReport verify_identity(const Policy& theta, const Policy& old_policy, TokenSpan prompt,
                               int max_len) {
  if (theta.vocab().hash() != old_policy.vocab().hash()) {
    throw ContractError("verify_identity: policies use different vocabularies");
  }
  IdentityReport rep;
  double e_sum_h = 0.0, e_sum_f = 0.0, e_len = 0.0;
  for (const SequenceProb& seq : enumerate_all_sequences(old_policy, prompt, max_len)) {
    if (seq.prob == 0.0) continue;  // underflowed branch; contributes nothing
    const int T = static_cast<int>(seq.tokens.size());
    double sum_h = 0.0, sum_f = 0.0;
    for (int t = 0; t < T; ++t) {
      TokenSpan prefix(seq.tokens.data(), static_cast<size_t>(t));
      const Array p_theta = token_distribution(theta, prompt, prefix, 1.0);
      const Array p_old = token_distribution(old_policy, prompt, prefix, 1.0);
      sum_h += array_ops::entropy(p_theta.flat());
      const TokenId tok = seq.tokens[t];
      sum_f += -(p_theta[tok] / p_old[tok]) * std::log(p_theta[tok]);
    }
    e_sum_h += seq.prob * sum_h;
    e_sum_f += seq.prob * sum_f;
    e_len += seq.prob * T;
    rep.lhs_per_sequence += seq.prob * (sum_h / T);
    rep.rhs_per_sequence += seq.prob * (sum_f / T);
  }
  rep.expected_length = e_len;
  rep.lhs = e_sum_h / e_len;
  rep.rhs = e_sum_f / e_len;
  rep.gap = std::abs(rep.lhs - rep.rhs);
  rep.gap_per_sequence = std::abs(rep.lhs_per_sequence - rep.rhs_per_sequence);
  return rep;
}

std::vector<TokenGradientRecord> gradient_direction_report(const Policy& policy, TokenSpan prompt,
                                                           const Trajectory& traj) {
  std::vector<TokenGradientRecord> out;
  const std::vector<double> logp = sequence_log_probs(policy, prompt, traj.tokens);
  out.reserve(logp.size());
  for (double lp : logp) {
    TokenGradientRecord rec;
    rec.prob = std::exp(lp);
    rec.coefficient = -(1.0 + lp);
    rec.positive = rec.coefficient > 0.0;
    out.push_back(rec);
  }
  return out;
}

}  // namespace divgrpo
