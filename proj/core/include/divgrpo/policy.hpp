#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "divgrpo/autodiff.hpp"
#include "divgrpo/vocab.hpp"

namespace divgrpo {

using TokenSpan = std::span<const TokenId>;

// Autoregressive softmax policy over a fixed vocabulary. Two backends: an
// exactly-enumerable tabular one (oracle tests) and a small MLP (training).
// Policies are read-shareable across threads; mutation of parameters is the
// optimizer's exclusive job.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual const Vocabulary& vocab() const = 0;
  virtual const char* backend_name() const = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;

  // Parameter buffers in a fixed canonical order (checkpoint/optimizer order).
  virtual std::vector<Array*> params() = 0;
  virtual std::vector<const Array*> params() const = 0;
  int param_count() const;

  // Raw next-token logits (1 x |V|) given the prompt and generated prefix.
  virtual Array next_logits(TokenSpan prompt, TokenSpan prefix) const = 0;

  // Differentiable per-token log-probs at temperature 1: a T x 1 column where
  // element t is log pi(tokens[t] | prompt, tokens[<t]). `leaves` must come
  // from bind() on the same tape.
  virtual ad::Value sequence_log_probs_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                                            TokenSpan prompt, TokenSpan tokens) const = 0;

  // Leaf nodes for the current parameter values, in params() order.
  std::vector<ad::Value> bind(ad::Tape& tape) const;
};

// Exact tabular factorization: one logits row per length-m context (contexts
// shorter than m are left-padded with BOS).
class TabularPolicy final : public Policy {
 public:
  TabularPolicy(Vocabulary vocab, int context_order);
  static TabularPolicy random(Vocabulary vocab, int context_order, uint64_t seed,
                              double logit_scale = 1.0);

  const Vocabulary& vocab() const override { return vocab_; }
  const char* backend_name() const override { return "tabular"; }
  std::unique_ptr<Policy> clone() const override;
  std::vector<Array*> params() override { return {&logits_}; }
  std::vector<const Array*> params() const override { return {&logits_}; }

  int context_order() const { return order_; }
  int context_count() const { return logits_.rows(); }
  Array& logits() { return logits_; }
  const Array& logits() const { return logits_; }

  // Row index for the context ending at `prefix` (position = end of prefix).
  int context_key(TokenSpan prompt, TokenSpan prefix) const;

  Array next_logits(TokenSpan prompt, TokenSpan prefix) const override;
  ad::Value sequence_log_probs_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                                    TokenSpan prompt, TokenSpan tokens) const override;

 private:
  Vocabulary vocab_;
  int order_;
  Array logits_;  // (|V|^m) x |V|
};

// Fixed-window MLP: embed the last `window` tokens (BOS-padded), one tanh
// hidden layer, linear head to vocabulary logits.
class NeuralPolicy final : public Policy {
 public:
  struct Dims {
    int embed = 16;
    int window = 8;
    int hidden = 64;
  };

  NeuralPolicy(Vocabulary vocab, Dims dims, uint64_t init_seed);

  const Vocabulary& vocab() const override { return vocab_; }
  const char* backend_name() const override { return "neural"; }
  std::unique_ptr<Policy> clone() const override;
  std::vector<Array*> params() override;
  std::vector<const Array*> params() const override;

  Dims dims() const { return dims_; }

  Array next_logits(TokenSpan prompt, TokenSpan prefix) const override;
  ad::Value sequence_log_probs_node(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                                    TokenSpan prompt, TokenSpan tokens) const override;

 private:
  std::vector<int> window_ids(TokenSpan prompt, TokenSpan tokens, int pos) const;

  Vocabulary vocab_;
  Dims dims_;
  Array embed_;  // |V| x d
  Array w1_;     // (window*d) x h
  Array b1_;     // 1 x h
  Array w2_;     // h x |V|
  Array b2_;     // 1 x |V|
};

// Frozen deep copy of a policy, tagged by the role it plays in the objective.
enum class SnapshotRole { old_policy, reference };

class PolicySnapshot {
 public:
  PolicySnapshot() = default;
  PolicySnapshot(const Policy& policy, SnapshotRole role)
      : policy_(policy.clone()), role_(role) {}

  bool valid() const { return policy_ != nullptr; }
  const Policy& policy() const { return *policy_; }
  SnapshotRole role() const { return role_; }

 private:
  std::shared_ptr<const Policy> policy_;
  SnapshotRole role_ = SnapshotRole::old_policy;
};

// ---- sampling and scoring ---------------------------------------------------

// Next-token distribution with temperature applied to the logits. Sums to 1.
Array token_distribution(const Policy& policy, TokenSpan prompt, TokenSpan prefix,
                         double temperature);

struct SampleResult {
  std::vector<TokenId> tokens;       // includes EOS when emitted
  std::vector<double> log_probs;     // temperature-1 log-probs of the sampled tokens
  std::vector<double> token_entropies;  // temperature-1 entropy of each sampling context
};

// Draws tokens at the given temperature until EOS or max_len. Recorded
// log-probs are evaluated at temperature 1 (the objective-side convention);
// temperature only shapes the sampling distribution.
SampleResult sample_completion_ex(const Policy& policy, TokenSpan prompt, double temperature,
                                  int max_len, uint64_t seed);

std::pair<std::vector<TokenId>, std::vector<double>> sample_completion(
    const Policy& policy, TokenSpan prompt, double temperature, int max_len, uint64_t seed);

// Argmax decoding (ties break to the lowest token id).
std::vector<TokenId> greedy_completion(const Policy& policy, TokenSpan prompt, int max_len);

// Plain per-token log-probs at temperature 1; same contract as the node form.
std::vector<double> sequence_log_probs(const Policy& policy, TokenSpan prompt, TokenSpan tokens);

struct SequenceProb {
  std::vector<TokenId> tokens;
  double prob;
};

// Exact sequence distribution of the policy: every completion either ends with
// EOS or has length max_len. Guard: |V|^max_len <= 10^6 candidate sequences.
std::vector<SequenceProb> enumerate_all_sequences(const Policy& policy, TokenSpan prompt,
                                                  int max_len);

}  // namespace divgrpo
