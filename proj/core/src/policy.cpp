#include "divgrpo/policy.hpp"

#include <cmath>

#include "divgrpo/rng.hpp"

namespace divgrpo {

int Policy::param_count() const {
  int n = 0;
  for (const Array* p : params()) n += p->size();
  return n;
}

std::vector<ad::Value> Policy::bind(ad::Tape& tape) const {
  std::vector<ad::Value> leaves;
  for (const Array* p : params()) leaves.push_back(tape.leaf(*p));
  return leaves;
}

// ---- tabular ----------------------------------------------------------------

namespace {

int checked_pow(int base, int exp, long long limit, const char* what) {
  long long v = 1;
  for (int i = 0; i < exp; ++i) {
    v *= base;
    if (v > limit) throw SizeError(std::string(what) + ": budget exceeded");
  }
  return static_cast<int>(v);
}

}  // namespace

TabularPolicy::TabularPolicy(Vocabulary vocab, int context_order)
    : vocab_(std::move(vocab)), order_(context_order) {
  if (order_ < 0) throw ContractError("TabularPolicy: negative context order");
  const int contexts =
      checked_pow(vocab_.size(), order_, 10'000'000, "TabularPolicy context table");
  logits_ = Array(contexts, vocab_.size());
}

TabularPolicy TabularPolicy::random(Vocabulary vocab, int context_order, uint64_t seed,
                                    double logit_scale) {
  TabularPolicy p(std::move(vocab), context_order);
  Rng rng(seed);
  for (int i = 0; i < p.logits_.size(); ++i) {
    p.logits_[i] = rng.uniform(-logit_scale, logit_scale);
  }
  return p;
}

std::unique_ptr<Policy> TabularPolicy::clone() const {
  return std::make_unique<TabularPolicy>(*this);
}

int TabularPolicy::context_key(TokenSpan prompt, TokenSpan prefix) const {
  // Last m tokens of [prompt, prefix], left-padded with BOS.
  const int v = vocab_.size();
  int key = 0;
  int weight = 1;
  const long long total = static_cast<long long>(prompt.size()) + prefix.size();
  for (int j = 0; j < order_; ++j) {
    const long long pos = total - 1 - j;  // j-th most recent
    TokenId tok;
    if (pos < 0) {
      tok = vocab_.bos();
    } else if (pos < static_cast<long long>(prompt.size())) {
      tok = prompt[pos];
    } else {
      tok = prefix[pos - prompt.size()];
    }
    vocab_.require(tok);
    key += tok * weight;
    weight *= v;
  }
  return key;
}

Array TabularPolicy::next_logits(TokenSpan prompt, TokenSpan prefix) const {
  const int key = context_key(prompt, prefix);
  Array out(1, vocab_.size());
  for (int c = 0; c < vocab_.size(); ++c) out(0, c) = logits_(key, c);
  return out;
}

ad::Value TabularPolicy::sequence_log_probs_node(ad::Tape& tape,
                                                 const std::vector<ad::Value>& leaves,
                                                 TokenSpan prompt, TokenSpan tokens) const {
  if (tokens.empty()) throw ContractError("sequence_log_probs: empty token list");
  std::vector<int> keys(tokens.size());
  std::vector<int> cols(tokens.size());
  for (size_t t = 0; t < tokens.size(); ++t) {
    vocab_.require(tokens[t]);
    keys[t] = context_key(prompt, tokens.subspan(0, t));
    cols[t] = tokens[t];
  }
  (void)tape;
  ad::Value rows = ad::take_rows(leaves.at(0), std::move(keys));
  ad::Value logp = ad::log_softmax_rows(rows);
  return ad::gather_cols(logp, std::move(cols));
}

// ---- neural -----------------------------------------------------------------

NeuralPolicy::NeuralPolicy(Vocabulary vocab, Dims dims, uint64_t init_seed)
    : vocab_(std::move(vocab)), dims_(dims) {
  if (dims_.embed < 1 || dims_.window < 1 || dims_.hidden < 1) {
    throw ContractError("NeuralPolicy: dims must be positive");
  }
  const int v = vocab_.size();
  embed_ = Array(v, dims_.embed);
  w1_ = Array(dims_.window * dims_.embed, dims_.hidden);
  b1_ = Array(1, dims_.hidden);
  w2_ = Array(dims_.hidden, v);
  b2_ = Array(1, v);
  Rng rng(init_seed);
  for (Array* p : params()) {
    for (int i = 0; i < p->size(); ++i) (*p)[i] = rng.uniform(-0.08, 0.08);
  }
}

std::unique_ptr<Policy> NeuralPolicy::clone() const {
  return std::make_unique<NeuralPolicy>(*this);
}

std::vector<Array*> NeuralPolicy::params() { return {&embed_, &w1_, &b1_, &w2_, &b2_}; }
std::vector<const Array*> NeuralPolicy::params() const {
  return {&embed_, &w1_, &b1_, &w2_, &b2_};
}

std::vector<int> NeuralPolicy::window_ids(TokenSpan prompt, TokenSpan tokens, int pos) const {
  // Window of the last `window` tokens before generation position `pos`,
  // oldest first, BOS-padded on the left.
  std::vector<int> ids(dims_.window);
  const long long total = static_cast<long long>(prompt.size()) + pos;
  for (int j = 0; j < dims_.window; ++j) {
    const long long p = total - dims_.window + j;
    TokenId tok;
    if (p < 0) {
      tok = vocab_.bos();
    } else if (p < static_cast<long long>(prompt.size())) {
      tok = prompt[p];
    } else {
      tok = tokens[p - prompt.size()];
    }
    vocab_.require(tok);
    ids[j] = tok;
  }
  return ids;
}

Array NeuralPolicy::next_logits(TokenSpan prompt, TokenSpan prefix) const {
  const std::vector<int> ids = window_ids(prompt, prefix, static_cast<int>(prefix.size()));
  // features = concat of window embeddings, 1 x (window*d)
  Array feat(1, dims_.window * dims_.embed);
  for (int j = 0; j < dims_.window; ++j) {
    for (int e = 0; e < dims_.embed; ++e) feat(0, j * dims_.embed + e) = embed_(ids[j], e);
  }
  Array h = array_ops::matmul(feat, w1_);
  for (int c = 0; c < h.cols(); ++c) h(0, c) = std::tanh(h(0, c) + b1_(0, c));
  Array logits = array_ops::matmul(h, w2_);
  for (int c = 0; c < logits.cols(); ++c) logits(0, c) += b2_(0, c);
  return logits;
}

ad::Value NeuralPolicy::sequence_log_probs_node(ad::Tape& tape,
                                                const std::vector<ad::Value>& leaves,
                                                TokenSpan prompt, TokenSpan tokens) const {
  if (tokens.empty()) throw ContractError("sequence_log_probs: empty token list");
  const int T = static_cast<int>(tokens.size());
  std::vector<int> flat_ids;
  flat_ids.reserve(static_cast<size_t>(T) * dims_.window);
  std::vector<int> cols(T);
  for (int t = 0; t < T; ++t) {
    vocab_.require(tokens[t]);
    const std::vector<int> ids = window_ids(prompt, tokens, t);
    flat_ids.insert(flat_ids.end(), ids.begin(), ids.end());
    cols[t] = tokens[t];
  }
  (void)tape;
  const ad::Value& embed = leaves.at(0);
  ad::Value gathered = ad::take_rows(embed, std::move(flat_ids));        // (T*window) x d
  ad::Value feats = ad::reshape(gathered, T, dims_.window * dims_.embed);
  ad::Value h = ad::tanh(ad::add_rowvec(ad::matmul(feats, leaves.at(1)), leaves.at(2)));
  ad::Value logits = ad::add_rowvec(ad::matmul(h, leaves.at(3)), leaves.at(4));
  ad::Value logp = ad::log_softmax_rows(logits);
  return ad::gather_cols(logp, std::move(cols));
}

// ---- snapshot-free sampling ops ----------------------------------------------

Array token_distribution(const Policy& policy, TokenSpan prompt, TokenSpan prefix,
                         double temperature) {
  if (!(temperature > 0.0)) throw ContractError("token_distribution: temperature must be > 0");
  Array logits = policy.next_logits(prompt, prefix);
  for (int i = 0; i < logits.size(); ++i) logits[i] /= temperature;
  return array_ops::softmax_rows(logits);
}

SampleResult sample_completion_ex(const Policy& policy, TokenSpan prompt, double temperature,
                                  int max_len, uint64_t seed) {
  if (max_len < 1) throw ContractError("sample_completion: max_len must be >= 1");
  if (!(temperature > 0.0)) throw ContractError("sample_completion: temperature must be > 0");
  SampleResult out;
  Rng rng(seed);
  const TokenId eos = policy.vocab().eos();
  while (static_cast<int>(out.tokens.size()) < max_len) {
    Array logits = policy.next_logits(prompt, out.tokens);
    Array logp1 = array_ops::log_softmax_rows(logits);  // temperature-1 log-probs
    Array sampling = logits;
    for (int i = 0; i < sampling.size(); ++i) sampling[i] /= temperature;
    Array probs = array_ops::softmax_rows(sampling);
    const int tok = rng.categorical(probs.flat());
    out.tokens.push_back(tok);
    out.log_probs.push_back(logp1(0, tok));
    double h = 0.0;
    for (int c = 0; c < logp1.cols(); ++c) h -= std::exp(logp1(0, c)) * logp1(0, c);
    out.token_entropies.push_back(h);
    if (tok == eos) break;
  }
  return out;
}

std::pair<std::vector<TokenId>, std::vector<double>> sample_completion(
    const Policy& policy, TokenSpan prompt, double temperature, int max_len, uint64_t seed) {
  SampleResult r = sample_completion_ex(policy, prompt, temperature, max_len, seed);
  return {std::move(r.tokens), std::move(r.log_probs)};
}

std::vector<TokenId> greedy_completion(const Policy& policy, TokenSpan prompt, int max_len) {
  if (max_len < 1) throw ContractError("greedy_completion: max_len must be >= 1");
  std::vector<TokenId> tokens;
  const TokenId eos = policy.vocab().eos();
  while (static_cast<int>(tokens.size()) < max_len) {
    Array logits = policy.next_logits(prompt, tokens);
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c) {
      if (logits(0, c) > logits(0, best)) best = c;
    }
    tokens.push_back(best);
    if (best == eos) break;
  }
  return tokens;
}

std::vector<double> sequence_log_probs(const Policy& policy, TokenSpan prompt, TokenSpan tokens) {
  if (tokens.empty()) throw ContractError("sequence_log_probs: empty token list");
  std::vector<double> out(tokens.size());
  for (size_t t = 0; t < tokens.size(); ++t) {
    policy.vocab().require(tokens[t]);
    Array logits = policy.next_logits(prompt, tokens.subspan(0, t));
    Array logp = array_ops::log_softmax_rows(logits);
    out[t] = logp(0, tokens[t]);
  }
  return out;
}

namespace {

void enumerate_rec(const Policy& policy, TokenSpan prompt, int max_len,
                   std::vector<TokenId>& prefix, double prob,
                   std::vector<SequenceProb>& out) {
  if (static_cast<int>(prefix.size()) == max_len) {
    out.push_back({prefix, prob});
    return;
  }
  Array probs = token_distribution(policy, prompt, prefix, 1.0);
  const TokenId eos = policy.vocab().eos();
  for (int v = 0; v < probs.cols(); ++v) {
    const double p = prob * probs(0, v);
    prefix.push_back(v);
    if (v == eos) {
      out.push_back({prefix, p});
    } else {
      enumerate_rec(policy, prompt, max_len, prefix, p, out);
    }
    prefix.pop_back();
  }
}

}  // namespace

std::vector<SequenceProb> enumerate_all_sequences(const Policy& policy, TokenSpan prompt,
                                                  int max_len) {
  if (max_len < 1) throw ContractError("enumerate_all_sequences: max_len must be >= 1");
  checked_pow(policy.vocab().size(), max_len, 1'000'000, "enumerate_all_sequences");
  std::vector<SequenceProb> out;
  std::vector<TokenId> prefix;
  enumerate_rec(policy, prompt, max_len, prefix, 1.0, out);
  return out;
}

}  // namespace divgrpo
