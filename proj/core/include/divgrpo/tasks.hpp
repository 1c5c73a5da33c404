#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "divgrpo/vocab.hpp"

namespace divgrpo {

// One generated arithmetic question. Expressions have 2-4 single-digit
// operands joined by {+,-,*}; ground truth follows standard precedence.
struct Problem {
  int id = 0;
  std::vector<TokenId> expression;  // alternating digit/op tokens
  long long ground_truth = 0;
  std::vector<TokenId> prompt;  // BOS + expression + separator
};

struct RewardRecord {
  int accuracy = 0;  // 1 iff well-formatted and numerically correct
  int format = 0;    // 1 iff exactly one boxed integer before EOS
  double total = 0.0;

  static RewardRecord make(int accuracy, int format);
};

// Reward combination: accuracy + 0.2 * format. The diversity gate keys on the
// accuracy field alone.
inline constexpr double kFormatBonus = 0.2;

// Standard-precedence evaluation of an expression token span ("*" before
// "+"/"-", left-associative). ContractError on malformed spans.
long long evaluate_expression(const Vocabulary& vocab, std::span<const TokenId> expression);

// Deterministic problem generation; difficulty = number of operators (1-3).
// Avoids duplicate expressions within the batch while the space allows.
std::vector<Problem> generate_problems(const Vocabulary& vocab, int count, int difficulty,
                                       uint64_t seed);

// Rule-based reward. format=1 iff the response contains exactly one
// BOX_OPEN..BOX_CLOSE span, its interior is an optional minus followed by a
// nonempty digit string, and the span closes before EOS. accuracy=1 iff the
// boxed integer equals the ground truth (so accuracy <= format always).
RewardRecord score_response(const Problem& problem, std::span<const TokenId> response,
                            const Vocabulary& vocab);

// Extracts maximal "<digits> (op <digits>)* = <digits>" spans, rendered
// canonically. Order preserved; duplicates retained.
std::vector<std::string> extract_equations(std::span<const TokenId> response,
                                           const Vocabulary& vocab);

// JSONL round-trip: {"id":..,"expression":"3+5*2","ground_truth":13} per line.
void export_problems_jsonl(const std::vector<Problem>& problems, const Vocabulary& vocab,
                           std::ostream& out);
std::vector<Problem> import_problems_jsonl(std::istream& in, const Vocabulary& vocab);

}  // namespace divgrpo
