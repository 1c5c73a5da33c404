#include "divgrpo/tasks.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "divgrpo/json.hpp"
#include "divgrpo/rng.hpp"

namespace divgrpo {

RewardRecord RewardRecord::make(int accuracy, int format) {
  if (accuracy == 1 && format != 1) {
    throw ContractError("RewardRecord: accuracy=1 requires format=1");
  }
  RewardRecord r;
  r.accuracy = accuracy;
  r.format = format;
  r.total = accuracy + kFormatBonus * format;
  return r;
}

long long evaluate_expression(const Vocabulary& vocab, std::span<const TokenId> expression) {
  if (expression.empty() || expression.size() % 2 == 0) {
    throw ContractError("evaluate_expression: expected digit (op digit)*");
  }
  std::vector<long long> values;
  std::vector<TokenId> ops;
  for (size_t i = 0; i < expression.size(); ++i) {
    if (i % 2 == 0) {
      if (!vocab.is_digit(expression[i])) {
        throw ContractError("evaluate_expression: operand is not a digit token");
      }
      values.push_back(vocab.digit_value(expression[i]));
    } else {
      if (!vocab.is_operator(expression[i])) {
        throw ContractError("evaluate_expression: expected operator token");
      }
      ops.push_back(expression[i]);
    }
  }
  // Multiplication first, then left-to-right addition/subtraction.
  for (size_t i = 0; i < ops.size();) {
    if (ops[i] == vocab.times()) {
      values[i] *= values[i + 1];
      values.erase(values.begin() + i + 1);
      ops.erase(ops.begin() + i);
    } else {
      ++i;
    }
  }
  long long acc = values[0];
  for (size_t i = 0; i < ops.size(); ++i) {
    acc = (ops[i] == vocab.plus()) ? acc + values[i + 1] : acc - values[i + 1];
  }
  return acc;
}

namespace {

std::vector<TokenId> make_prompt(const Vocabulary& vocab, const std::vector<TokenId>& expr) {
  std::vector<TokenId> prompt;
  prompt.reserve(expr.size() + 2);
  prompt.push_back(vocab.bos());
  prompt.insert(prompt.end(), expr.begin(), expr.end());
  prompt.push_back(vocab.separator());
  return prompt;
}

}  // namespace

std::vector<Problem> generate_problems(const Vocabulary& vocab, int count, int difficulty,
                                       uint64_t seed) {
  if (count < 1) throw ContractError("generate_problems: count must be >= 1");
  if (difficulty < 1 || difficulty > 3) {
    throw ContractError("generate_problems: difficulty must be 1, 2, or 3");
  }
  if (!vocab.has_math_symbols()) {
    throw ContractError("generate_problems: vocabulary lacks digit/operator tokens");
  }
  const TokenId op_pool[3] = {vocab.plus(), vocab.minus(), vocab.times()};
  Rng rng(seed);
  std::vector<Problem> out;
  std::set<std::string> seen;
  for (int i = 0; i < count; ++i) {
    Problem p;
    p.id = i;
    // Rejection-sample a fresh expression; give up on uniqueness after enough
    // attempts so oversized requests still terminate.
    for (int attempt = 0; attempt < 200; ++attempt) {
      std::vector<TokenId> expr;
      expr.push_back(vocab.digit(rng.below(10)));
      for (int k = 0; k < difficulty; ++k) {
        expr.push_back(op_pool[rng.below(3)]);
        expr.push_back(vocab.digit(rng.below(10)));
      }
      const std::string key = vocab.render(expr);
      if (seen.count(key) && attempt < 199) continue;
      seen.insert(key);
      p.expression = std::move(expr);
      break;
    }
    p.ground_truth = evaluate_expression(vocab, p.expression);
    p.prompt = make_prompt(vocab, p.expression);
    out.push_back(std::move(p));
  }
  return out;
}

RewardRecord score_response(const Problem& problem, std::span<const TokenId> response,
                            const Vocabulary& vocab) {
  // Only tokens before the first EOS count; a span still open there fails.
  size_t end = response.size();
  for (size_t i = 0; i < response.size(); ++i) {
    if (response[i] == vocab.eos()) {
      end = i;
      break;
    }
  }

  int opens = 0, closes = 0;
  size_t open_pos = 0, close_pos = 0;
  for (size_t i = 0; i < end; ++i) {
    if (response[i] == vocab.box_open()) {
      ++opens;
      open_pos = i;
    } else if (response[i] == vocab.box_close()) {
      ++closes;
      close_pos = i;
    }
  }
  if (opens != 1 || closes != 1 || open_pos >= close_pos) return RewardRecord::make(0, 0);

  // Interior: optional leading minus, then a nonempty digit string.
  size_t i = open_pos + 1;
  bool negative = false;
  if (i < close_pos && response[i] == vocab.minus()) {
    negative = true;
    ++i;
  }
  if (i == close_pos) return RewardRecord::make(0, 0);
  long long value = 0;
  bool overflow = false;
  for (; i < close_pos; ++i) {
    if (!vocab.is_digit(response[i])) return RewardRecord::make(0, 0);
    if (value > 1'000'000'000LL) overflow = true;
    if (!overflow) value = value * 10 + vocab.digit_value(response[i]);
  }
  if (negative) value = -value;

  const int accuracy = (!overflow && value == problem.ground_truth) ? 1 : 0;
  return RewardRecord::make(accuracy, 1);
}

std::vector<std::string> extract_equations(std::span<const TokenId> response,
                                           const Vocabulary& vocab) {
  std::vector<std::string> out;
  if (!vocab.has_math_symbols()) return out;
  const auto is_digit = [&](size_t i) { return vocab.is_digit(response[i]); };
  const size_t n = response.size();
  for (size_t eq = 0; eq < n; ++eq) {
    if (response[eq] != vocab.equals()) continue;

    // Right side: maximal digit run.
    size_t rhs_end = eq + 1;
    while (rhs_end < n && is_digit(rhs_end)) ++rhs_end;
    if (rhs_end == eq + 1) continue;

    // Left side: digit run (op digit run)*, extended maximally leftwards.
    if (eq == 0 || !is_digit(eq - 1)) continue;
    size_t lhs_start = eq - 1;
    while (lhs_start > 0 && is_digit(lhs_start - 1)) --lhs_start;
    while (lhs_start >= 2 && vocab.is_operator(response[lhs_start - 1]) &&
           is_digit(lhs_start - 2)) {
      lhs_start -= 2;
      while (lhs_start > 0 && is_digit(lhs_start - 1)) --lhs_start;
    }

    std::vector<TokenId> span(response.begin() + lhs_start, response.begin() + rhs_end);
    out.push_back(vocab.render(span));
  }
  return out;
}

namespace {

std::vector<TokenId> parse_expression_string(const Vocabulary& vocab, const std::string& s) {
  std::vector<TokenId> expr;
  for (char c : s) {
    if (c >= '0' && c <= '9') {
      expr.push_back(vocab.digit(c - '0'));
    } else if (c == '+') {
      expr.push_back(vocab.plus());
    } else if (c == '-') {
      expr.push_back(vocab.minus());
    } else if (c == '*') {
      expr.push_back(vocab.times());
    } else {
      throw IoError(std::string("problem import: unexpected character '") + c + "'");
    }
  }
  return expr;
}

}  // namespace

void export_problems_jsonl(const std::vector<Problem>& problems, const Vocabulary& vocab,
                           std::ostream& out) {
  for (const Problem& p : problems) {
    json j;
    j["id"] = p.id;
    j["expression"] = vocab.render(p.expression);
    j["ground_truth"] = p.ground_truth;
    out << j.dump() << "\n";
  }
}

std::vector<Problem> import_problems_jsonl(std::istream& in, const Vocabulary& vocab) {
  std::vector<Problem> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(std::string("problem import: ") + e.what());
    }
    Problem p;
    p.id = j.at("id").get<int>();
    p.expression = parse_expression_string(vocab, j.at("expression").get<std::string>());
    p.ground_truth = j.at("ground_truth").get<long long>();
    const long long check = evaluate_expression(vocab, p.expression);
    if (check != p.ground_truth) {
      throw IoError("problem import: ground_truth mismatch for id " + std::to_string(p.id));
    }
    p.prompt = make_prompt(vocab, p.expression);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace divgrpo
