#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "divgrpo/rng.hpp"
#include "divgrpo/tasks.hpp"

using namespace divgrpo;

namespace {

const Vocabulary& voc() {
  static Vocabulary v = Vocabulary::micro_math();
  return v;
}

std::vector<TokenId> expr_tokens(const std::string& s) {
  const Vocabulary& v = voc();
  std::vector<TokenId> out;
  for (char c : s) {
    if (c >= '0' && c <= '9') out.push_back(v.digit(c - '0'));
    else if (c == '+') out.push_back(v.plus());
    else if (c == '-') out.push_back(v.minus());
    else if (c == '*') out.push_back(v.times());
    else if (c == '=') out.push_back(v.equals());
    else if (c == ';') out.push_back(v.separator());
    else if (c == '[') out.push_back(v.box_open());
    else if (c == ']') out.push_back(v.box_close());
    else if (c == 'E') out.push_back(v.eos());
    else FAIL("bad test literal char");
  }
  return out;
}

// Independent oracle: recursive-descent evaluation of the rendered string
// (expr := term ((+|-) term)*; term := digit (* digit)*).
long long oracle_eval(const std::string& s, size_t& i);

long long oracle_term(const std::string& s, size_t& i) {
  long long v = s[i++] - '0';
  while (i < s.size() && s[i] == '*') {
    ++i;
    v *= s[i++] - '0';
  }
  return v;
}

long long oracle_eval(const std::string& s, size_t& i) {
  long long v = oracle_term(s, i);
  while (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    const char op = s[i++];
    const long long rhs = oracle_term(s, i);
    v = (op == '+') ? v + rhs : v - rhs;
  }
  return v;
}

long long oracle(const std::string& s) {
  size_t i = 0;
  return oracle_eval(s, i);
}

Problem problem_for(const std::string& expr) {
  Problem p;
  p.expression = expr_tokens(expr);
  p.ground_truth = evaluate_expression(voc(), p.expression);
  return p;
}

}  // namespace

TEST_CASE("evaluate_expression follows standard precedence") {
  CHECK(evaluate_expression(voc(), expr_tokens("3+5*2")) == 13);
  CHECK(evaluate_expression(voc(), expr_tokens("0-9*9")) == -81);
  CHECK(evaluate_expression(voc(), expr_tokens("7")) == 7);
  CHECK_THROWS_AS(evaluate_expression(voc(), expr_tokens("3+")), ContractError);
}

TEST_CASE("evaluator agrees with an independent interpreter on 10^4 expressions") {
  Rng rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const int difficulty = 1 + rng.below(3);
    std::string s = std::string(1, char('0' + rng.below(10)));
    for (int k = 0; k < difficulty; ++k) {
      s += "+-*"[rng.below(3)];
      s += char('0' + rng.below(10));
    }
    CHECK(evaluate_expression(voc(), expr_tokens(s)) == oracle(s));
  }
}

TEST_CASE("generate_problems: deterministic, difficulty-shaped, unique, bounded") {
  auto a = generate_problems(voc(), 10, 2, 42);
  auto b = generate_problems(voc(), 10, 2, 42);
  REQUIRE(a.size() == 10);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].expression == b[i].expression);
    CHECK(a[i].ground_truth == b[i].ground_truth);
  }

  auto d1 = generate_problems(voc(), 50, 1, 7);
  std::set<std::string> seen;
  for (const auto& p : d1) {
    CHECK(p.expression.size() == 3);  // digit op digit
    CHECK(std::llabs(p.ground_truth) < 10000);
    seen.insert(voc().render(p.expression));
    // Prompt framing: BOS + expression + separator.
    REQUIRE(p.prompt.size() == p.expression.size() + 2);
    CHECK(p.prompt.front() == voc().bos());
    CHECK(p.prompt.back() == voc().separator());
  }
  CHECK(seen.size() == d1.size());

  auto d3 = generate_problems(voc(), 20, 3, 7);
  for (const auto& p : d3) CHECK(p.expression.size() == 7);
}

TEST_CASE("score_response: boxed answers") {
  Problem p = problem_for("3+5*2");
  REQUIRE(p.ground_truth == 13);

  SUBCASE("correct boxed answer scores 1 / 1 / 1.2") {
    auto r = score_response(p, expr_tokens("3+5=8;[13]E"), voc());
    CHECK(r.accuracy == 1);
    CHECK(r.format == 1);
    CHECK(r.total == doctest::Approx(1.2));
  }
  SUBCASE("no box markers scores 0 / 0 / 0") {
    auto r = score_response(p, expr_tokens("13E"), voc());
    CHECK(r.accuracy == 0);
    CHECK(r.format == 0);
    CHECK(r.total == 0.0);
  }
  SUBCASE("two boxed spans fail format even when the first is correct") {
    auto r = score_response(p, expr_tokens("[13][13]E"), voc());
    CHECK(r.format == 0);
    CHECK(r.accuracy == 0);
  }
  SUBCASE("wrong value keeps format") {
    auto r = score_response(p, expr_tokens("[16]E"), voc());
    CHECK(r.format == 1);
    CHECK(r.accuracy == 0);
    CHECK(r.total == doctest::Approx(0.2));
  }
  SUBCASE("negative boxed value") {
    Problem q = problem_for("0-5");
    auto r = score_response(q, expr_tokens("[-5]E"), voc());
    CHECK(r.accuracy == 1);
  }
  SUBCASE("empty interior, stray minus, or non-digit interior fail") {
    CHECK(score_response(p, expr_tokens("[]E"), voc()).format == 0);
    CHECK(score_response(p, expr_tokens("[-]E"), voc()).format == 0);
    CHECK(score_response(p, expr_tokens("[1+3]E"), voc()).format == 0);
  }
  SUBCASE("span must close before EOS") {
    CHECK(score_response(p, expr_tokens("[13E]"), voc()).format == 0);
    // No EOS at all: the whole response is eligible.
    CHECK(score_response(p, expr_tokens("[13]"), voc()).format == 1);
  }
}

TEST_CASE("accuracy never exceeds format on random token soup") {
  Problem p = problem_for("2*3");
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    std::vector<TokenId> resp;
    const int len = 1 + rng.below(14);
    for (int k = 0; k < len; ++k) resp.push_back(rng.below(voc().size()));
    auto r = score_response(p, resp, voc());
    CHECK(r.accuracy <= r.format);
    CHECK(r.total == doctest::Approx(r.accuracy + 0.2 * r.format));
  }
}

TEST_CASE("extract_equations: spans, order, duplicates") {
  auto eqs = extract_equations(expr_tokens("3+5=8;8*2=16E"), voc());
  REQUIRE(eqs.size() == 2);
  CHECK(eqs[0] == "3+5=8");
  CHECK(eqs[1] == "8*2=16");

  CHECK(extract_equations(expr_tokens("3+5;28E"), voc()).empty());

  auto dup = extract_equations(expr_tokens("1+1=2;1+1=2E"), voc());
  REQUIRE(dup.size() == 2);
  CHECK(dup[0] == "1+1=2");
  CHECK(dup[1] == "1+1=2");
}

TEST_CASE("extract_equations: malformed neighborhoods and outside noise") {
  // '=' without digits on a side contributes nothing.
  CHECK(extract_equations(expr_tokens("=5E"), voc()).empty());
  CHECK(extract_equations(expr_tokens("5=E"), voc()).empty());
  CHECK(extract_equations(expr_tokens("+=5E"), voc()).empty());

  // Tokens outside matched spans do not affect the result.
  auto a = extract_equations(expr_tokens("12+3=15E"), voc());
  auto b = extract_equations(expr_tokens("[;12+3=15;]E"), voc());
  CHECK(a == b);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == "12+3=15");

  // Chained equals: each '=' is matched independently, spans may share digits.
  auto c = extract_equations(expr_tokens("3+5=8*2=16E"), voc());
  REQUIRE(c.size() == 2);
  CHECK(c[0] == "3+5=8");
  CHECK(c[1] == "8*2=16");
}

TEST_CASE("problem JSONL round-trip") {
  auto problems = generate_problems(voc(), 25, 2, 123);
  std::stringstream ss;
  export_problems_jsonl(problems, voc(), ss);
  auto back = import_problems_jsonl(ss, voc());
  REQUIRE(back.size() == problems.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == problems[i].id);
    CHECK(back[i].expression == problems[i].expression);
    CHECK(back[i].ground_truth == problems[i].ground_truth);
    CHECK(back[i].prompt == problems[i].prompt);
  }

  std::stringstream corrupt(R"({"id":0,"expression":"2+2","ground_truth":5})");
  CHECK_THROWS_AS(import_problems_jsonl(corrupt, voc()), IoError);
}
