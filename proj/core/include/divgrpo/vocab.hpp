#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "divgrpo/errors.hpp"

namespace divgrpo {

using TokenId = int;

// Fixed symbol table. Ids are dense 0..size-1 and EOS appears exactly once.
class Vocabulary {
 public:
  // Symbol table for the micro-math task:
  // digits 0-9, operators + - *, '=', ';', boxed-answer markers, BOS, EOS.
  static Vocabulary micro_math();

  // Tiny table for enumeration and sampling oracles: n generic tokens
  // t0..t(n-1) plus BOS and EOS appended at the end.
  static Vocabulary generic(int n_generic);

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(TokenId id) const;
  bool contains(TokenId id) const { return id >= 0 && id < size(); }
  void require(TokenId id) const;

  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  TokenId box_open() const { return box_open_; }
  TokenId box_close() const { return box_close_; }
  TokenId equals() const { return equals_; }
  TokenId separator() const { return separator_; }
  TokenId plus() const { return plus_; }
  TokenId minus() const { return minus_; }
  TokenId times() const { return times_; }

  bool is_digit(TokenId id) const { return id >= digit0_ && id < digit0_ + 10 && digit0_ >= 0; }
  int digit_value(TokenId id) const { return id - digit0_; }
  TokenId digit(int value) const;
  bool is_operator(TokenId id) const { return id == plus_ || id == minus_ || id == times_; }

  bool has_math_symbols() const { return digit0_ >= 0; }

  // FNV-1a over the symbol list; used to bind checkpoints to a vocabulary.
  uint64_t hash() const;

  // Renders a token span by concatenating symbols (digits/operators join
  // without spacing, which is what equation extraction canonicalizes on).
  std::string render(const std::vector<TokenId>& tokens) const;

 private:
  std::vector<std::string> symbols_;
  TokenId bos_ = -1, eos_ = -1;
  TokenId box_open_ = -1, box_close_ = -1, equals_ = -1, separator_ = -1;
  TokenId plus_ = -1, minus_ = -1, times_ = -1;
  TokenId digit0_ = -1;
};

}  // namespace divgrpo
