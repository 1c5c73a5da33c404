#include "divgrpo/vocab.hpp"

namespace divgrpo {

Vocabulary Vocabulary::micro_math() {
  Vocabulary v;
  for (int d = 0; d < 10; ++d) v.symbols_.push_back(std::string(1, char('0' + d)));
  v.digit0_ = 0;
  v.plus_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("+");
  v.minus_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("-");
  v.times_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("*");
  v.equals_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("=");
  v.separator_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back(";");
  v.box_open_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("[");
  v.box_close_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("]");
  v.bos_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("<s>");
  v.eos_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("</s>");
  return v;
}

Vocabulary Vocabulary::generic(int n_generic) {
  if (n_generic < 0) throw ContractError("Vocabulary::generic: negative token count");
  Vocabulary v;
  for (int i = 0; i < n_generic; ++i) v.symbols_.push_back("t" + std::to_string(i));
  v.bos_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("<s>");
  v.eos_ = static_cast<TokenId>(v.symbols_.size());
  v.symbols_.push_back("</s>");
  return v;
}

const std::string& Vocabulary::symbol(TokenId id) const {
  require(id);
  return symbols_[id];
}

void Vocabulary::require(TokenId id) const {
  if (!contains(id)) {
    throw ContractError("Vocabulary: token id " + std::to_string(id) + " outside 0.." +
                        std::to_string(size() - 1));
  }
}

TokenId Vocabulary::digit(int value) const {
  if (digit0_ < 0 || value < 0 || value > 9) {
    throw ContractError("Vocabulary::digit: no digit token for value " + std::to_string(value));
  }
  return digit0_ + value;
}

uint64_t Vocabulary::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ull;
  };
  for (const std::string& s : symbols_) {
    for (char c : s) mix(static_cast<unsigned char>(c));
    mix(0x1f);  // symbol separator
  }
  return h;
}

std::string Vocabulary::render(const std::vector<TokenId>& tokens) const {
  std::string out;
  for (TokenId id : tokens) out += symbol(id);
  return out;
}

}  // namespace divgrpo
