#pragma once

#include <stdexcept>
#include <string>

namespace divgrpo {

// Shape-incompatible operands at graph construction time.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Math domain violation (log of non-positive, division by zero).
// Messages carry the offending flat index.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Caller broke a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Non-finite value surfaced where a finite one is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Enumeration or allocation budget exceeded.
struct SizeError : std::length_error {
  using std::length_error::length_error;
};

// File or serialization failure, including checkpoint/vocabulary mismatches.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace divgrpo
