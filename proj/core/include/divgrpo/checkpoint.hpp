#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include "divgrpo/policy.hpp"

namespace divgrpo {

// Versioned JSON checkpoint: backend tag, hyperparameters, vocabulary hash,
// flat parameter array. Loading validates the vocabulary hash.
void save_checkpoint(const Policy& policy, std::ostream& out);
void save_checkpoint_file(const Policy& policy, const std::string& path);

std::unique_ptr<Policy> load_checkpoint(std::istream& in, const Vocabulary& vocab);
std::unique_ptr<Policy> load_checkpoint_file(const std::string& path, const Vocabulary& vocab);

}  // namespace divgrpo
