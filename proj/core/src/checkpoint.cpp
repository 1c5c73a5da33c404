#include "divgrpo/checkpoint.hpp"

#include <fstream>

#include "divgrpo/json.hpp"

namespace divgrpo {

namespace {

constexpr int kFormatVersion = 1;

std::string hash_hex(uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void save_checkpoint(const Policy& policy, std::ostream& out) {
  json j;
  j["format_version"] = kFormatVersion;
  j["backend"] = policy.backend_name();
  j["vocab_hash"] = hash_hex(policy.vocab().hash());
  json hp;
  if (const auto* tab = dynamic_cast<const TabularPolicy*>(&policy)) {
    hp["context_order"] = tab->context_order();
  } else if (const auto* net = dynamic_cast<const NeuralPolicy*>(&policy)) {
    hp["embed"] = net->dims().embed;
    hp["window"] = net->dims().window;
    hp["hidden"] = net->dims().hidden;
  } else {
    throw IoError("save_checkpoint: unknown policy backend");
  }
  j["hyperparams"] = hp;
  std::vector<double> flat;
  for (const Array* p : policy.params()) {
    flat.insert(flat.end(), p->flat().begin(), p->flat().end());
  }
  j["params"] = flat;
  out << j.dump() << "\n";
}

void save_checkpoint_file(const Policy& policy, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  save_checkpoint(policy, out);
  out.flush();
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

std::unique_ptr<Policy> load_checkpoint(std::istream& in, const Vocabulary& vocab) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("load_checkpoint: ") + e.what());
  }
  if (j.at("format_version").get<int>() != kFormatVersion) {
    throw IoError("load_checkpoint: unsupported format version");
  }
  if (j.at("vocab_hash").get<std::string>() != hash_hex(vocab.hash())) {
    throw IoError("load_checkpoint: vocabulary hash mismatch");
  }
  const std::string backend = j.at("backend").get<std::string>();
  const json& hp = j.at("hyperparams");
  std::unique_ptr<Policy> policy;
  if (backend == "tabular") {
    policy = std::make_unique<TabularPolicy>(vocab, hp.at("context_order").get<int>());
  } else if (backend == "neural") {
    NeuralPolicy::Dims dims;
    dims.embed = hp.at("embed").get<int>();
    dims.window = hp.at("window").get<int>();
    dims.hidden = hp.at("hidden").get<int>();
    policy = std::make_unique<NeuralPolicy>(vocab, dims, 0);
  } else {
    throw IoError("load_checkpoint: unknown backend '" + backend + "'");
  }
  const std::vector<double> flat = j.at("params").get<std::vector<double>>();
  size_t offset = 0;
  for (Array* p : policy->params()) {
    if (offset + p->size() > flat.size()) {
      throw IoError("load_checkpoint: parameter array too short");
    }
    for (int i = 0; i < p->size(); ++i) (*p)[i] = flat[offset + i];
    offset += p->size();
  }
  if (offset != flat.size()) throw IoError("load_checkpoint: parameter array too long");
  return policy;
}

std::unique_ptr<Policy> load_checkpoint_file(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  return load_checkpoint(in, vocab);
}

}  // namespace divgrpo
