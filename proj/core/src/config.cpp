#include "divgrpo/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

namespace divgrpo {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw IoError("config: bad numeric value for " + key + ": '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw IoError("config: bad integer value for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw IoError("config: bad boolean value for " + key + ": '" + v + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto add_int = [&f](const char* key, auto member) {
      f.push_back({key, [member](const RunConfig& c) { return std::to_string(std::invoke(member, c)); },
                   [member, key = std::string(key)](RunConfig& c, const std::string& v) {
                     std::invoke(member, c) = static_cast<int>(parse_int(key, v));
                   }});
    };
    auto add_u64 = [&f](const char* key, auto member) {
      f.push_back({key, [member](const RunConfig& c) { return std::to_string(std::invoke(member, c)); },
                   [member, key = std::string(key)](RunConfig& c, const std::string& v) {
                     std::invoke(member, c) = static_cast<uint64_t>(parse_int(key, v));
                   }});
    };
    auto add_double = [&f](const char* key, auto member) {
      f.push_back({key, [member](const RunConfig& c) { return fmt_double(std::invoke(member, c)); },
                   [member, key = std::string(key)](RunConfig& c, const std::string& v) {
                     std::invoke(member, c) = parse_double(key, v);
                   }});
    };
    auto add_string = [&f](const char* key, auto member) {
      f.push_back({key, [member](const RunConfig& c) { return std::invoke(member, c); },
                   [member](RunConfig& c, const std::string& v) { std::invoke(member, c) = v; }});
    };
    auto add_bool = [&f](const char* key, auto member) {
      f.push_back({key,
                   [member](const RunConfig& c) {
                     return std::invoke(member, c) ? std::string("true") : std::string("false");
                   },
                   [member, key = std::string(key)](RunConfig& c, const std::string& v) {
                     std::invoke(member, c) = parse_bool(key, v);
                   }});
    };

    add_u64("seed", &RunConfig::seed);
    add_int("task.difficulty", [](auto& c) -> auto& { return c.task.difficulty; });
    add_int("task.train_problems", [](auto& c) -> auto& { return c.task.train_problems; });
    add_int("task.probe_problems", [](auto& c) -> auto& { return c.task.probe_problems; });
    add_int("task.max_len", [](auto& c) -> auto& { return c.task.max_len; });
    add_string("policy.backend", [](auto& c) -> auto& { return c.policy.backend; });
    add_int("policy.embed", [](auto& c) -> auto& { return c.policy.embed; });
    add_int("policy.window", [](auto& c) -> auto& { return c.policy.window; });
    add_int("policy.hidden", [](auto& c) -> auto& { return c.policy.hidden; });
    add_int("policy.context_order", [](auto& c) -> auto& { return c.policy.context_order; });
    add_u64("policy.init_seed", [](auto& c) -> auto& { return c.policy.init_seed; });
    add_double("objective.clip_epsilon", [](auto& c) -> auto& { return c.objective.clip_epsilon; });
    add_double("objective.kl_beta", [](auto& c) -> auto& { return c.objective.kl_beta; });
    add_double("objective.diversity_weight",
               [](auto& c) -> auto& { return c.objective.diversity_weight; });
    add_string("objective.gating", [](auto& c) -> auto& { return c.objective.gating; });
    add_bool("objective.sequence_level_ratio",
             [](auto& c) -> auto& { return c.objective.sequence_level_ratio; });
    add_string("optimizer.kind", [](auto& c) -> auto& { return c.optimizer.kind; });
    add_double("optimizer.lr", [](auto& c) -> auto& { return c.optimizer.lr; });
    add_double("optimizer.weight_decay", [](auto& c) -> auto& { return c.optimizer.weight_decay; });
    add_double("optimizer.beta1", [](auto& c) -> auto& { return c.optimizer.beta1; });
    add_double("optimizer.beta2", [](auto& c) -> auto& { return c.optimizer.beta2; });
    add_double("optimizer.eps", [](auto& c) -> auto& { return c.optimizer.eps; });
    add_string("optimizer.lr_schedule", [](auto& c) -> auto& { return c.optimizer.lr_schedule; });
    add_int("schedule.steps", [](auto& c) -> auto& { return c.schedule.steps; });
    add_int("schedule.prompts_per_step",
            [](auto& c) -> auto& { return c.schedule.prompts_per_step; });
    add_int("schedule.group_size", [](auto& c) -> auto& { return c.schedule.group_size; });
    add_double("schedule.temperature", [](auto& c) -> auto& { return c.schedule.temperature; });
    add_int("eval.k", [](auto& c) -> auto& { return c.eval.k; });
    add_int("eval.eval_every", [](auto& c) -> auto& { return c.eval.eval_every; });
    add_string("eval.metrics", [](auto& c) -> auto& { return c.eval.metrics; });
    add_string("io.output_dir", [](auto& c) -> auto& { return c.io.output_dir; });
    add_bool("io.dump_rollouts", [](auto& c) -> auto& { return c.io.dump_rollouts; });
    add_int("io.checkpoint_every", [](auto& c) -> auto& { return c.io.checkpoint_every; });
    return f;
  }();
  return table;
}

}  // namespace

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  if (name == "toy") return c;
  if (name == "paper") {
    c.optimizer.lr = 3e-6;
    c.optimizer.lr_schedule = "cosine";
    c.objective.kl_beta = 1e-4;
    c.objective.diversity_weight = 0.01;
    c.objective.gating = "positive_only";
    c.schedule.group_size = 6;
    c.schedule.temperature = 0.9;
    c.eval.k = 16;
    return c;
  }
  throw ContractError("RunConfig::preset: unknown preset '" + name + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError("config: line " + std::to_string(lineno) + " has no '='");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const Field& f : fields()) {
      if (f.key == key) {
        f.set(c, value);
        found = true;
        break;
      }
    }
    if (!found) throw IoError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string RunConfig::render() const {
  std::string out;
  for (const Field& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(*this);
    out += "\n";
  }
  return out;
}

void RunConfig::validate() const {
  if (task.difficulty < 1 || task.difficulty > 3) throw ContractError("config: difficulty must be 1..3");
  if (task.train_problems < 1) throw ContractError("config: train_problems must be >= 1");
  if (task.probe_problems < 1) throw ContractError("config: probe_problems must be >= 1");
  if (task.max_len < 1) throw ContractError("config: max_len must be >= 1");
  if (policy.backend != "neural" && policy.backend != "tabular") {
    throw ContractError("config: policy.backend must be neural or tabular");
  }
  if (optimizer.kind != "adamw" && optimizer.kind != "sgd") {
    throw ContractError("config: optimizer.kind must be adamw or sgd");
  }
  if (optimizer.lr_schedule != "constant" && optimizer.lr_schedule != "cosine") {
    throw ContractError("config: optimizer.lr_schedule must be constant or cosine");
  }
  if (schedule.steps < 0) throw ContractError("config: steps must be >= 0");
  if (schedule.prompts_per_step < 1) throw ContractError("config: prompts_per_step must be >= 1");
  if (schedule.group_size < 2) throw ContractError("config: group_size must be >= 2");
  if (!(schedule.temperature > 0)) throw ContractError("config: temperature must be > 0");
  if (eval.k < 1) throw ContractError("config: eval.k must be >= 1");
  if (eval.eval_every < 1) throw ContractError("config: eval_every must be >= 1");
  if (eval.metrics != "all" && eval.metrics != "basic") {
    throw ContractError("config: eval.metrics must be all or basic");
  }
  if (io.checkpoint_every < 1) throw ContractError("config: checkpoint_every must be >= 1");
  gating_mode();
  objective_config().validate();
}

GatingMode RunConfig::gating_mode() const {
  if (objective.gating == "positive_only") return GatingMode::positive_only;
  if (objective.gating == "all_samples") return GatingMode::all_samples;
  if (objective.gating == "off") return GatingMode::off;
  throw ContractError("config: unknown gating mode '" + objective.gating + "'");
}

ObjectiveConfig RunConfig::objective_config() const {
  ObjectiveConfig c;
  c.clip_epsilon = objective.clip_epsilon;
  c.kl_beta = objective.kl_beta;
  c.diversity_weight = objective.diversity_weight;
  c.gating = gating_mode();
  c.sequence_level_ratio = objective.sequence_level_ratio;
  return c;
}

uint64_t RunConfig::config_hash() const {
  const std::string text = render();
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace divgrpo
