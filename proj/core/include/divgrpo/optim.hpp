#pragma once

#include <string>
#include <vector>

#include "divgrpo/array.hpp"

namespace divgrpo {

struct OptimizerConfig {
  std::string kind = "adamw";  // "adamw" | "sgd"
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Gradient-ascent optimizer (the objective is maximized). AdamW applies
// decoupled weight decay; sgd is plain ascent with the same decay term.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const std::vector<Array*>& params);

  // params must match the construction shapes; lr_scale multiplies the base
  // learning rate (cosine schedule hook).
  void step_ascent(const std::vector<Array*>& params, const std::vector<Array>& gradients,
                   double lr_scale = 1.0);

  long long steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Array> m_;
  std::vector<Array> v_;
  long long t_ = 0;
};

}  // namespace divgrpo
