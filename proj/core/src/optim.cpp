#include "divgrpo/optim.hpp"

#include <cmath>

namespace divgrpo {

Optimizer::Optimizer(OptimizerConfig config, const std::vector<Array*>& params)
    : cfg_(std::move(config)) {
  if (cfg_.kind != "adamw" && cfg_.kind != "sgd") {
    throw ContractError("Optimizer: unknown kind '" + cfg_.kind + "'");
  }
  for (const Array* p : params) {
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

void Optimizer::step_ascent(const std::vector<Array*>& params,
                            const std::vector<Array>& gradients, double lr_scale) {
  if (params.size() != m_.size() || gradients.size() != m_.size()) {
    throw ContractError("Optimizer: parameter/gradient count mismatch");
  }
  const double lr = cfg_.lr * lr_scale;
  ++t_;
  for (size_t p = 0; p < params.size(); ++p) {
    Array& theta = *params[p];
    const Array& g = gradients[p];
    if (!theta.same_shape(g)) throw ContractError("Optimizer: gradient shape mismatch");
    if (cfg_.kind == "sgd") {
      for (int i = 0; i < theta.size(); ++i) {
        theta[i] += lr * g[i] - lr * cfg_.weight_decay * theta[i];
      }
      continue;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (int i = 0; i < theta.size(); ++i) {
      m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
      v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[p][i] / bc1;
      const double vhat = v_[p][i] / bc2;
      theta[i] += lr * mhat / (std::sqrt(vhat) + cfg_.eps) - lr * cfg_.weight_decay * theta[i];
    }
  }
}

}  // namespace divgrpo
