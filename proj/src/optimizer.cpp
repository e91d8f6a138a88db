#include "saf/optimizer.hpp"

#include "saf/errors.hpp"

namespace saf {

void sgd_nesterov_step(std::span<Parameter* const> params, double base_lr, double momentum) {
  if (!(base_lr > 0.0)) throw ConfigError("sgd: base learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0, 1)");
  for (Parameter* p : params) {
    if (!p->has_grad) throw StateError("sgd: parameter " + p->name + " has no gradient");
  }
  for (Parameter* p : params) {
    const double lr = base_lr * p->lr_multiplier;
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double g = p->grad[k];
      p->velocity[k] = momentum * p->velocity[k] - lr * g;
      p->value[k] += momentum * p->velocity[k] - lr * g;
    }
    p->clear_grad();
  }
}

}  // namespace saf
