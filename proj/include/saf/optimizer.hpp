#pragma once

#include <span>

#include "saf/autodiff.hpp"

namespace saf {

/// One SGD step with Nesterov momentum over `params`, each at learning rate
/// base_lr * lr_multiplier:
///   v <- momentum * v - lr * g
///   theta <- theta + momentum * v - lr * g
/// Gradients are cleared afterwards. Throws StateError if a parameter has no
/// gradient from the last backward pass.
void sgd_nesterov_step(std::span<Parameter* const> params, double base_lr, double momentum);

}  // namespace saf
