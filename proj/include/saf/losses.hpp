#pragma once

// Training losses (differentiable, on the tape) and evaluation metrics
// (plain values).

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "saf/autodiff.hpp"

namespace saf {

/// Margin threshold rho and the MDD source-term weight gamma = exp(rho).
struct MarginParams {
  double rho = 0.0;
  double gamma = 1.0;

  static MarginParams from_gamma(double gamma);
  static MarginParams from_rho(double rho);
};

/// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean over rows of -sum_y Y_y log softmax(X)_y for distribution-valued
/// labels. Soft labels may carry gradient (the mixup weight flows through
/// them). Rows of `soft_labels` must sum to 1 within 1e-6.
Tensor cross_entropy_divergence(const Tensor& logits, const Tensor& soft_labels);

/// Two-way domain classification loss: label 0 for source rows, 1 for target
/// rows, averaged over all rows.
Tensor dann_domain_loss(const Tensor& d_logits_src, const Tensor& d_logits_tgt);

/// MDD adversarial loss with pseudo-labels y = argmax of C's logits (no
/// gradient through them):
///   mean_T[-log(1 - softmax(D)_y)] + gamma * mean_S[-log softmax(D)_y]
Tensor mdd_adversarial_loss(const Tensor& c_logits_src, const Tensor& d_logits_src,
                            const Tensor& c_logits_tgt, const Tensor& d_logits_tgt,
                            const MarginParams& params);

/// Half the gap between the exemplar's probability and the best other class.
double margin(std::span<const double> probs, int exemplar);

/// 1 below zero, linear ramp 1 - rho/threshold on [0, threshold], 0 above.
double margin_loss(double rho_val, double rho_threshold);

/// Mean margin loss of C with respect to the labels predicted by C'.
double empirical_margin_disparity(const Matrix& probs_c, const Matrix& probs_cprime,
                                  double rho_threshold);

/// 2 * (delta_src - delta_tgt), using the trained adversary as the inner
/// maximiser; a lower bound on the true discrepancy.
double empirical_mdd_estimate(double delta_src, double delta_tgt);

/// Per-row entropy -sum p log p with 0 log 0 = 0.
std::vector<double> conditional_entropy(const Matrix& probs);

/// Maps a sample to a domain label: 0 = source, 1 = target.
using Hypothesis = std::function<int(std::span<const double>)>;

/// 2 * (1 - min_h [ |{x in S : h(x) = 0}| / |S| + |{x in T : h(x) = 1}| / |T| ])
/// by exhaustive enumeration over `hypotheses`.
double empirical_h_divergence(const Matrix& src, const Matrix& tgt,
                              std::span<const Hypothesis> hypotheses);

/// Threshold stump: predicts target when (x[axis] > threshold) == positive.
struct Stump {
  std::size_t axis = 0;
  double threshold = 0.0;
  bool positive = true;

  int operator()(std::span<const double> x) const {
    return (x[axis] > threshold) == positive ? 1 : 0;
  }
};

/// Axis-aligned stumps, both polarities, on `grid` evenly spaced thresholds
/// spanning [min, max] of the pooled data along each axis.
std::vector<Stump> default_stumps(const Matrix& src, const Matrix& tgt, std::size_t grid = 64);

/// empirical_h_divergence over default_stumps.
double empirical_h_divergence(const Matrix& src, const Matrix& tgt, std::size_t grid = 64);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Matrix& logits, std::span<const int> labels);

}  // namespace saf
