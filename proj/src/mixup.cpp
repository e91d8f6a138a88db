#include "saf/mixup.hpp"

#include <algorithm>
#include <numeric>

#include "saf/errors.hpp"
#include "saf/losses.hpp"

namespace saf {

std::vector<IndexPair> random_draw_pairs(std::size_t n, Rng& rng) {
  if (n == 0) throw DataError("random_draw_pairs: nothing to pair");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<IndexPair> pairs;
  pairs.reserve((n + 1) / 2);
  for (std::size_t i = 0; i + 1 < n; i += 2) pairs.emplace_back(order[i], order[i + 1]);
  if (n % 2 == 1) pairs.emplace_back(order.back(), order.back());
  return pairs;
}

namespace {

// Beta(alpha, alpha) via two Gamma draws, kept strictly inside (0, 1).
double draw_beta(double alpha, Rng& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  double x = 0.0, y = 0.0;
  do {
    x = g(rng);
    y = g(rng);
  } while (x + y == 0.0);
  constexpr double kEdge = 1e-12;
  return std::clamp(x / (x + y), kEdge, 1.0 - kEdge);
}

// Eval-mode class probabilities for the pooled rows, computed off the
// training tape so nothing here receives gradient.
Matrix pseudo_label_probs(ModelBundle& bundle, const Matrix& features) {
  Tape scratch;
  Tensor x = scratch.constant(features);
  const ForwardMode eval = ForwardMode::eval();
  Tensor logits = bundle.dims.saf_position == SafPosition::features
                      ? classify(bundle, x, eval)
                      : classifier_head(bundle, x, eval);
  return softmax_values(logits.value());
}

}  // namespace

MixedBatch saf_mixup_batch(ModelBundle& bundle, const Tensor& target_features,
                           const MixupPolicy& policy, Rng& rng,
                           const std::optional<SourcePool>& source,
                           const Matrix* pseudo_labels) {
  policy.validate();
  const std::size_t width = bundle.M.input_width();
  if (target_features.cols() != width) {
    throw ShapeError("saf_mixup_batch: features " + shape_string(target_features.value()) +
                     " do not match SAF input width " + std::to_string(width));
  }
  Tape& tape = target_features.tape();
  const std::size_t k = bundle.dims.num_classes;

  if (pseudo_labels && (pseudo_labels->rows() != target_features.rows() || pseudo_labels->cols() != k)) {
    throw ShapeError("saf_mixup_batch: pseudo-labels " + shape_string(*pseudo_labels) +
                     " do not match " + std::to_string(target_features.rows()) + " target rows");
  }
  Matrix probs = pseudo_labels ? *pseudo_labels : pseudo_label_probs(bundle, target_features.value());

  std::vector<std::size_t> kept;
  if (policy.entropy_filter == EntropyFilter::none) {
    kept.resize(probs.rows());
    std::iota(kept.begin(), kept.end(), std::size_t{0});
  } else {
    const double threshold = policy.threshold_for(k);
    const std::vector<double> h = conditional_entropy(probs);
    for (std::size_t i = 0; i < h.size(); ++i) {
      const bool uncertain = h[i] >= threshold;
      if (uncertain == (policy.entropy_filter == EntropyFilter::only_uncertain)) kept.push_back(i);
    }
  }

  Tensor pool = kept.size() == probs.rows() ? target_features : gather_rows(target_features, kept);
  std::vector<std::vector<double>> pool_labels;
  pool_labels.reserve(kept.size());
  for (std::size_t i : kept) pool_labels.emplace_back(probs.row(i).begin(), probs.row(i).end());

  if (source) {
    if (source->features.cols() != width) {
      throw ShapeError("saf_mixup_batch: source features do not match SAF input width");
    }
    if (source->labels.size() != source->features.rows()) {
      throw ShapeError("saf_mixup_batch: source label count does not match source rows");
    }
    pool = kept.empty() ? source->features : concat_rows(pool, source->features);
    for (int y : source->labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= k) throw DataError("saf_mixup_batch: source label out of range");
      std::vector<double> one_hot(k, 0.0);
      one_hot[static_cast<std::size_t>(y)] = 1.0;
      pool_labels.push_back(std::move(one_hot));
    }
  }

  MixedBatch out;
  out.target_probs = std::move(probs);
  if (pool_labels.empty()) return out;

  out.pairs = random_draw_pairs(pool_labels.size(), rng);
  const std::size_t m = out.pairs.size();
  std::vector<std::size_t> first(m), second(m);
  Matrix y1(m, k), y2(m, k);
  for (std::size_t p = 0; p < m; ++p) {
    first[p] = out.pairs[p].first;
    second[p] = out.pairs[p].second;
    std::copy(pool_labels[first[p]].begin(), pool_labels[first[p]].end(), y1.row(p).begin());
    std::copy(pool_labels[second[p]].begin(), pool_labels[second[p]].end(), y2.row(p).begin());
  }
  Tensor phi1 = gather_rows(pool, first);
  Tensor phi2 = gather_rows(pool, second);

  Tensor eta;
  switch (policy.mode) {
    case MixupMode::saf:
      eta = saf_weight(bundle.M, phi1, phi2);
      break;
    case MixupMode::beta: {
      Matrix e(m, 1);
      for (std::size_t p = 0; p < m; ++p) e[p] = draw_beta(policy.beta_alpha, rng);
      eta = tape.constant(std::move(e));
      break;
    }
    case MixupMode::constant:
      eta = tape.constant(Matrix(m, 1, policy.constant_eta));
      break;
  }
  out.etas = eta.value().data();

  // eta * a + (1 - eta) * b written as b + eta * (a - b): equal parents give
  // the parent back exactly.
  out.features = add(phi2, mul_rows(eta, sub(phi1, phi2)));
  Tensor label2 = tape.constant(y2);
  out.soft_labels = add(label2, mul_rows(eta, sub(tape.constant(std::move(y1)), label2)));
  return out;
}

Tensor saf_supervision_loss(ModelBundle& bundle, const MixedBatch& mixed, Tape& tape,
                            const ForwardMode& mode) {
  if (mixed.empty()) return tape.constant(Matrix(1, 1, 0.0));
  Tensor logits = bundle.dims.saf_position == SafPosition::features
                      ? classify(bundle, mixed.features, mode)
                      : classifier_head(bundle, mixed.features, mode);
  return cross_entropy_divergence(logits, mixed.soft_labels);
}

}  // namespace saf
