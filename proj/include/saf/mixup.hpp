#pragma once

// SAF-mixup: random pairing of target features, adaptive mixup weights from
// the SAF module, and mixed pseudo-labels; plus the ablation policies
// (Beta-distributed or constant weights, entropy filtering, source pooling).

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "saf/autodiff.hpp"
#include "saf/config.hpp"
#include "saf/network.hpp"

namespace saf {

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Uniformly random perfect matching of 0..n-1 drawn without replacement.
/// With odd n the leftover index is paired with itself.
std::vector<IndexPair> random_draw_pairs(std::size_t n, Rng& rng);

/// Output of one mixup pass. `features` and `soft_labels` live on the tape
/// of the input features; both are invalid handles when no rows survived.
struct MixedBatch {
  Tensor features;
  Tensor soft_labels;
  std::vector<double> etas;
  /// Indices into the pooled rows (filtered target rows, then source rows).
  std::vector<IndexPair> pairs;
  /// Pseudo-label distributions of every target row, before filtering.
  Matrix target_probs;

  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
};

/// Labelled source rows to pool with the target rows (the "feed source into
/// SAF" variant). Features must live on the same tape as the target rows.
struct SourcePool {
  Tensor features;
  std::span<const int> labels;
};

/// Builds the mixed batch from target features (taken after F, or after B
/// when the bundle is configured with SafPosition::bottleneck).
///
/// Pseudo-labels are eval-mode softmax predictions of the classifier and carry
/// no gradient. In saf mode eta comes from saf_weight and the gradient flows
/// into both the mixed features and the mixed labels through eta; in beta and
/// constant modes eta is a constant. `pseudo_labels`, when given, replaces the
/// classifier's predictions (one row per target row).
MixedBatch saf_mixup_batch(ModelBundle& bundle, const Tensor& target_features,
                           const MixupPolicy& policy, Rng& rng,
                           const std::optional<SourcePool>& source = std::nullopt,
                           const Matrix* pseudo_labels = nullptr);

/// Cross-entropy divergence of the classifier on the mixed features against
/// the mixed soft labels. An empty batch yields a constant zero.
Tensor saf_supervision_loss(ModelBundle& bundle, const MixedBatch& mixed, Tape& tape,
                            const ForwardMode& mode);

}  // namespace saf
