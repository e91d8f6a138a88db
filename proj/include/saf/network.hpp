#pragma once

// The five trainable blocks: feature extractor F, bottleneck B, classifier C,
// adversary D and the SAF module M = (S_1..S_k, S_eta).

#include <cstddef>
#include <string>
#include <vector>

#include "saf/autodiff.hpp"
#include "saf/config.hpp"

namespace saf {

enum class Activation { relu, sigmoid, none };

/// Per-layer description of a fully connected stack. Each layer is
/// FC -> [batch norm] -> activation -> [dropout].
struct MlpSpec {
  std::size_t input_width = 0;
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;
  std::vector<double> dropout_rates;
  std::vector<bool> batch_norm;

  void validate() const;
  std::size_t output_width() const { return widths.empty() ? input_width : widths.back(); }
};

/// How a forward pass behaves: dropout/batch-norm mode, the dropout stream,
/// whether training-mode batch norm updates its running statistics, and
/// whether it normalises with batch statistics at all (otherwise the running
/// statistics are used, with dropout still active).
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;
  bool update_stats = true;
  bool batch_stats = true;

  static ForwardMode eval() { return {}; }
  static ForwardMode train(Rng& rng, bool update_stats = true) { return {true, &rng, update_stats, true}; }
  /// Dropout on, batch norm frozen at its running statistics.
  static ForwardMode frozen_norm(Rng& rng) { return {true, &rng, false, false}; }
};

struct DenseLayer {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
  bool has_batch_norm = false;
  Parameter gamma;
  Parameter beta;
  BatchNormState bn;
  Activation activation = Activation::none;
  double dropout = 0.0;
};

class Mlp {
 public:
  Mlp() = default;
  /// He-uniform init for ReLU layers, Xavier-uniform otherwise; zero biases.
  Mlp(const std::string& name, MlpSpec spec, double lr_multiplier, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardMode& mode);

  std::size_t input_width() const { return spec_.input_width; }
  std::size_t output_width() const { return spec_.output_width(); }
  const MlpSpec& spec() const { return spec_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  void collect_parameters(std::vector<Parameter*>& out);

 private:
  std::string name_;
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

/// SAF module: k parallel bottlenecks S_i (FC+ReLU) and the weight estimator
/// S_eta (FC+sigmoid).
struct SafModule {
  std::vector<Mlp> bottlenecks;
  Mlp estimator;

  std::size_t input_width() const { return bottlenecks.front().input_width(); }
  void collect_parameters(std::vector<Parameter*>& out);
};

struct ModelBundle {
  Mlp F;
  Mlp B;
  Mlp C;
  Mlp D;
  SafModule M;
  Backbone backbone = Backbone::mdd;
  ModelConfig dims;

  /// All trainable parameters in a fixed order (F, B, C, D, M).
  std::vector<Parameter*> parameters();
  /// Parameters of one block: "F", "B", "C", "D" or "M".
  std::vector<Parameter*> block_parameters(const std::string& block);
};

/// Builds every block with matching seams. B, C and M train at 10x the base
/// learning rate; F and D at 1x.
ModelBundle build_bundle(const ModelConfig& dims, Backbone backbone, Rng& rng);
ModelBundle build_bundle(const TrainConfig& config, Rng& rng);

/// F(x) for a raw feature matrix.
Tensor forward_features(ModelBundle& bundle, Tape& tape, const Matrix& x, const ForwardMode& mode);
/// B(features).
Tensor bottleneck(ModelBundle& bundle, const Tensor& features, const ForwardMode& mode);
/// C(h) on bottleneck outputs.
Tensor classifier_head(ModelBundle& bundle, const Tensor& h, const ForwardMode& mode);
/// C(B(features)).
Tensor classify(ModelBundle& bundle, const Tensor& features, const ForwardMode& mode);
/// D(grad_reverse(B(features), lambda_d)): B sits on the extractor side of
/// the reversal. The B pass never updates running statistics; those follow
/// the classification path only.
Tensor adversary_logits(ModelBundle& bundle, const Tensor& features, double lambda_d,
                        const ForwardMode& mode);
/// eta = S_eta(sum of bottleneck outputs), one value per row pair (m x 1).
/// With k == 1 both inputs go through S_1; otherwise bottleneck i receives
/// phi1 when i is even and phi2 when i is odd (0-based).
Tensor saf_weight(SafModule& m, const Tensor& phi1, const Tensor& phi2);

/// Writes one record per parameter and batch-norm statistic:
/// `name rows cols v0 v1 ...` with 17 significant digits.
void save_bundle(const ModelBundle& bundle, const std::string& path);
/// Loads values into a bundle of identical architecture. Every record must
/// match an existing name and shape, and every parameter must be present.
void load_bundle(ModelBundle& bundle, const std::string& path);

}  // namespace saf
