#pragma once

// Hyperparameters for model construction, SAF-mixup and training, plus the
// flat sectioned `key = value` text format used for config files.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace saf {

enum class Backbone { dann, mdd };
enum class MixupMode { saf, beta, constant };
enum class EntropyFilter { none, only_uncertain, only_certain };
/// Where the SAF module taps features: after F (default) or after B, the
/// "no bottleneck" ordering F -> B -> M -> C.
enum class SafPosition { features, bottleneck };

std::string_view to_string(Backbone b);
std::string_view to_string(MixupMode m);
std::string_view to_string(EntropyFilter f);
std::string_view to_string(SafPosition p);

/// Layer widths for the desk-scale networks.
///   F: input -> feature_hidden -> feature_dim          (FC+ReLU, FC+ReLU)
///   B: feature_dim -> bottleneck_dim                  (FC, BN, ReLU, dropout)
///   C: bottleneck_dim -> classifier_hidden -> classes (FC, ReLU, dropout, FC)
///   D: same as C; 2 outputs for dann, num_classes for mdd
///   M: k x (saf_in -> saf_dim FC+ReLU), estimator saf_dim -> 1 FC+sigmoid
struct ModelConfig {
  std::size_t input_dim = 2;
  std::size_t feature_hidden = 64;
  std::size_t feature_dim = 32;
  std::size_t bottleneck_dim = 16;
  std::size_t classifier_hidden = 16;
  std::size_t num_classes = 2;
  std::size_t saf_dim = 16;
  std::size_t saf_bottlenecks = 2;
  double dropout = 0.5;
  SafPosition saf_position = SafPosition::features;

  void validate() const;
};

struct MixupPolicy {
  MixupMode mode = MixupMode::saf;
  double beta_alpha = 0.2;
  double constant_eta = 0.6;
  EntropyFilter entropy_filter = EntropyFilter::none;
  /// Unset means 0.5 * log(num_classes).
  std::optional<double> entropy_threshold;
  bool include_source = false;

  double threshold_for(std::size_t num_classes) const;
  void validate() const;
};

/// Where training data comes from: two CSV files, or a synthetic generator
/// producing an untransformed source domain and a transformed target domain.
struct DataConfig {
  std::string source_csv;
  std::string target_csv;
  std::string kind = "moons";  // moons | blobs
  std::size_t n_samples = 400;
  double noise = 0.15;
  double rotation = 35.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 0;

  bool synthetic() const { return source_csv.empty() && target_csv.empty(); }
  void validate() const;
};

struct TrainConfig {
  Backbone backbone = Backbone::mdd;
  std::size_t iterations = 3000;
  std::size_t batch_size = 32;
  double base_lr = 0.004;
  double momentum = 0.9;
  /// Learning rate base_lr * (1 + lr_decay_alpha * t / T)^(-lr_decay_power);
  /// the default alpha 0 keeps it constant.
  double lr_decay_alpha = 0.0;
  double lr_decay_power = 0.75;
  double lambda_d_max = 0.1;
  double lambda_m_max = 0.1;
  double margin_gamma = 4.0;
  bool saf_enabled = true;
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;

  ModelConfig model;
  MixupPolicy mixup;
  DataConfig data;

  void validate() const;
};

/// Parses the sectioned format. Unknown sections or keys, duplicate keys and
/// malformed values throw ConfigError naming the offending key and line.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::string& path);

/// Renders every key; parse_config(render_config(c)) reproduces c exactly.
/// With `documented`, each key carries a comment describing it.
std::string render_config(const TrainConfig& config, bool documented = false);

/// Applies a single `section.key = value` override (used by CLI flags).
void apply_override(TrainConfig& config, std::string_view section, std::string_view key,
                    std::string_view value);

}  // namespace saf
