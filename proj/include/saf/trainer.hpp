#pragma once

// Joint training loop: source supervision, the backbone's adversarial loss
// through the gradient reversal layer, and SAF supervision on mixed target
// features, all in one backward pass per step.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "saf/config.hpp"
#include "saf/data.hpp"
#include "saf/network.hpp"

namespace saf {

/// max * tanh(10 t / T), with t clamped to T.
double lambda_d_schedule(std::size_t t, std::size_t total, double max);
/// max * tanh(5 t / T), with t clamped to T.
double lambda_m_schedule(std::size_t t, std::size_t total, double max);

/// base * (1 + alpha t / T)^(-power), with t clamped to T.
double learning_rate_schedule(std::size_t t, std::size_t total, double base, double alpha,
                              double power);

struct MetricsRecord {
  std::size_t iteration = 0;
  double eps_c = 0.0;
  double eps_d = 0.0;
  double eps_m = 0.0;
  double lambda_d = 0.0;
  double lambda_m = 0.0;
  double src_acc = 0.0;
  double tgt_acc = 0.0;
  double tgt_entropy = 0.0;
  /// NaN for the dann backbone, whose adversary is not a class predictor.
  double mdd_est = 0.0;
  double h_div = 0.0;
};

struct StepResult {
  double eps_c = 0.0;
  double eps_d = 0.0;
  double eps_m = 0.0;
  double lambda_d = 0.0;
  double lambda_m = 0.0;
  std::size_t mixed_pairs = 0;
};

/// Independent random streams of one run, so that switching one component
/// off leaves the draws of every other component unchanged.
struct TrainRngs {
  Rng init;
  Rng dropout;
  Rng adversary_dropout;
  Rng saf_dropout;
  Rng mixup;
  std::uint64_t source_loader_seed = 0;
  std::uint64_t target_loader_seed = 0;

  static TrainRngs from_seed(std::uint64_t seed);
};

struct Objective {
  Tensor total;
  Tensor eps_c;
  Tensor eps_d;
  Tensor eps_m;  // invalid when SAF is off
  /// Target pseudo-labels the SAF pass used; empty when SAF is off.
  Matrix pseudo_labels;
  StepResult summary;
};

/// Records eps_C + eps_D + lambda_M * eps_M for iteration t on `tape`
/// without touching parameters. With update_stats false the batch-norm
/// running statistics are left alone, which makes repeated evaluations with
/// copied rngs bitwise reproducible. Given `pseudo_labels`, the SAF pass
/// uses them instead of the classifier's current predictions.
Objective build_objective(ModelBundle& bundle, const Batch& src, const Batch& tgt,
                          const TrainConfig& config, std::size_t t, TrainRngs& rngs, Tape& tape,
                          bool update_stats = true, const Matrix* pseudo_labels = nullptr);

/// One optimisation step at iteration t (0-based). `src` must carry labels;
/// labels on `tgt` are never read.
StepResult train_step(ModelBundle& bundle, const Batch& src, const Batch& tgt,
                      const TrainConfig& config, std::size_t t, TrainRngs& rngs);

/// Eval-mode metrics on labelled source and target sets. The eps and lambda
/// fields are left at zero for the caller to fill.
MetricsRecord evaluate(ModelBundle& bundle, const Batch& src_eval, const Batch& tgt_eval,
                       const TrainConfig& config);

struct Domains {
  Batch source;
  Batch target;
};

/// Synthetic generation (source untransformed, target transformed, same seed)
/// or the configured CSV files.
Domains load_domains(const TrainConfig& config);

struct RunResult {
  std::vector<MetricsRecord> records;
  std::string run_dir;
  std::string metrics_path;
  std::string model_path;
};

/// Trains for config.iterations steps, evaluating after every eval_every
/// steps (and after the last), and writes config.cfg, metrics.csv and
/// model.txt into run_dir. An empty run_dir keeps everything in memory.
RunResult run_experiment(const TrainConfig& config, const Domains& domains,
                         const std::string& run_dir);
RunResult run_experiment(const TrainConfig& config, const std::string& run_dir);

inline constexpr const char* kMetricsHeader =
    "iter,eps_c,eps_d,eps_m,lambda_d,lambda_m,src_acc,tgt_acc,tgt_entropy,mdd_est,h_div";

std::string format_metrics_row(const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

}  // namespace saf
