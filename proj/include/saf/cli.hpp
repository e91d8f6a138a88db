#pragma once

// The saf_lab command line: gen-data, train, eval, ablate, export-embeddings
// and --print-config. Exit status 0 on success, 1 on usage or configuration
// errors, 2 on runtime failures.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "saf/config.hpp"
#include "saf/trainer.hpp"

namespace saf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "3", "0..4" (inclusive) or "1,5,9".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// Worker count: SAF_LAB_THREADS if set and positive, else the hardware
/// concurrency, never more than `jobs`.
std::size_t worker_count(std::size_t jobs);

/// Runs fn(0..jobs-1) on worker threads. The first exception is rethrown
/// after all workers finish.
void parallel_for(std::size_t jobs, const std::function<void(std::size_t)>& fn);

struct SeedRun {
  std::uint64_t seed = 0;
  std::string run_dir;
  std::string metrics_path;
  std::string model_path;
  double final_tgt_acc = 0.0;
};

struct Aggregate {
  double mean = 0.0;
  /// Sample standard deviation; 0 for a single seed.
  double sd = 0.0;
};

Aggregate aggregate(const std::vector<double>& values);
/// Final-row target accuracy of each metrics CSV, aggregated.
Aggregate aggregate_from_csvs(const std::vector<std::string>& metrics_paths);

struct DataFiles {
  std::string source;
  std::string target;
  std::string source_hash;
  std::string target_hash;
};

/// Writes both domains as labelled CSVs into dir and hashes them.
DataFiles materialize_data(const Domains& domains, const std::string& dir);

/// Trains every seed of `base` on `domains` into out_dir/seed_<s>.
std::vector<SeedRun> run_seeds(const TrainConfig& base, const Domains& domains,
                               const std::vector<std::uint64_t>& seeds, const std::string& out_dir);

/// Writes manifest.json: config snapshot, seeds, per-seed paths, aggregate
/// of the final target accuracies, and the data files with their hashes.
void write_run_manifest(const std::string& path, const TrainConfig& config,
                        const std::vector<SeedRun>& runs, const DataFiles& data);

struct AblationVariant {
  std::string name;
  TrainConfig config;
};

/// The ten comparison rows, all sharing base's data and training settings:
/// backbone_only, no_bottleneck, beta_eta, constant_eta, k1, k4,
/// include_source, only_uncertain, only_certain, full_saf.
std::vector<AblationVariant> ablation_grid(const TrainConfig& base);

struct AblationRow {
  std::string name;
  Aggregate accuracy;
  std::string status;  // "ok" or the failure message
};

/// Runs the grid over the seeds into out_dir/<variant>/seed_<s>, with the
/// data written once to out_dir/data. Writes ablation.csv and manifest.json.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                      const std::string& out_dir);

}  // namespace saf
