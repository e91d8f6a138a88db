#pragma once

// Synthetic domain-shift datasets, CSV ingestion and batching.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saf/autodiff.hpp"
#include "saf/matrix.hpp"

namespace saf {

inline constexpr int kSourceDomain = 0;
inline constexpr int kTargetDomain = 1;

struct Batch {
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::vector<int> domain_tags;

  std::size_t size() const { return features.rows(); }
  std::size_t width() const { return features.cols(); }
  bool has_labels() const { return labels.has_value(); }
  /// Throws DataError when absent.
  const std::vector<int>& require_labels(const char* context) const;

  Batch without_labels() const;
  Batch select(std::span<const std::size_t> rows) const;
  /// Checks shapes and that labels (if any) lie in [0, num_classes).
  void validate(std::size_t num_classes) const;
};

enum class Generator { two_moons, gaussian_blobs };

struct DomainSpec {
  Generator generator = Generator::two_moons;
  std::size_t n_samples = 400;
  double noise_sd = 0.15;
  double rotation_deg = 0.0;
  std::array<double, 2> translation{0.0, 0.0};
  double scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// scale, then rotate, then translate.
  std::array<double, 2> transform(std::array<double, 2> p) const;
};

/// Outer moon: (cos t, sin t), centre (0, 0). Inner moon: (1 - cos t,
/// 0.5 - sin t), centre (1, 0.5). t is evenly spaced on [0, pi]; the outer
/// moon gets floor(n/2) points and label 0. Rows are shuffled.
Batch gen_two_moons(const DomainSpec& spec, int domain = kSourceDomain);

/// Balanced isotropic Gaussian blobs around the transformed centres.
Batch gen_gaussian_blobs(const DomainSpec& spec, std::size_t k,
                         std::span<const std::array<double, 2>> centers,
                         int domain = kSourceDomain);

/// k centres evenly spaced on a circle of radius 2.
std::vector<std::array<double, 2>> default_blob_centers(std::size_t k);

/// Header `f0,...,f{d-1}[,label]`. With has_labels the last column holds
/// integer labels; without it every column is a feature. Errors name the
/// 1-based data row.
Batch load_csv(const std::string& path, bool has_labels, int domain = kSourceDomain,
               std::optional<std::size_t> num_classes = std::nullopt);
void save_csv(const Batch& batch, const std::string& path);

/// One epoch: a (optionally shuffled) partition into consecutive batches,
/// the last of which may be short.
std::vector<Batch> batch_iterator(const Batch& data, std::size_t batch_size, bool shuffle, Rng& rng);

/// Endless stream of full batches. Each epoch is a fresh shuffle; a tail
/// shorter than the batch size is dropped so batch norm never sees a
/// degenerate batch. Data smaller than one batch is returned whole.
class CyclingLoader {
 public:
  CyclingLoader(const Batch& data, std::size_t batch_size, std::uint64_t seed);
  Batch next();

 private:
  const Batch* data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

Batch concat(const Batch& a, const Batch& b);

}  // namespace saf
