#include "saf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "saf/errors.hpp"
#include "saf/text.hpp"

namespace saf {

const std::vector<int>& Batch::require_labels(const char* context) const {
  if (!labels) throw DataError(std::string(context) + ": batch carries no labels");
  return *labels;
}

Batch Batch::without_labels() const {
  Batch out;
  out.features = features;
  out.domain_tags = domain_tags;
  return out;
}

Batch Batch::select(std::span<const std::size_t> rows) const {
  Batch out;
  out.features = Matrix(rows.size(), features.cols());
  out.domain_tags.reserve(rows.size());
  if (labels) out.labels.emplace().reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= size()) throw DataError("Batch::select: row " + std::to_string(r) + " out of range");
    std::copy(features.row(r).begin(), features.row(r).end(), out.features.row(i).begin());
    out.domain_tags.push_back(domain_tags[r]);
    if (labels) out.labels->push_back((*labels)[r]);
  }
  return out;
}

void Batch::validate(std::size_t num_classes) const {
  if (domain_tags.size() != size()) throw ShapeError("batch: domain tag count does not match rows");
  for (int d : domain_tags) {
    if (d != kSourceDomain && d != kTargetDomain) throw DataError("batch: domain tag must be 0 or 1");
  }
  if (!labels) return;
  if (labels->size() != size()) throw ShapeError("batch: label count does not match rows");
  for (std::size_t i = 0; i < labels->size(); ++i) {
    const int y = (*labels)[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DataError("batch: label " + std::to_string(y) + " in row " + std::to_string(i + 1) +
                      " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

void DomainSpec::validate() const {
  if (n_samples < 2) throw ConfigError("domain: n_samples must be at least 2");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("domain: noise must be >= 0");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("domain: scale must be positive");
  if (!std::isfinite(rotation_deg) || !std::isfinite(translation[0]) || !std::isfinite(translation[1])) {
    throw ConfigError("domain: rotation and translation must be finite");
  }
}

std::array<double, 2> DomainSpec::transform(std::array<double, 2> p) const {
  const double th = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double x = scale * p[0], y = scale * p[1];
  return {c * x - s * y + translation[0], s * x + c * y + translation[1]};
}

namespace {

Batch shuffled(Batch b, Rng& rng) {
  std::vector<std::size_t> order(b.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return b.select(order);
}

}  // namespace

Batch gen_two_moons(const DomainSpec& spec, int domain) {
  spec.validate();
  const std::size_t n_out = spec.n_samples / 2;
  const std::size_t n_in = spec.n_samples - n_out;
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Batch b;
  b.features = Matrix(spec.n_samples, 2);
  b.labels.emplace(spec.n_samples, 0);
  b.domain_tags.assign(spec.n_samples, domain);
  auto angle = [](std::size_t i, std::size_t n) {
    return n > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  };
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    std::array<double, 2> p;
    if (i < n_out) {
      const double t = angle(i, n_out);
      p = {std::cos(t), std::sin(t)};
    } else {
      const double t = angle(i - n_out, n_in);
      p = {1.0 - std::cos(t), 0.5 - std::sin(t)};
      (*b.labels)[i] = 1;
    }
    p[0] += spec.noise_sd * noise(rng);
    p[1] += spec.noise_sd * noise(rng);
    p = spec.transform(p);
    b.features(i, 0) = p[0];
    b.features(i, 1) = p[1];
  }
  return shuffled(std::move(b), rng);
}

Batch gen_gaussian_blobs(const DomainSpec& spec, std::size_t k,
                         std::span<const std::array<double, 2>> centers, int domain) {
  spec.validate();
  if (k < 2) throw ConfigError("blobs: need at least 2 classes");
  if (centers.size() != k) {
    throw ConfigError("blobs: " + std::to_string(centers.size()) + " centres for " + std::to_string(k) +
                      " classes");
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (centers[i] == centers[j]) {
        throw ConfigError("blobs: centres " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
      }
    }
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Batch b;
  b.features = Matrix(spec.n_samples, 2);
  b.labels.emplace();
  b.labels->reserve(spec.n_samples);
  b.domain_tags.assign(spec.n_samples, domain);
  std::size_t row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t count = spec.n_samples / k + (c < spec.n_samples % k ? 1 : 0);
    const std::array<double, 2> centre = spec.transform(centers[c]);
    for (std::size_t i = 0; i < count; ++i, ++row) {
      b.features(row, 0) = centre[0] + spec.noise_sd * noise(rng);
      b.features(row, 1) = centre[1] + spec.noise_sd * noise(rng);
      b.labels->push_back(static_cast<int>(c));
    }
  }
  return shuffled(std::move(b), rng);
}

std::vector<std::array<double, 2>> default_blob_centers(std::size_t k) {
  std::vector<std::array<double, 2>> out;
  for (std::size_t i = 0; i < k; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    out.push_back({2.0 * std::cos(t), 2.0 * std::sin(t)});
  }
  return out;
}

Batch load_csv(const std::string& path, bool has_labels, int domain,
               std::optional<std::size_t> num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing header");
  const std::size_t width = split(trim(line), ',').size();
  if (has_labels && width < 2) throw ParseError(path + ": labelled file needs a feature and a label column");
  const std::size_t d = has_labels ? width - 1 : width;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    ++row;
    const auto cells = split(text, ',');
    if (cells.size() != width) {
      throw ParseError(path + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(width));
    }
    for (std::size_t c = 0; c < d; ++c) {
      const auto v = parse_double(trim(cells[c]));
      if (!v) {
        throw ParseError(path + ": row " + std::to_string(row) + ": non-numeric cell '" +
                         std::string(cells[c]) + "'");
      }
      values.push_back(*v);
    }
    if (has_labels) {
      const auto y = parse_integer(trim(cells[d]));
      if (!y || *y < 0 || (num_classes && static_cast<std::size_t>(*y) >= *num_classes) ||
          *y > std::numeric_limits<int>::max()) {
        throw ParseError(path + ": row " + std::to_string(row) + ": invalid label '" +
                         std::string(cells[d]) + "'");
      }
      labels.push_back(static_cast<int>(*y));
    }
  }
  Batch b;
  b.features = Matrix(row, d, std::move(values));
  if (has_labels) b.labels = std::move(labels);
  b.domain_tags.assign(row, domain);
  return b;
}

void save_csv(const Batch& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t c = 0; c < batch.width(); ++c) out << (c ? "," : "") << 'f' << c;
  if (batch.labels) out << ",label";
  out << '\n';
  for (std::size_t r = 0; r < batch.size(); ++r) {
    for (std::size_t c = 0; c < batch.width(); ++c) out << (c ? "," : "") << format_double(batch.features(r, c));
    if (batch.labels) out << ',' << (*batch.labels)[r];
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

std::vector<Batch> batch_iterator(const Batch& data, std::size_t batch_size, bool shuffle, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_iterator: batch size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.push_back(data.select(std::span<const std::size_t>(order).subspan(start, end - start)));
  }
  return out;
}

CyclingLoader::CyclingLoader(const Batch& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), rng_(seed), order_(data.size()) {
  if (batch_size == 0) throw ConfigError("loader: batch size must be positive");
  if (data.size() == 0) throw DataError("loader: empty dataset");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  cursor_ = order_.size();
}

Batch CyclingLoader::next() {
  const std::size_t take = std::min(batch_size_, order_.size());
  if (order_.size() - cursor_ < take) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  Batch b = data_->select(std::span<const std::size_t>(order_).subspan(cursor_, take));
  cursor_ += take;
  return b;
}

Batch concat(const Batch& a, const Batch& b) {
  if (a.width() != b.width()) throw ShapeError("concat: feature widths differ");
  Batch out;
  out.features = Matrix(a.size() + b.size(), a.width());
  std::copy(a.features.data().begin(), a.features.data().end(), out.features.data().begin());
  std::copy(b.features.data().begin(), b.features.data().end(),
            out.features.data().begin() + static_cast<std::ptrdiff_t>(a.features.size()));
  out.domain_tags = a.domain_tags;
  out.domain_tags.insert(out.domain_tags.end(), b.domain_tags.begin(), b.domain_tags.end());
  if (a.labels && b.labels) {
    out.labels = *a.labels;
    out.labels->insert(out.labels->end(), b.labels->begin(), b.labels->end());
  }
  return out;
}

}  // namespace saf
