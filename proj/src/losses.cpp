#include "saf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "saf/errors.hpp"

namespace saf {

MarginParams MarginParams::from_gamma(double gamma) {
  if (!(gamma > 1.0)) throw ConfigError("margin gamma must exceed 1");
  return {std::log(gamma), gamma};
}

MarginParams MarginParams::from_rho(double rho) {
  if (!(rho > 0.0)) throw ConfigError("margin threshold must be positive");
  return {rho, std::exp(rho)};
}

namespace {

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes,
                  const char* op) {
  if (labels.size() != rows) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError(std::string(op) + ": label " + std::to_string(y) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(labels, logits.rows(), logits.cols(), "cross_entropy");
  if (logits.rows() == 0) throw DataError("cross_entropy: empty batch");
  return scale(sum(pick(log_softmax_rows(logits), labels)), -1.0 / static_cast<double>(logits.rows()));
}

Tensor cross_entropy_divergence(const Tensor& logits, const Tensor& soft_labels) {
  const Matrix& y = soft_labels.value();
  if (!y.same_shape(logits.value())) {
    throw ShapeError("cross_entropy_divergence: logits " + shape_string(logits.value()) +
                     " vs soft labels " + shape_string(y));
  }
  if (y.rows() == 0) throw DataError("cross_entropy_divergence: empty batch");
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double s = 0.0;
    for (double v : y.row(i)) {
      if (v < 0.0) throw DataError("cross_entropy_divergence: negative soft label in row " + std::to_string(i));
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw DataError("cross_entropy_divergence: soft labels in row " + std::to_string(i) +
                      " sum to " + std::to_string(s));
    }
  }
  return scale(sum(mul(soft_labels, log_softmax_rows(logits))), -1.0 / static_cast<double>(y.rows()));
}

Tensor dann_domain_loss(const Tensor& d_logits_src, const Tensor& d_logits_tgt) {
  if (d_logits_src.cols() != 2 || d_logits_tgt.cols() != 2) {
    throw ShapeError("dann_domain_loss: adversary must have 2 outputs, got " +
                     shape_string(d_logits_src.value()) + " and " + shape_string(d_logits_tgt.value()));
  }
  std::vector<int> domain(d_logits_src.rows(), 0);
  domain.resize(d_logits_src.rows() + d_logits_tgt.rows(), 1);
  return cross_entropy(concat_rows(d_logits_src, d_logits_tgt), domain);
}

Tensor mdd_adversarial_loss(const Tensor& c_logits_src, const Tensor& d_logits_src,
                            const Tensor& c_logits_tgt, const Tensor& d_logits_tgt,
                            const MarginParams& params) {
  const std::size_t k = c_logits_src.cols();
  if (d_logits_src.cols() != k || c_logits_tgt.cols() != k || d_logits_tgt.cols() != k) {
    throw ShapeError("mdd_adversarial_loss: classifier and adversary widths differ");
  }
  if (c_logits_src.rows() != d_logits_src.rows() || c_logits_tgt.rows() != d_logits_tgt.rows()) {
    throw ShapeError("mdd_adversarial_loss: row counts of C and D outputs differ");
  }
  const std::vector<int> y_src = argmax_rows(c_logits_src.value());
  const std::vector<int> y_tgt = argmax_rows(c_logits_tgt.value());

  // Target: push D away from C's label; -log(1 - p_y).
  Tensor p_tgt = pick(softmax_rows(d_logits_tgt), y_tgt);
  Tensor tgt_term = scale(sum(log_clamped(affine(p_tgt, -1.0, 1.0))),
                          -1.0 / static_cast<double>(p_tgt.rows()));
  // Source: agree with C; gamma * -log p_y.
  Tensor src_term = scale(cross_entropy(d_logits_src, y_src), params.gamma);
  return add(tgt_term, src_term);
}

double margin(std::span<const double> probs, int exemplar) {
  if (probs.empty()) throw ShapeError("margin: empty probability row");
  if (exemplar < 0 || static_cast<std::size_t>(exemplar) >= probs.size()) {
    throw DataError("margin: exemplar class out of range");
  }
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < probs.size(); ++y) {
    if (static_cast<int>(y) != exemplar) best_other = std::max(best_other, probs[y]);
  }
  if (probs.size() == 1) best_other = 0.0;
  return 0.5 * (probs[static_cast<std::size_t>(exemplar)] - best_other);
}

double margin_loss(double rho_val, double rho_threshold) {
  if (!(rho_threshold > 0.0)) throw ConfigError("margin_loss: threshold must be positive");
  if (rho_val < 0.0) return 1.0;
  if (rho_val > rho_threshold) return 0.0;
  return 1.0 - rho_val / rho_threshold;
}

double empirical_margin_disparity(const Matrix& probs_c, const Matrix& probs_cprime,
                                  double rho_threshold) {
  if (!probs_c.same_shape(probs_cprime)) {
    throw ShapeError("empirical_margin_disparity: shapes " + shape_string(probs_c) + " and " +
                     shape_string(probs_cprime) + " differ");
  }
  if (probs_c.rows() == 0) throw DataError("empirical_margin_disparity: empty set");
  const std::vector<int> exemplar = argmax_rows(probs_cprime);
  double total = 0.0;
  for (std::size_t i = 0; i < probs_c.rows(); ++i) {
    total += margin_loss(margin(probs_c.row(i), exemplar[i]), rho_threshold);
  }
  return total / static_cast<double>(probs_c.rows());
}

double empirical_mdd_estimate(double delta_src, double delta_tgt) {
  return 2.0 * (delta_src - delta_tgt);
}

std::vector<double> conditional_entropy(const Matrix& probs) {
  std::vector<double> out(probs.rows(), 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double h = 0.0;
    for (double p : probs.row(i)) {
      if (p < 0.0) throw DataError("conditional_entropy: negative probability in row " + std::to_string(i));
      if (p > 0.0) h -= p * std::log(p);
    }
    out[i] = h;
  }
  return out;
}

namespace {

template <typename H>
double h_divergence_impl(const Matrix& src, const Matrix& tgt, std::span<const H> hypotheses) {
  if (hypotheses.empty()) throw ConfigError("empirical_h_divergence: empty hypothesis set");
  if (src.rows() == 0 || tgt.rows() == 0) throw DataError("empirical_h_divergence: empty sample set");
  if (src.cols() != tgt.cols()) throw ShapeError("empirical_h_divergence: feature widths differ");
  const double ns = static_cast<double>(src.rows());
  const double nt = static_cast<double>(tgt.rows());
  double best = std::numeric_limits<double>::infinity();
  for (const H& h : hypotheses) {
    std::size_t src_as_source = 0, tgt_as_target = 0;
    for (std::size_t i = 0; i < src.rows(); ++i) src_as_source += h(src.row(i)) == 0;
    for (std::size_t i = 0; i < tgt.rows(); ++i) tgt_as_target += h(tgt.row(i)) == 1;
    best = std::min(best, static_cast<double>(src_as_source) / ns +
                              static_cast<double>(tgt_as_target) / nt);
  }
  return 2.0 * (1.0 - best);
}

}  // namespace

double empirical_h_divergence(const Matrix& src, const Matrix& tgt,
                              std::span<const Hypothesis> hypotheses) {
  return h_divergence_impl(src, tgt, hypotheses);
}

std::vector<Stump> default_stumps(const Matrix& src, const Matrix& tgt, std::size_t grid) {
  if (grid < 2) throw ConfigError("default_stumps: grid needs at least 2 points");
  std::vector<Stump> out;
  out.reserve(src.cols() * grid * 2);
  for (std::size_t a = 0; a < src.cols(); ++a) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Matrix* m : {&src, &tgt}) {
      for (std::size_t i = 0; i < m->rows(); ++i) {
        lo = std::min(lo, (*m)(i, a));
        hi = std::max(hi, (*m)(i, a));
      }
    }
    for (std::size_t g = 0; g < grid; ++g) {
      const double t = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid - 1);
      out.push_back({a, t, true});
      out.push_back({a, t, false});
    }
  }
  return out;
}

double empirical_h_divergence(const Matrix& src, const Matrix& tgt, std::size_t grid) {
  if (src.cols() != tgt.cols()) throw ShapeError("empirical_h_divergence: feature widths differ");
  const std::vector<Stump> stumps = default_stumps(src, tgt, grid);
  return h_divergence_impl(src, tgt, std::span<const Stump>(stumps));
}

double accuracy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw DataError("accuracy: empty batch");
  check_labels(labels, logits.rows(), logits.cols(), "accuracy");
  const std::vector<int> pred = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace saf
