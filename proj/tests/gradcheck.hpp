#pragma once

// Central finite-difference gradient checks against the tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "saf/autodiff.hpp"

namespace saf::test {

/// ||a - n|| / max(||a||, ||n||), or the absolute gap when both are tiny.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nn));
  return denom < 1e-7 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

/// Worst relative error over the inputs of `f`, each input a variable leaf.
inline double gradcheck(const ScalarFn& f, std::vector<Matrix> inputs, double eps = 1e-5) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const Matrix& m : inputs) leaves.push_back(tape.variable(m));
    Tensor loss = f(tape, leaves);
    tape.backward(loss);
    for (const Tensor& t : leaves) {
      analytic.push_back(t.grad().empty() ? Matrix(t.rows(), t.cols(), 0.0) : t.grad());
    }
  }
  auto eval = [&](const std::vector<Matrix>& xs) {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const Matrix& m : xs) leaves.push_back(tape.variable(m));
    return f(tape, leaves).item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> numeric(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      inputs[k][i] = keep + eps;
      const double up = eval(inputs);
      inputs[k][i] = keep - eps;
      const double down = eval(inputs);
      inputs[k][i] = keep;
      numeric[i] = (up - down) / (2.0 * eps);
    }
    worst = std::max(worst, relative_error(analytic[k].data(), numeric));
  }
  return worst;
}

/// Central differences of a scalar function of one Parameter's values.
inline std::vector<double> numeric_parameter_gradient(const std::function<double()>& f, Parameter& p,
                                                      double eps) {
  std::vector<double> numeric(p.value.size());
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double keep = p.value[i];
    p.value[i] = keep + eps;
    const double up = f();
    p.value[i] = keep - eps;
    const double down = f();
    p.value[i] = keep;
    numeric[i] = (up - down) / (2.0 * eps);
  }
  return numeric;
}

inline std::vector<double> analytic_or_zero(const Parameter& p) {
  return p.grad.empty() ? std::vector<double>(p.value.size(), 0.0) : p.grad.data();
}

/// Same check over Parameter values; `f` must be deterministic in them.
inline double gradcheck_parameters(const std::function<Tensor(Tape&)>& f,
                                   std::span<Parameter* const> params, double eps = 1e-5) {
  for (Parameter* p : params) p->clear_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  auto value = [&] {
    Tape tape;
    return f(tape).item();
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    const std::vector<double> analytic = analytic_or_zero(*p);
    worst = std::max(worst, relative_error(analytic, numeric_parameter_gradient(value, *p, eps)));
    p->clear_grad();
  }
  return worst;
}

/// False when central differences at eps and eps / 2 disagree along some
/// coordinate, which flags a ReLU kink inside the stencil.
inline bool smooth_along_parameters(const std::function<double()>& f, std::span<Parameter* const> params,
                                    double eps = 1e-5) {
  for (Parameter* p : params) {
    const std::vector<double> wide = numeric_parameter_gradient(f, *p, eps);
    const std::vector<double> narrow = numeric_parameter_gradient(f, *p, eps / 2.0);
    for (std::size_t i = 0; i < wide.size(); ++i) {
      if (std::abs(wide[i] - narrow[i]) > 1e-6 * std::max(1.0, std::abs(wide[i]))) return false;
    }
  }
  return true;
}

struct ReversedObjective {
  Tensor total;
  /// The part of `total` computed through the gradient reversal layer.
  Tensor reversed;
};

/// Check for graphs containing a gradient reversal layer. A parameter with
/// upstream scale s expects d(total) + (s - 1) d(reversed): s = -lambda for
/// parameters feeding the reversal, 1 for everything else.
inline double gradcheck_parameters_reversed(const std::function<ReversedObjective(Tape&)>& f,
                                            std::span<Parameter* const> params,
                                            const std::function<double(const Parameter*)>& upstream_scale,
                                            double eps = 1e-5) {
  for (Parameter* p : params) p->clear_grad();
  {
    Tape tape;
    tape.backward(f(tape).total);
  }
  auto total = [&] {
    Tape tape;
    return f(tape).total.item();
  };
  auto reversed = [&] {
    Tape tape;
    return f(tape).reversed.item();
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    const std::vector<double> analytic = analytic_or_zero(*p);
    std::vector<double> expected = numeric_parameter_gradient(total, *p, eps);
    const double s = upstream_scale(p);
    if (s != 1.0) {
      const std::vector<double> through = numeric_parameter_gradient(reversed, *p, eps);
      for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += (s - 1.0) * through[i];
    }
    worst = std::max(worst, relative_error(analytic, expected));
    p->clear_grad();
  }
  return worst;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

/// Uniform draws with |x| >= margin, keeping ReLU inputs off the kink.
inline Matrix random_away_from_zero(std::size_t r, std::size_t c, std::mt19937_64& rng,
                                    double margin = 0.05) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  Matrix m(r, c);
  for (double& v : m.data()) v = sign(rng) ? u(rng) : -u(rng);
  return m;
}

/// Rows on the probability simplex.
inline Matrix random_distribution(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (m(i, j) = u(rng));
    for (std::size_t j = 0; j < c; ++j) m(i, j) /= s;
  }
  return m;
}

}  // namespace saf::test
