#include "saf/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "saf/errors.hpp"

namespace saf {

Parameter::Parameter(std::string name_, Matrix value_, double lr_multiplier_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(value.rows(), value.cols(), 0.0),
      velocity(value.rows(), value.cols(), 0.0),
      lr_multiplier(lr_multiplier_) {
  if (!(lr_multiplier > 0.0)) {
    throw ConfigError("parameter " + name + ": learning-rate multiplier must be positive");
  }
}

void Parameter::clear_grad() {
  grad.fill(0.0);
  has_grad = false;
}

const Matrix& Tensor::value() const { return tape_->value(id_); }
const Matrix& Tensor::grad() const { return tape_->grad(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(v));
  }
  return v[0];
}

Tensor Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Tensor Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, nullptr});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Tensor(this, it->second);
  }
  nodes_.push_back(Node{p.value, {}, true, nullptr, &p});
  const std::size_t id = nodes_.size() - 1;
  param_nodes_.emplace(&p, id);
  params_.push_back(&p);
  return Tensor(this, id);
}

Tensor Tape::record(Matrix value, bool requires_grad, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

Matrix& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols(), 0.0);
  return n.grad;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.valid() || &loss.tape() != this) {
    throw StateError("backward: loss is not on this tape");
  }
  const Matrix& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be 1x1, got " + shape_string(lv));
  }
  if (backward_done_) throw StateError("backward: tape already consumed");
  backward_done_ = true;

  if (nodes_[loss.id()].requires_grad) grad_slot(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i, n.grad);
  }
  for (Parameter* p : params_) {
    const Node& n = nodes_[param_nodes_.at(p)];
    if (!n.grad.empty()) {
      for (std::size_t k = 0; k < p->grad.size(); ++k) p->grad[k] += n.grad[k];
    }
    p->has_grad = true;
  }
}

// ---------------------------------------------------------------------------

namespace {

void require_same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (&a.tape() != &b.tape()) throw StateError(std::string(op) + ": tensors on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_same_tape(a, b, op);
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                     shape_string(b.value()));
  }
}

// Elementwise op; `deriv(x, y)` is dy/dx expressed through input and output.
template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D deriv) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = f(xv[k]);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, deriv](Tape& t, std::size_t self, const Matrix& up) {
                           const Matrix& in = t.value(xi);
                           const Matrix& o = t.value(self);
                           Matrix& g = t.grad_slot(xi);
                           for (std::size_t k = 0; k < g.size(); ++k) {
                             g[k] += up[k] * deriv(in[k], o[k]);
                           }
                         });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ for " + shape_string(av) + " and " +
                     shape_string(bv));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Matrix out(m, n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av(i, p);
      for (std::size_t j = 0; j < n; ++j) out(i, j) += aip * bv(p, j);
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [ai, bi, m, k, n](Tape& t, std::size_t, const Matrix& up) {
        const Matrix& av = t.value(ai);
        const Matrix& bv = t.value(bi);
        if (t.requires_grad(ai)) {
          Matrix& ga = t.grad_slot(ai);  // up . b^T
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += up(i, j) * bv(p, j);
              ga(i, p) += s;
            }
        }
        if (t.requires_grad(bi)) {
          Matrix& gb = t.grad_slot(bi);  // a^T . up
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av(i, p);
              for (std::size_t j = 0; j < n; ++j) gb(p, j) += aip * up(i, j);
            }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ai, bi](Tape& t, std::size_t, const Matrix& up) {
                           for (std::size_t id : {ai, bi}) {
                             if (!t.requires_grad(id)) continue;
                             Matrix& g = t.grad_slot(id);
                             for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[k];
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ai, bi](Tape& t, std::size_t, const Matrix& up) {
                           if (t.requires_grad(ai)) {
                             Matrix& g = t.grad_slot(ai);
                             for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[k];
                           }
                           if (t.requires_grad(bi)) {
                             Matrix& g = t.grad_slot(bi);
                             for (std::size_t k = 0; k < g.size(); ++k) g[k] -= up[k];
                           }
                         });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_same_tape(x, row, "add_row");
  const Matrix& xv = x.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw ShapeError("add_row: cannot broadcast " + shape_string(rv) + " over " +
                     shape_string(xv));
  }
  Matrix out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  const std::size_t xi = x.id(), ri = row.id();
  return x.tape().record(std::move(out), x.requires_grad() || row.requires_grad(),
                         [xi, ri](Tape& t, std::size_t, const Matrix& up) {
                           if (t.requires_grad(xi)) {
                             Matrix& g = t.grad_slot(xi);
                             for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[k];
                           }
                           if (t.requires_grad(ri)) {
                             Matrix& g = t.grad_slot(ri);
                             for (std::size_t i = 0; i < up.rows(); ++i)
                               for (std::size_t j = 0; j < up.cols(); ++j) g[j] += up(i, j);
                           }
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ai, bi](Tape& t, std::size_t, const Matrix& up) {
                           if (t.requires_grad(ai)) {
                             const Matrix& bv = t.value(bi);
                             Matrix& g = t.grad_slot(ai);
                             for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[k] * bv[k];
                           }
                           if (t.requires_grad(bi)) {
                             const Matrix& av = t.value(ai);
                             Matrix& g = t.grad_slot(bi);
                             for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[k] * av[k];
                           }
                         });
}

Tensor mul_rows(const Tensor& col, const Tensor& x) {
  require_same_tape(col, x, "mul_rows");
  const Matrix& cv = col.value();
  const Matrix& xv = x.value();
  if (cv.cols() != 1 || cv.rows() != xv.rows()) {
    throw ShapeError("mul_rows: scale column " + shape_string(cv) + " does not match " +
                     shape_string(xv));
  }
  Matrix out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row(i)) v *= cv[i];
  const std::size_t ci = col.id(), xi = x.id();
  return x.tape().record(std::move(out), col.requires_grad() || x.requires_grad(),
                         [ci, xi](Tape& t, std::size_t, const Matrix& up) {
                           const Matrix& cv = t.value(ci);
                           const Matrix& xv = t.value(xi);
                           if (t.requires_grad(xi)) {
                             Matrix& g = t.grad_slot(xi);
                             for (std::size_t i = 0; i < g.rows(); ++i)
                               for (std::size_t j = 0; j < g.cols(); ++j)
                                 g(i, j) += up(i, j) * cv[i];
                           }
                           if (t.requires_grad(ci)) {
                             Matrix& g = t.grad_slot(ci);
                             for (std::size_t i = 0; i < xv.rows(); ++i) {
                               double s = 0.0;
                               for (std::size_t j = 0; j < xv.cols(); ++j) s += up(i, j) * xv(i, j);
                               g[i] += s;
                             }
                           }
                         });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary(
      x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        // Branch on sign so exp never overflows.
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax_rows(const Tensor& x) {
  const Matrix& xv = x.value();
  if (xv.cols() < 2) throw ShapeError("softmax_rows: need at least 2 columns, got " + shape_string(xv));
  Matrix out = softmax_values(xv);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi](Tape& t, std::size_t self, const Matrix& up) {
                           const Matrix& y = t.value(self);
                           Matrix& g = t.grad_slot(xi);
                           for (std::size_t i = 0; i < y.rows(); ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < y.cols(); ++j) dot += up(i, j) * y(i, j);
                             for (std::size_t j = 0; j < y.cols(); ++j)
                               g(i, j) += y(i, j) * (up(i, j) - dot);
                           }
                         });
}

Tensor log_softmax_rows(const Tensor& x) {
  const Matrix& xv = x.value();
  if (xv.cols() < 2) {
    throw ShapeError("log_softmax_rows: need at least 2 columns, got " + shape_string(xv));
  }
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto in = xv.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < in.size(); ++j) out(i, j) = in[j] - lse;
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi](Tape& t, std::size_t self, const Matrix& up) {
                           const Matrix& y = t.value(self);
                           Matrix& g = t.grad_slot(xi);
                           for (std::size_t i = 0; i < y.rows(); ++i) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < y.cols(); ++j) s += up(i, j);
                             for (std::size_t j = 0; j < y.cols(); ++j)
                               g(i, j) += up(i, j) - std::exp(y(i, j)) * s;
                           }
                         });
}

Tensor log_clamped(const Tensor& x, double floor) {
  return unary(
      x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double in, double) { return in > floor ? 1.0 / in : 0.0; });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return affine(x, 1.0, 0.0);

  const Matrix& xv = x.value();
  Matrix mask(xv.rows(), xv.cols());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = u(rng) < rate ? 0.0 : keep_scale;
  Tensor m = x.tape().constant(std::move(mask));
  return mul(x, m);
}

Tensor grad_reverse(const Tensor& x, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("grad_reverse: lambda must be non-negative");
  const std::size_t xi = x.id();
  return x.tape().record(x.value(), x.requires_grad(),
                         [xi, lambda](Tape& t, std::size_t, const Matrix& up) {
                           Matrix& g = t.grad_slot(xi);
                           for (std::size_t k = 0; k < g.size(); ++k) g[k] += -lambda * up[k];
                         });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xi = x.id();
  return x.tape().record(Matrix(1, 1, s), x.requires_grad(),
                         [xi](Tape& t, std::size_t, const Matrix& up) {
                           Matrix& g = t.grad_slot(xi);
                           for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[0];
                         });
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Tensor pick(const Tensor& x, std::span<const int> index) {
  const Matrix& xv = x.value();
  if (index.size() != xv.rows()) {
    throw ShapeError("pick: " + std::to_string(index.size()) + " indices for " +
                     shape_string(xv));
  }
  Matrix out(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= xv.cols()) {
      throw DataError("pick: index " + std::to_string(index[i]) + " out of range for width " +
                      std::to_string(xv.cols()));
    }
    out[i] = xv(i, static_cast<std::size_t>(index[i]));
  }
  const std::size_t xi = x.id();
  std::vector<int> idx(index.begin(), index.end());
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, idx = std::move(idx)](Tape& t, std::size_t, const Matrix& up) {
                           Matrix& g = t.grad_slot(xi);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             g(i, static_cast<std::size_t>(idx[i])) += up[i];
                         });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const Matrix& xv = x.value();
  Matrix out(rows.size(), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       shape_string(xv));
    }
    std::copy(xv.row(rows[i]).begin(), xv.row(rows[i]).end(), out.row(i).begin());
  }
  const std::size_t xi = x.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, idx = std::move(idx)](Tape& t, std::size_t, const Matrix& up) {
                           Matrix& g = t.grad_slot(xi);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t j = 0; j < up.cols(); ++j) g(idx[i], j) += up(i, j);
                         });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "concat_rows");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows: widths differ for " + shape_string(av) + " and " +
                     shape_string(bv));
  }
  Matrix out(av.rows() + bv.rows(), av.cols());
  std::copy(av.data().begin(), av.data().end(), out.data().begin());
  std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + av.size());
  const std::size_t ai = a.id(), bi = b.id(), na = av.size();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ai, bi, na](Tape& t, std::size_t, const Matrix& up) {
                           if (t.requires_grad(ai)) {
                             Matrix& g = t.grad_slot(ai);
                             for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[k];
                           }
                           if (t.requires_grad(bi)) {
                             Matrix& g = t.grad_slot(bi);
                             for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[na + k];
                           }
                         });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const Matrix& xv = x.value();
  if (begin > end || end > xv.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_string(xv));
  }
  const std::size_t w = xv.cols();
  Matrix out(end - begin, w,
             std::vector<double>(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * w),
                                 xv.data().begin() + static_cast<std::ptrdiff_t>(end * w)));
  const std::size_t xi = x.id(), offset = begin * w;
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, offset](Tape& t, std::size_t, const Matrix& up) {
                           Matrix& g = t.grad_slot(xi);
                           for (std::size_t k = 0; k < up.size(); ++k) g[offset + k] += up[k];
                         });
}

Tensor detach(const Tensor& x) { return x.tape().constant(x.value()); }

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, bool update_stats) {
  require_same_tape(x, gamma, "batch_norm");
  require_same_tape(x, beta, "batch_norm");
  const Matrix& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().rows() != 1 || gamma.value().cols() != n || !gamma.value().same_shape(beta.value())) {
    throw ShapeError("batch_norm: gamma/beta must be 1x" + std::to_string(n));
  }
  if (state.running_mean.cols() != n) throw ShapeError("batch_norm: running stats width mismatch");

  Matrix inv_std(1, n);
  Matrix xhat(m, n);
  if (training) {
    if (m < 2) throw BatchError("batch_norm: training mode needs at least 2 rows, got " + std::to_string(m));
    for (std::size_t j = 0; j < n; ++j) {
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += xv(i, j);
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) var += (xv(i, j) - mu) * (xv(i, j) - mu);
      var /= static_cast<double>(m);
      inv_std[j] = 1.0 / std::sqrt(var + state.epsilon);
      for (std::size_t i = 0; i < m; ++i) xhat(i, j) = (xv(i, j) - mu) * inv_std[j];
      if (update_stats) {
        const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
        state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mu;
        state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * unbiased;
      }
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + state.epsilon);
      for (std::size_t i = 0; i < m; ++i) xhat(i, j) = (xv(i, j) - state.running_mean[j]) * inv_std[j];
    }
  }

  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();
  Matrix out(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = gv[j] * xhat(i, j) + bv[j];

  const std::size_t xi = x.id(), gi = gamma.id(), bi = beta.id();
  const bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return x.tape().record(
      std::move(out), needs,
      [xi, gi, bi, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, std::size_t, const Matrix& up) {
        const std::size_t m = up.rows(), n = up.cols();
        const Matrix& gv = t.value(gi);
        if (t.requires_grad(gi)) {
          Matrix& g = t.grad_slot(gi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += up(i, j) * xhat(i, j);
        }
        if (t.requires_grad(bi)) {
          Matrix& g = t.grad_slot(bi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += up(i, j);
        }
        if (!t.requires_grad(xi)) return;
        Matrix& g = t.grad_slot(xi);
        if (!training) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g(i, j) += up(i, j) * gv[j] * inv_std[j];
          return;
        }
        const double md = static_cast<double>(m);
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0, sx = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            const double dxhat = up(i, j) * gv[j];
            s += dxhat;
            sx += dxhat * xhat(i, j);
          }
          for (std::size_t i = 0; i < m; ++i) {
            const double dxhat = up(i, j) * gv[j];
            g(i, j) += inv_std[j] / md * (md * dxhat - s - xhat(i, j) * sx);
          }
        }
      });
}

}  // namespace saf
