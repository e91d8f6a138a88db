#pragma once

// Reverse-mode automatic differentiation over dense 2D tensors.
//
// A Tape records every operation executed on it in topological order; the
// Tensor handles returned by the operations below are indices into that
// record. Backward visits the record in exact reverse order and accumulates
// gradients into every node that requires one, then flushes leaf gradients
// into the Parameters that were registered on the tape.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "saf/matrix.hpp"

namespace saf {

using Rng = std::mt19937_64;

/// A trainable matrix with its optimizer state.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value, double lr_multiplier = 1.0);

  std::string name;
  Matrix value;
  Matrix grad;
  Matrix velocity;
  double lr_multiplier = 1.0;
  /// Set by Tape::backward for every parameter registered on the tape.
  bool has_grad = false;

  void clear_grad();
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  /// Gradient after Tape::backward; an empty matrix if nothing reached it.
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  /// Value of a 1x1 tensor.
  double item() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the node's own id and upstream gradient and pushes
  /// contributions into the node's inputs through Tape::grad_slot.
  using BackwardFn = std::function<void(Tape&, std::size_t self, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  /// Leaf that receives a gradient but is not tied to a Parameter.
  Tensor variable(Matrix value);
  /// Leaf bound to a Parameter. Registering the same Parameter twice returns
  /// the same node, so multiple uses accumulate into one gradient.
  Tensor parameter(Parameter& p);

  /// Appends an operation result. `fn` is only kept when `requires_grad`.
  Tensor record(Matrix value, bool requires_grad, BackwardFn fn);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator of node `id`, zero-allocated on first use.
  Matrix& grad_slot(std::size_t id);

  /// Runs the reverse sweep from a 1x1 loss and flushes parameter gradients.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  /// Parameters registered on this tape, in registration order.
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::vector<Parameter*> params_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Operations. All inputs must live on the same tape.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// x (m x n) plus a 1 x n row broadcast to every row.
Tensor add_row(const Tensor& x, const Tensor& row);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
/// col (m x 1) scales row i of x (m x n) by col(i, 0).
Tensor mul_rows(const Tensor& col, const Tensor& x);
/// scale * x + shift, elementwise.
Tensor affine(const Tensor& x, double scale, double shift = 0.0);
inline Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
/// Fused log-sum-exp form; never evaluates log(0).
Tensor log_softmax_rows(const Tensor& x);
/// log(max(x, floor)); gradient is zero where the floor is active.
Tensor log_clamped(const Tensor& x, double floor = 1e-15);

/// Inverted dropout: survivors are scaled by 1/(1-rate) in training mode,
/// identity in eval mode or when rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Forward identity; backward multiplies the incoming gradient by -lambda.
Tensor grad_reverse(const Tensor& x, double lambda);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// out(i, 0) = x(i, index[i]).
Tensor pick(const Tensor& x, std::span<const int> index);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Copy of the value as a constant; gradient does not flow through.
Tensor detach(const Tensor& x);

struct BatchNormState {
  Matrix running_mean;
  Matrix running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  explicit BatchNormState(std::size_t width = 0)
      : running_mean(1, width, 0.0), running_var(1, width, 1.0) {}
};

/// Per-column batch normalisation. Training mode uses batch statistics and,
/// when `update_stats`, folds them into the running estimates (unbiased
/// variance, momentum 0.1). Eval mode normalises by the running estimates.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, bool update_stats = true);

}  // namespace saf
