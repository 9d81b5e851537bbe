#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sparsedm/tensor.hpp"

namespace sparsedm {

/// Handle of a trainable tensor registered on a Tape.
struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

/// Handle of a recorded value on a Tape.
struct Var {
  std::size_t index = 0;
};

/// Reverse-mode recorder. Parameters live in the tape's registry; every op
/// appends a node whose backward rule is replayed in reverse creation order,
/// which makes gradient accumulation order deterministic.
class Tape {
 public:
  /// Computes gradients of the node output for each input flagged in `need`.
  /// `input_grads[k]` is preallocated to the shape of input k.
  using BackwardFn = std::function<void(const Tape& tape, const Tensor& grad_out,
                                        std::span<Tensor> input_grads,
                                        std::span<const bool> need)>;

  ParamId add_param(Tensor value);
  /// Leaf node reading the current value of a parameter.
  Var param(ParamId id);
  Var constant(Tensor value);
  /// Appends an op node. Library ops and extensions (e.g. masked linear) use this.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
  const Tensor& param_value(ParamId id) const { return params_.at(id.index); }
  Tensor& param_value(ParamId id) { return params_.at(id.index); }
  std::size_t param_count() const { return params_.size(); }

  /// Populates the gradient store for every registered parameter. Parameters
  /// the loss does not depend on receive a zero tensor.
  void backward(Var loss);
  const Tensor& grad(ParamId id) const;

  /// Drops recorded nodes and gradients; parameters stay registered.
  void clear_graph();

 private:
  struct Node {
    Tensor value;
    std::vector<Var> inputs;
    BackwardFn backward;
    std::optional<ParamId> param;
    bool requires_grad = false;
  };

  std::vector<Tensor> params_;
  std::vector<Tensor> grads_;
  std::vector<Node> nodes_;
};

// Differentiable ops. Products and reductions accumulate in double.

/// a[p x q] * b[q x r]
Var matmul(Tape& tape, Var a, Var b);
/// Adds the 1 x q row `bias` to every row of x[p x q].
Var add_bias(Tape& tape, Var x, Var bias);
/// x * sigmoid(x), elementwise.
Var silu(Tape& tape, Var x);
/// Mean of squared differences; returns a 1 x 1 tensor.
Var mse_loss(Tape& tape, Var pred, Var target);
/// Sum of all entries; returns 1 x 1.
Var sum(Tape& tape, Var x);
Var scale(Tape& tape, Var x, double factor);
Var add(Tape& tape, Var a, Var b);
/// Columns [first, first + count) of x.
Var slice_cols(Tape& tape, Var x, Eigen::Index first, Eigen::Index count);

/// Dense product with double accumulation, rounded to float.
Tensor matmul(const Tensor& a, const Tensor& b);

float silu(float x);
float silu_derivative(float x);

}  // namespace sparsedm
