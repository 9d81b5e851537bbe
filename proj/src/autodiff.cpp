#include "sparsedm/autodiff.hpp"

#include <cmath>
#include <memory>

#include "sparsedm/errors.hpp"

namespace sparsedm {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

Tensor scalar_tensor(double v) {
  Tensor out(1, 1);
  out(0, 0) = static_cast<float>(v);
  return out;
}

}  // namespace

ParamId Tape::add_param(Tensor value) {
  params_.push_back(std::move(value));
  return ParamId{params_.size() - 1};
}

Var Tape::param(ParamId id) {
  Node node;
  node.value = params_.at(id.index);
  node.param = id;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (Var in : inputs) {
    if (in.index >= nodes_.size()) throw ContractError("Tape::record: input from another tape");
    node.requires_grad = node.requires_grad || nodes_[in.index].requires_grad;
  }
  node.inputs = std::move(inputs);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.index >= nodes_.size()) throw ContractError("backward: loss is not on this tape");
  const Tensor& loss_value = nodes_[loss.index].value;
  if (loss_value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(loss_value));
  }

  grads_.assign(params_.size(), Tensor());
  for (std::size_t p = 0; p < params_.size(); ++p) {
    grads_[p] = Tensor::Zero(params_[p].rows(), params_[p].cols());
  }

  std::vector<Tensor> node_grads(loss.index + 1);
  std::vector<bool> has_grad(loss.index + 1, false);
  node_grads[loss.index] = Tensor::Ones(1, 1);
  has_grad[loss.index] = true;

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (!has_grad[i]) continue;
    Node& node = nodes_[i];
    if (node.param) {
      grads_[node.param->index] += node_grads[i];
      continue;
    }
    if (!node.requires_grad || !node.backward) continue;

    const std::size_t arity = node.inputs.size();
    std::vector<Tensor> input_grads(arity);
    auto need_vec = std::make_unique<bool[]>(arity);
    for (std::size_t k = 0; k < arity; ++k) {
      const Node& in = nodes_[node.inputs[k].index];
      need_vec[k] = in.requires_grad;
      input_grads[k] = Tensor::Zero(in.value.rows(), in.value.cols());
    }
    node.backward(*this, node_grads[i], input_grads,
                  std::span<const bool>(need_vec.get(), arity));

    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (!need_vec[k]) continue;
      const std::size_t j = node.inputs[k].index;
      if (has_grad[j]) {
        node_grads[j] += input_grads[k];
      } else {
        node_grads[j] = std::move(input_grads[k]);
        has_grad[j] = true;
      }
    }
    node_grads[i] = Tensor();
  }
}

const Tensor& Tape::grad(ParamId id) const {
  if (grads_.size() != params_.size()) throw ContractError("grad: backward has not run");
  return grads_.at(id.index);
}

void Tape::clear_graph() {
  nodes_.clear();
  grads_.clear();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a) + " x " +
                         shape_string(b));
  }
  return (a.cast<double>() * b.cast<double>()).cast<float>();
}

float silu(float x) { return static_cast<float>(x / (1.0 + std::exp(-static_cast<double>(x)))); }

float silu_derivative(float x) {
  const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
  return static_cast<float>(s * (1.0 + x * (1.0 - s)));
}

Var matmul(Tape& tape, Var a, Var b) {
  Tensor out = matmul(tape.value(a), tape.value(b));
  return tape.record(std::move(out), {a, b},
                     [a, b](const Tape& t, const Tensor& g, std::span<Tensor> grads,
                            std::span<const bool> need) {
                       const Tensor& av = t.value(a);
                       const Tensor& bv = t.value(b);
                       if (need[0]) grads[0] = matmul(g, bv.transpose());
                       if (need[1]) grads[1] = matmul(av.transpose(), g);
                     });
}

Var add_bias(Tape& tape, Var x, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& bv = tape.value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv) + " does not match " +
                         shape_string(xv));
  }
  Tensor out = xv.rowwise() + bv.row(0);
  return tape.record(std::move(out), {x, bias},
                     [](const Tape&, const Tensor& g, std::span<Tensor> grads,
                        std::span<const bool> need) {
                       if (need[0]) grads[0] = g;
                       if (need[1]) grads[1] = g.cast<double>().colwise().sum().cast<float>();
                     });
}

Var silu(Tape& tape, Var x) {
  Tensor out = tape.value(x).unaryExpr([](float v) { return silu(v); });
  return tape.record(std::move(out), {x},
                     [x](const Tape& t, const Tensor& g, std::span<Tensor> grads,
                         std::span<const bool> need) {
                       if (!need[0]) return;
                       grads[0] = g.cwiseProduct(
                           t.value(x).unaryExpr([](float v) { return silu_derivative(v); }));
                     });
}

Var mse_loss(Tape& tape, Var pred, Var target) {
  const Tensor& p = tape.value(pred);
  const Tensor& q = tape.value(target);
  require_same_shape(p, q, "mse_loss");
  if (p.size() == 0) throw DimensionError("mse_loss: empty operands");
  const double count = static_cast<double>(p.size());
  const double loss = (p.cast<double>() - q.cast<double>()).squaredNorm() / count;
  return tape.record(scalar_tensor(loss), {pred, target},
                     [pred, target, count](const Tape& t, const Tensor& g,
                                           std::span<Tensor> grads, std::span<const bool> need) {
                       const double factor = 2.0 * static_cast<double>(g(0, 0)) / count;
                       const Eigen::MatrixXd diff =
                           t.value(pred).cast<double>() - t.value(target).cast<double>();
                       if (need[0]) grads[0] = (factor * diff).cast<float>();
                       if (need[1]) grads[1] = (-factor * diff).cast<float>();
                     });
}

Var sum(Tape& tape, Var x) {
  const double total = tape.value(x).cast<double>().sum();
  return tape.record(scalar_tensor(total), {x},
                     [](const Tape&, const Tensor& g, std::span<Tensor> grads,
                        std::span<const bool> need) {
                       if (need[0]) grads[0].setConstant(g(0, 0));
                     });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor out = (tape.value(x).cast<double>() * factor).cast<float>();
  return tape.record(std::move(out), {x},
                     [factor](const Tape&, const Tensor& g, std::span<Tensor> grads,
                              std::span<const bool> need) {
                       if (need[0]) grads[0] = (g.cast<double>() * factor).cast<float>();
                     });
}

Var add(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "add");
  Tensor out = tape.value(a) + tape.value(b);
  return tape.record(std::move(out), {a, b},
                     [](const Tape&, const Tensor& g, std::span<Tensor> grads,
                        std::span<const bool> need) {
                       if (need[0]) grads[0] = g;
                       if (need[1]) grads[1] = g;
                     });
}

Var slice_cols(Tape& tape, Var x, Eigen::Index first, Eigen::Index count) {
  const Tensor& xv = tape.value(x);
  if (first < 0 || count < 0 || first + count > xv.cols()) {
    throw DimensionError("slice_cols: range out of bounds for " + shape_string(xv));
  }
  Tensor out = xv.middleCols(first, count);
  return tape.record(std::move(out), {x},
                     [first, count](const Tape&, const Tensor& g, std::span<Tensor> grads,
                                    std::span<const bool> need) {
                       if (need[0]) grads[0].middleCols(first, count) = g;
                     });
}

}  // namespace sparsedm
