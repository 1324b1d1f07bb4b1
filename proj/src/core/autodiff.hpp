#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace laif {

/// Named trainable value plus an externally owned gradient accumulator.
/// Gradients survive across tapes; backward() adds into them.
struct ParamSlot {
  std::string name;
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool decay = true;  // weight decay eligibility; off for biases and norm affine terms

  ParamSlot(std::string n, Tensor v, bool decay_flag = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(decay_flag) {}

  void accumulate(const Tensor& g);
  void clear_grad();
};

class Tape;

/// Handle to one node on one tape; only meaningful with the tape that minted it.
struct Var {
  const Tape* tape = nullptr;
  std::int32_t node = -1;
};

/// Reverse-mode tape. Ops append value nodes and pull closures; backward walks
/// the closures newest-first and deposits leaf gradients into ParamSlots.
/// A tape built with grads_enabled=false evaluates values only.
class Tape {
 public:
  explicit Tape(bool grads_enabled = true) : grads_enabled_(grads_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grads_enabled() const { return grads_enabled_; }

  Var constant(Tensor value);
  Var param(ParamSlot& slot);

  const Tensor& value(Var v) const;

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var matmul(Var a, Var b);
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  Var maxpool2(Var x);
  Var upsample2x(Var x);
  Var reshape(Var x, Shape target);
  Var transpose(Var x);

  Var relu(Var x);
  Var leaky_relu(Var x, float slope);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var dropout2d(Var x, float p, Rng& rng);

  struct BatchNormOut {
    Var y;
    Tensor batch_mean;  // per channel; variance is the biased estimate
    Tensor batch_var;
  };
  BatchNormOut batchnorm_train(Var x, Var gamma, Var beta, float eps);
  Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var, float eps);

  struct SoftmaxCeOut {
    Var loss;      // scalar, mean over the batch
    Tensor probs;  // [n, classes]
  };
  SoftmaxCeOut softmax_cross_entropy(Var logits, const std::vector<int>& labels);
  Var bce(Var probs, const Tensor& targets);

  Var sum_all(Var x);
  Var mean_all(Var x);
  Var detach(Var x);

  void backward(Var root);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
  };
  struct Record {
    std::int32_t out;
    std::function<void(const Tensor&)> pull;
  };

  Var push(Tensor value, bool requires_grad);
  const Node& node_at(Var v) const;
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.node)].requires_grad; }
  void accumulate_node(std::int32_t idx, Tensor g);
  void record(std::int32_t out, std::function<void(const Tensor&)> pull);

  Var ew(EwOp op, Var a, Var b);

  std::vector<Node> nodes_;
  std::vector<Record> records_;
  std::vector<Tensor> grads_;
  std::vector<char> grad_set_;
  bool grads_enabled_ = true;
};

}  // namespace laif
