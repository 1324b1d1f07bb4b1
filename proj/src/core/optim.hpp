#pragma once

#include <utility>
#include <vector>

#include "core/autodiff.hpp"

namespace laif {

std::vector<ParamSlot*> collect_params(class Sequential& net);
void zero_grads(const std::vector<ParamSlot*>& params);

/// SGD with classical momentum and coupled weight decay:
///   g' = g + wd * w;  v = momentum * v + g';  w -= lr * v
/// Decay applies only to slots with the decay flag (weights, not biases or
/// normalization affines). lr == 0 leaves parameters bitwise untouched.
struct SgdConfig {
  float lr = 0.01f;
  float momentum = 0.0f;
  float weight_decay = 0.0f;
};

class Sgd {
 public:
  Sgd(std::vector<ParamSlot*> params, SgdConfig cfg);
  void step();

 private:
  std::vector<ParamSlot*> params_;
  std::vector<Tensor> velocity_;
  SgdConfig cfg_;
};

/// Adam with bias correction; eps sits outside the square root.
struct AdamConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class Adam {
 public:
  Adam(std::vector<ParamSlot*> params, AdamConfig cfg);
  void step();
  std::int64_t step_count() const { return t_; }

 private:
  std::vector<ParamSlot*> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

/// Fraction of rows whose argmax (first maximum on ties) equals the label.
double accuracy(const Tensor& scores, const std::vector<int>& labels);

/// Top-k (index, score) pairs, score descending, ties broken by lower index.
std::vector<std::pair<int, float>> topk(const std::vector<float>& scores, int k);

}  // namespace laif
