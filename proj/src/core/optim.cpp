#include "core/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/layers.hpp"

namespace laif {

std::vector<ParamSlot*> collect_params(Sequential& net) {
  std::vector<ParamSlot*> out;
  net.visit_params([&](ParamSlot& slot) { out.push_back(&slot); });
  return out;
}

void zero_grads(const std::vector<ParamSlot*>& params) {
  for (ParamSlot* p : params) p->clear_grad();
}

namespace {

void require_grad(const ParamSlot& slot) {
  if (!slot.has_grad) fail(ErrorKind::kMissingGrad, "no gradient accumulated for " + slot.name);
}

}  // namespace

Sgd::Sgd(std::vector<ParamSlot*> params, SgdConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  velocity_.reserve(params_.size());
  for (const ParamSlot* p : params_) velocity_.push_back(Tensor::zeros(p->value.shape()));
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ParamSlot& slot = *params_[i];
    require_grad(slot);
    Tensor& v = velocity_[i];
    const bool decay = slot.decay && cfg_.weight_decay != 0.0f;
    for (std::int64_t j = 0; j < slot.value.numel(); ++j) {
      float g = slot.grad[j];
      if (decay) g += cfg_.weight_decay * slot.value[j];
      v[j] = cfg_.momentum * v[j] + g;
      // Guarded so lr == 0 is a bitwise no-op (w - 0 can flip the sign of -0).
      if (cfg_.lr != 0.0f) slot.value[j] -= cfg_.lr * v[j];
    }
  }
}

Adam::Adam(std::vector<ParamSlot*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ParamSlot* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step() {
  ++t_;
  const double corr1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ParamSlot& slot = *params_[i];
    require_grad(slot);
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::int64_t j = 0; j < slot.value.numel(); ++j) {
      const double g = slot.grad[j];
      const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = cfg_.lr * (mj / corr1) / (std::sqrt(vj / corr2) + cfg_.eps);
      if (cfg_.lr != 0.0f) slot.value[j] = static_cast<float>(slot.value[j] - update);
    }
  }
}

double accuracy(const Tensor& scores, const std::vector<int>& labels) {
  if (scores.shape().rank() != 2) fail(ErrorKind::kShapeMismatch, "accuracy expects [N,C] scores");
  const int n = scores.shape().dim(0);
  const int c = scores.shape().dim(1);
  if (static_cast<int>(labels.size()) != n) fail(ErrorKind::kShapeMismatch, "label count does not match rows");
  int hits = 0;
  for (int r = 0; r < n; ++r) {
    const float* row = scores.data() + static_cast<std::size_t>(r) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[static_cast<std::size_t>(r)]) ++hits;
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / n;
}

std::vector<std::pair<int, float>> topk(const std::vector<float>& scores, int k) {
  if (k < 0 || k > static_cast<int>(scores.size())) fail(ErrorKind::kInvalidArgument, "k out of range");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<std::pair<int, float>> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.emplace_back(order[static_cast<std::size_t>(i)], scores[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  return out;
}

}  // namespace laif
