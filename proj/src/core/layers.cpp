#include "core/layers.hpp"

#include <cmath>
#include <utility>

namespace laif {

namespace {

/// Conv output extent: floor((in + 2*pad - k) / stride) + 1, must be >= 1.
int conv_extent(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0) fail(ErrorKind::kNonPositiveOutput, "kernel exceeds padded input");
  return span / stride + 1;
}

}  // namespace

void fill_xavier(Tensor& w, int fan_in, int fan_out, Rng& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  for (auto& v : w.values()) v = (2.0f * rng.uniform_float() - 1.0f) * limit;
}

Dense::Dense(int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_("weight", Tensor::zeros(Shape{out_features, in_features})),
      bias_("bias", Tensor::zeros(Shape{out_features}), /*decay_flag=*/false) {
  if (in_features < 1 || out_features < 1) fail(ErrorKind::kShapeMismatch, "dense features must be positive");
}

Var Dense::forward(Tape& t, Var x) {
  return t.add(t.matmul(x, t.transpose(t.param(weight_))), t.param(bias_));
}

Shape Dense::output_shape(const Shape& in) const {
  if (in.rank() != 2 || in.dim(1) != in_)
    fail(ErrorKind::kShapeMismatch, "dense expects [N," + std::to_string(in_) + "], got " + in.str());
  return Shape{in.dim(0), out_};
}

void Dense::init(Rng& rng) {
  fill_xavier(weight_.value, in_, out_, rng);
  bias_.value = Tensor::zeros(Shape{out_});
}

void Dense::visit_params(const std::function<void(ParamSlot&)>& fn) {
  fn(weight_);
  fn(bias_);
}

void Dense::visit_named(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("weight", weight_.value);
  fn("bias", bias_.value);
}

Conv2dLayer::Conv2dLayer(int in_channels, int out_channels, int k, int stride, int pad)
    : cin_(in_channels),
      cout_(out_channels),
      k_(k),
      stride_(stride),
      pad_(pad),
      weight_("weight", Tensor::zeros(Shape{out_channels, in_channels, k, k})),
      bias_("bias", Tensor::zeros(Shape{out_channels}), /*decay_flag=*/false) {
  if (in_channels < 1 || out_channels < 1 || k < 1 || stride < 1 || pad < 0)
    fail(ErrorKind::kShapeMismatch, "bad conv hyperparameters");
}

Var Conv2dLayer::forward(Tape& t, Var x) {
  return t.conv2d(x, t.param(weight_), t.param(bias_), stride_, pad_);
}

Shape Conv2dLayer::output_shape(const Shape& in) const {
  if (in.rank() != 4 || in.dim(1) != cin_)
    fail(ErrorKind::kShapeMismatch, "conv expects [N," + std::to_string(cin_) + ",H,W], got " + in.str());
  return Shape{in.dim(0), cout_, conv_extent(in.dim(2), k_, stride_, pad_), conv_extent(in.dim(3), k_, stride_, pad_)};
}

void Conv2dLayer::init(Rng& rng) {
  fill_xavier(weight_.value, cin_ * k_ * k_, cout_ * k_ * k_, rng);
  bias_.value = Tensor::zeros(Shape{cout_});
}

void Conv2dLayer::visit_params(const std::function<void(ParamSlot&)>& fn) {
  fn(weight_);
  fn(bias_);
}

void Conv2dLayer::visit_named(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("weight", weight_.value);
  fn("bias", bias_.value);
}

BatchNorm2d::BatchNorm2d(int features, float momentum)
    : features_(features),
      momentum_(momentum),
      gamma_("gamma", Tensor::full(Shape{features}, 1.0f), /*decay_flag=*/false),
      beta_("beta", Tensor::zeros(Shape{features}), /*decay_flag=*/false),
      running_mean_(Tensor::zeros(Shape{features})),
      running_var_(Tensor::full(Shape{features}, 1.0f)) {
  if (features < 1) fail(ErrorKind::kShapeMismatch, "batchnorm features must be positive");
}

Var BatchNorm2d::forward(Tape& t, Var x) {
  if (!train_) return t.batchnorm_eval(x, t.param(gamma_), t.param(beta_), running_mean_, running_var_, eps_);
  Tape::BatchNormOut out = t.batchnorm_train(x, t.param(gamma_), t.param(beta_), eps_);
  // Running stats move toward the batch statistic by `momentum` on every
  // train-mode pass, whether or not the tape records gradients.
  for (int c = 0; c < features_; ++c) {
    running_mean_[c] = (1.0f - momentum_) * running_mean_[c] + momentum_ * out.batch_mean[c];
    running_var_[c] = (1.0f - momentum_) * running_var_[c] + momentum_ * out.batch_var[c];
  }
  return out.y;
}

Shape BatchNorm2d::output_shape(const Shape& in) const {
  const bool ok = (in.rank() == 4 || in.rank() == 2) && in.dim(1) == features_;
  if (!ok) fail(ErrorKind::kShapeMismatch, "batchnorm expects channel dim " + std::to_string(features_) + ", got " + in.str());
  return in;
}

void BatchNorm2d::init(Rng&) {
  gamma_.value = Tensor::full(Shape{features_}, 1.0f);
  beta_.value = Tensor::zeros(Shape{features_});
  running_mean_ = Tensor::zeros(Shape{features_});
  running_var_ = Tensor::full(Shape{features_}, 1.0f);
}

void BatchNorm2d::visit_params(const std::function<void(ParamSlot&)>& fn) {
  fn(gamma_);
  fn(beta_);
}

void BatchNorm2d::visit_named(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("gamma", gamma_.value);
  fn("beta", beta_.value);
  fn("running_mean", running_mean_);
  fn("running_var", running_var_);
}

Dropout2d::Dropout2d(float p) : p_(p) {
  if (!(p >= 0.0f && p < 1.0f)) fail(ErrorKind::kBadProbability, "dropout rate must be in [0,1)");
}

Var Dropout2d::forward(Tape& t, Var x) {
  if (!train_) return x;
  return t.dropout2d(x, p_, rng_);
}

Shape Dropout2d::output_shape(const Shape& in) const {
  if (in.rank() != 4) fail(ErrorKind::kShapeMismatch, "dropout expects [N,C,H,W], got " + in.str());
  return in;
}

Shape MaxPool2::output_shape(const Shape& in) const {
  const bool ok = in.rank() == 4 && in.dim(2) % 2 == 0 && in.dim(3) % 2 == 0;
  if (!ok) fail(ErrorKind::kShapeMismatch, "maxpool expects even [N,C,H,W], got " + in.str());
  return Shape{in.dim(0), in.dim(1), in.dim(2) / 2, in.dim(3) / 2};
}

Shape Upsample2x::output_shape(const Shape& in) const {
  if (in.rank() != 4) fail(ErrorKind::kShapeMismatch, "upsample expects [N,C,H,W], got " + in.str());
  return Shape{in.dim(0), in.dim(1), in.dim(2) * 2, in.dim(3) * 2};
}

Var Flatten::forward(Tape& t, Var x) {
  const Shape& s = t.value(x).shape();
  return t.reshape(x, output_shape(s));
}

Shape Flatten::output_shape(const Shape& in) const {
  if (in.rank() != 4) fail(ErrorKind::kShapeMismatch, "flatten expects [N,C,H,W], got " + in.str());
  return Shape{in.dim(0), in.dim(1) * in.dim(2) * in.dim(3)};
}

Var ReshapeTo::forward(Tape& t, Var x) {
  return t.reshape(x, output_shape(t.value(x).shape()));
}

Shape ReshapeTo::output_shape(const Shape& in) const {
  std::int64_t tail_numel = 1;
  for (int d : tail_) tail_numel *= d;
  const bool ok = in.rank() == 2 && in.dim(1) == tail_numel && tail_.size() <= 3;
  if (!ok) fail(ErrorKind::kShapeMismatch, "reshape tail does not match " + in.str());
  std::vector<int> dims{in.dim(0)};
  dims.insert(dims.end(), tail_.begin(), tail_.end());
  return Shape(dims);
}

void Sequential::add(std::unique_ptr<Layer> layer) {
  shapes_.push_back(layer->output_shape(shapes_.back()));
  layers_.push_back(std::move(layer));
}

std::unique_ptr<Layer> Sequential::replace(std::size_t index, std::unique_ptr<Layer> fresh) {
  if (index >= layers_.size()) fail(ErrorKind::kInvalidArgument, "layer index out of range");
  // Validate the whole downstream chain before committing anything.
  std::vector<Shape> tail;
  tail.push_back(fresh->output_shape(shapes_[index]));
  for (std::size_t i = index + 1; i < layers_.size(); ++i) tail.push_back(layers_[i]->output_shape(tail.back()));
  for (std::size_t i = 0; i < tail.size(); ++i) shapes_[index + 1 + i] = tail[i];
  fresh->set_mode(train_);
  std::swap(layers_[index], fresh);
  return fresh;
}

Var Sequential::forward(Tape& t, Var x) {
  for (auto& layer : layers_) x = layer->forward(t, x);
  return x;
}

void Sequential::set_mode(bool train) {
  train_ = train;
  for (auto& layer : layers_) layer->set_mode(train);
}

void Sequential::init(Rng& rng) {
  for (auto& layer : layers_) layer->init(rng);
}

void Sequential::reseed(std::uint64_t base_seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->reseed(Rng::mix(base_seed, i));
}

void Sequential::visit_params(const std::function<void(ParamSlot&)>& fn) {
  for (auto& layer : layers_) layer->visit_params(fn);
}

void Sequential::visit_named(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->visit_named([&](const std::string& local, Tensor& tensor) {
      fn("layer" + std::to_string(i) + "." + local, tensor);
    });
  }
}

}  // namespace laif
