#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/autodiff.hpp"

namespace laif {

/// A stage in a Sequential model. Layers own their parameters (as ParamSlots)
/// and buffers; forward() records onto the caller's tape.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Var forward(Tape& t, Var x) = 0;
  /// Shape transfer for build-time validation; throws on incompatible input.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual void init(Rng&) {}
  virtual void set_mode(bool /*train*/) {}
  virtual void reseed(std::uint64_t /*seed*/) {}
  virtual void visit_params(const std::function<void(ParamSlot&)>&) {}
  /// Params and buffers under stable local names, for serialization.
  virtual void visit_named(const std::function<void(const std::string&, Tensor&)>&) {}
};

void fill_xavier(Tensor& w, int fan_in, int fan_out, Rng& rng);

/// y = x . W^T + b with W stored [out, in].
class Dense : public Layer {
 public:
  Dense(int in_features, int out_features);
  std::string kind() const override { return "dense"; }
  Var forward(Tape& t, Var x) override;
  Shape output_shape(const Shape& in) const override;
  void init(Rng& rng) override;
  void visit_params(const std::function<void(ParamSlot&)>& fn) override;
  void visit_named(const std::function<void(const std::string&, Tensor&)>& fn) override;
  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_, out_;
  ParamSlot weight_, bias_;
};

class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(int in_channels, int out_channels, int k, int stride, int pad);
  std::string kind() const override { return "conv"; }
  Var forward(Tape& t, Var x) override;
  Shape output_shape(const Shape& in) const override;
  void init(Rng& rng) override;
  void visit_params(const std::function<void(ParamSlot&)>& fn) override;
  void visit_named(const std::function<void(const std::string&, Tensor&)>& fn) override;

 private:
  int cin_, cout_, k_, stride_, pad_;
  ParamSlot weight_, bias_;
};

/// Per-channel normalization. Train mode uses batch statistics (biased
/// variance) and moves the running stats toward them by `momentum` on every
/// pass, grad-recording or not; eval mode uses the running stats.
class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int features, float momentum = 0.1f);
  std::string kind() const override { return "batchnorm"; }
  Var forward(Tape& t, Var x) override;
  Shape output_shape(const Shape& in) const override;
  void init(Rng& rng) override;
  void set_mode(bool train) override { train_ = train; }
  void visit_params(const std::function<void(ParamSlot&)>& fn) override;
  void visit_named(const std::function<void(const std::string&, Tensor&)>& fn) override;
  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

 private:
  int features_;
  float momentum_;
  float eps_ = 1e-5f;
  bool train_ = true;
  ParamSlot gamma_, beta_;
  Tensor running_mean_, running_var_;
};

class Relu : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Var forward(Tape& t, Var x) override { return t.relu(x); }
  Shape output_shape(const Shape& in) const override { return in; }
};

class LeakyRelu : public Layer {
 public:
  explicit LeakyRelu(float slope = 0.2f) : slope_(slope) {}
  std::string kind() const override { return "leaky_relu"; }
  Var forward(Tape& t, Var x) override { return t.leaky_relu(x, slope_); }
  Shape output_shape(const Shape& in) const override { return in; }

 private:
  float slope_;
};

class Tanh : public Layer {
 public:
  std::string kind() const override { return "tanh"; }
  Var forward(Tape& t, Var x) override { return t.tanh(x); }
  Shape output_shape(const Shape& in) const override { return in; }
};

class Sigmoid : public Layer {
 public:
  std::string kind() const override { return "sigmoid"; }
  Var forward(Tape& t, Var x) override { return t.sigmoid(x); }
  Shape output_shape(const Shape& in) const override { return in; }
};

/// Channel dropout with inverted scaling; identity in eval mode.
class Dropout2d : public Layer {
 public:
  explicit Dropout2d(float p);
  std::string kind() const override { return "dropout"; }
  Var forward(Tape& t, Var x) override;
  Shape output_shape(const Shape& in) const override;
  void set_mode(bool train) override { train_ = train; }
  void reseed(std::uint64_t seed) override { rng_ = Rng(seed); }

 private:
  float p_;
  bool train_ = true;
  Rng rng_{0};
};

class MaxPool2 : public Layer {
 public:
  std::string kind() const override { return "maxpool"; }
  Var forward(Tape& t, Var x) override { return t.maxpool2(x); }
  Shape output_shape(const Shape& in) const override;
};

class Upsample2x : public Layer {
 public:
  std::string kind() const override { return "upsample"; }
  Var forward(Tape& t, Var x) override { return t.upsample2x(x); }
  Shape output_shape(const Shape& in) const override;
};

/// [N,C,H,W] -> [N, C*H*W] preserving row-major order.
class Flatten : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Var forward(Tape& t, Var x) override;
  Shape output_shape(const Shape& in) const override;
};

/// [N, prod(tail)] -> [N, tail...] with a fixed per-sample tail shape.
class ReshapeTo : public Layer {
 public:
  explicit ReshapeTo(std::vector<int> tail) : tail_(std::move(tail)) {}
  std::string kind() const override { return "reshape"; }
  Var forward(Tape& t, Var x) override;
  Shape output_shape(const Shape& in) const override;

 private:
  std::vector<int> tail_;
};

/// Ordered layer stack with build-time shape validation against a probe input
/// (batch dim 1). Serialization names are "layer<i>.<local>".
class Sequential {
 public:
  Sequential() { shapes_.push_back(input_); }
  explicit Sequential(Shape probe_input) : input_(std::move(probe_input)) { shapes_.push_back(input_); }
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  void add(std::unique_ptr<Layer> layer);
  /// Swaps out layer `index` after revalidating downstream shapes; returns the
  /// replaced layer.
  std::unique_ptr<Layer> replace(std::size_t index, std::unique_ptr<Layer> fresh);

  Var forward(Tape& t, Var x);
  void set_mode(bool train);
  bool training() const { return train_; }
  void init(Rng& rng);
  void reseed(std::uint64_t base_seed);
  void visit_params(const std::function<void(ParamSlot&)>& fn);
  void visit_named(const std::function<void(const std::string&, Tensor&)>& fn);

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_[i]; }
  const Layer& at(std::size_t i) const { return *layers_[i]; }
  const Shape& input_shape() const { return input_; }
  const Shape& output_shape() const { return shapes_.back(); }

 private:
  Shape input_;
  std::vector<Shape> shapes_;  // shapes_[i] feeds layer i; back() is the output
  std::vector<std::unique_ptr<Layer>> layers_;
  bool train_ = true;
};

}  // namespace laif
