#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace laif {

/// Dims of an N-d tensor, rank 0..4. Rank 0 is a scalar (one element).
/// Convention: images are [N,C,H,W], matrices [rows,cols].
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<int> dims) : dims_(std::move(dims)) { validate(); }

  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& dims() const { return dims_; }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& other) const = default;

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  void validate() const {
    if (dims_.size() > 4) fail(ErrorKind::kShapeMismatch, "rank > 4: " + str());
    std::int64_t n = 1;
    for (int d : dims_) {
      if (d < 1) fail(ErrorKind::kShapeMismatch, "non-positive dim in " + str());
      n *= d;
      if (n > (std::int64_t{1} << 31)) fail(ErrorKind::kShapeMismatch, "element count > 2^31 in " + str());
    }
  }

  std::vector<int> dims_;
};

/// Dense row-major float32 tensor. A value type: copies are independent and
/// all operations below are pure functions of their inputs.
class Tensor {
 public:
  Tensor() : data_(1, 0.0f) {}
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), 0.0f) {}
  Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), fill) {}
  Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.numel())
      fail(ErrorKind::kShapeMismatch, "data length does not match " + shape_.str());
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, float v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(float v) { return Tensor(Shape{}, std::vector<float>{v}); }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Flat offset of [n,c,h,w] in a rank-4 tensor.
  std::size_t index4(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.dim(1) + c) * shape_.dim(2) + h) * shape_.dim(3) + w;
  }

  bool same_bits(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

enum class EwOp { kAdd, kSub, kMul, kDiv };

/// Elementwise binary op. Shapes must match exactly, or b may be a rank-1
/// vector broadcast along axis 1 of a rank-2/rank-4 a (the per-channel rule,
/// the only broadcast form).
Tensor ew_binary(EwOp op, const Tensor& a, const Tensor& b);
bool is_channel_broadcast(const Shape& a, const Shape& b);

Tensor matmul(const Tensor& a, const Tensor& b);

struct Conv2dGrads {
  Tensor dx, dw, db;
};

/// Cross-correlation with zero padding; bias added per output channel.
/// Output size uses floor((H + 2*pad - kh) / stride) + 1 and must be >= 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& dy);

struct MaxPoolResult {
  Tensor y;
  std::vector<std::int32_t> argmax;  // flat input offset per output element
};

/// 2x2 max pooling with stride 2; H and W must be even.
MaxPoolResult maxpool2d(const Tensor& x);
Tensor maxpool2d_backward(const Shape& x_shape, const std::vector<std::int32_t>& argmax, const Tensor& dy);

Tensor upsample_nearest2x(const Tensor& x);
Tensor upsample_nearest2x_backward(const Tensor& dy);

enum class ReduceOp { kSum, kMean, kMax };

struct ReduceResult {
  Tensor y;
  std::vector<std::int32_t> argmax;  // flat input offsets, kMax only
};

/// Reduces over the given axes (sorted, unique); reduced axes are removed
/// from the shape, so reducing everything yields a rank-0 scalar.
ReduceResult reduce(ReduceOp op, const Tensor& x, const std::vector<int>& axes);

Tensor transpose2d(const Tensor& x);
Tensor reshape(const Tensor& x, Shape target);

}  // namespace laif
