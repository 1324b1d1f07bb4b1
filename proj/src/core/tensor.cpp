#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "core/gemm.hpp"

namespace laif {

bool Tensor::same_bits(const Tensor& other) const {
  return shape_ == other.shape_ &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

bool is_channel_broadcast(const Shape& a, const Shape& b) {
  return b.rank() == 1 && (a.rank() == 2 || a.rank() == 4) && a.dim(1) == b.dim(0);
}

namespace {

float apply_ew(EwOp op, float x, float y) {
  switch (op) {
    case EwOp::kAdd: return x + y;
    case EwOp::kSub: return x - y;
    case EwOp::kMul: return x * y;
    case EwOp::kDiv: return x / y;
  }
  return 0.0f;
}

void check_div(EwOp op, const Tensor& b) {
  if (op != EwOp::kDiv) return;
  for (std::int64_t i = 0; i < b.numel(); ++i)
    if (b[static_cast<std::size_t>(i)] == 0.0f) fail(ErrorKind::kDivisionByZero, "divisor element is zero");
}

}  // namespace

Tensor ew_binary(EwOp op, const Tensor& a, const Tensor& b) {
  check_div(op, b);
  Tensor out(a.shape());
  if (a.shape() == b.shape()) {
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = apply_ew(op, pa[i], pb[i]);
    return out;
  }
  if (!is_channel_broadcast(a.shape(), b.shape()))
    fail(ErrorKind::kShapeMismatch, "ew_binary " + a.shape().str() + " vs " + b.shape().str());
  const int channels = a.shape().dim(1);
  const std::int64_t outer = a.shape().dim(0);
  const std::int64_t inner = a.numel() / (outer * channels);
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  std::int64_t idx = 0;
  for (std::int64_t n = 0; n < outer; ++n)
    for (int c = 0; c < channels; ++c) {
      const float bv = pb[c];
      for (std::int64_t i = 0; i < inner; ++i, ++idx) po[idx] = apply_ew(op, pa[idx], bv);
    }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape().dim(1) != b.shape().dim(0))
    fail(ErrorKind::kShapeMismatch, "matmul " + a.shape().str() + " x " + b.shape().str());
  const int m = a.shape().dim(0), k = a.shape().dim(1), n = b.shape().dim(1);
  Tensor out(Shape{m, n});
  gemm(false, false, m, n, k, a.data(), b.data(), out.data(), 0.0f);
  return out;
}

namespace {

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, ho, wo;
};

ConvDims conv_dims(const Shape& x, const Shape& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
    fail(ErrorKind::kShapeMismatch, "conv2d input " + x.str() + " weight " + w.str());
  if (stride < 1 || pad < 0) fail(ErrorKind::kShapeMismatch, "conv2d stride/pad out of range");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0};
  const int ho_num = d.h + 2 * pad - d.kh;
  const int wo_num = d.w + 2 * pad - d.kw;
  if (ho_num < 0 || wo_num < 0) fail(ErrorKind::kNonPositiveOutput, "conv2d output would be empty");
  d.ho = ho_num / stride + 1;
  d.wo = wo_num / stride + 1;
  return d;
}

/// Unrolls one sample's padded patches into col[cin*kh*kw, ho*wo].
/// At stride 1 each output row reads a contiguous input span, so the body is a
/// memcpy plus zeroed edge columns; the generic path handles other strides.
void im2col(const float* x, const ConvDims& d, int stride, int pad, float* col) {
  const int plane = d.h * d.w;
  const int cols = d.ho * d.wo;
  for (int c = 0; c < d.cin; ++c) {
    const float* xc = x + static_cast<std::size_t>(c) * plane;
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        float* row = col + static_cast<std::size_t>((c * d.kh + ki) * d.kw + kj) * cols;
        for (int oh = 0; oh < d.ho; ++oh) {
          const int ih = oh * stride - pad + ki;
          float* dst = row + static_cast<std::size_t>(oh) * d.wo;
          if (ih < 0 || ih >= d.h) {
            std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(d.wo));
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(ih) * d.w;
          if (stride == 1) {
            // valid input columns are iw in [0, w); iw = ow - pad + kj
            const int lo = std::max(0, pad - kj);                  // first in-range ow
            const int hi = std::min(d.wo, d.w + pad - kj);         // one past last
            if (lo > 0) std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(lo));
            if (hi > lo)
              std::memcpy(dst + lo, src + (lo - pad + kj), sizeof(float) * static_cast<std::size_t>(hi - lo));
            if (hi < d.wo) std::memset(dst + hi, 0, sizeof(float) * static_cast<std::size_t>(d.wo - hi));
            continue;
          }
          int iw = -pad + kj;
          for (int ow = 0; ow < d.wo; ++ow, iw += stride)
            dst[ow] = (iw >= 0 && iw < d.w) ? src[iw] : 0.0f;
        }
      }
  }
}

/// Scatter-adds col[cin*kh*kw, ho*wo] back onto one sample's image.
void col2im(const float* col, const ConvDims& d, int stride, int pad, float* x) {
  const int plane = d.h * d.w;
  const int cols = d.ho * d.wo;
  for (int c = 0; c < d.cin; ++c) {
    float* xc = x + static_cast<std::size_t>(c) * plane;
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        const float* row = col + static_cast<std::size_t>((c * d.kh + ki) * d.kw + kj) * cols;
        for (int oh = 0; oh < d.ho; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= d.h) continue;
          const float* src = row + static_cast<std::size_t>(oh) * d.wo;
          float* dst = xc + static_cast<std::size_t>(ih) * d.w;
          if (stride == 1) {
            const int lo = std::max(0, pad - kj);
            const int hi = std::min(d.wo, d.w + pad - kj);
            const float* s = src + lo;
            float* t = dst + (lo - pad + kj);
            for (int i = 0; i < hi - lo; ++i) t[i] += s[i];
            continue;
          }
          int iw = -pad + kj;
          for (int ow = 0; ow < d.wo; ++ow, iw += stride)
            if (iw >= 0 && iw < d.w) dst[iw] += src[ow];
        }
      }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad);
  if (b.shape() != Shape{d.cout}) fail(ErrorKind::kShapeMismatch, "conv2d bias " + b.shape().str());
  Tensor out(Shape{d.n, d.cout, d.ho, d.wo});
  const int kdim = d.cin * d.kh * d.kw;
  const int cols = d.ho * d.wo;
  std::vector<float> col(static_cast<std::size_t>(kdim) * cols);
  const std::size_t x_stride = static_cast<std::size_t>(d.cin) * d.h * d.w;
  const std::size_t y_stride = static_cast<std::size_t>(d.cout) * cols;
  for (int n = 0; n < d.n; ++n) {
    im2col(x.data() + n * x_stride, d, stride, pad, col.data());
    float* y = out.data() + n * y_stride;
    gemm(false, false, d.cout, cols, kdim, w.data(), col.data(), y, 0.0f);
    for (int co = 0; co < d.cout; ++co) {
      const float bias = b[static_cast<std::size_t>(co)];
      float* yc = y + static_cast<std::size_t>(co) * cols;
      for (int i = 0; i < cols; ++i) yc[i] += bias;
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& dy) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad);
  if (dy.shape() != Shape{d.n, d.cout, d.ho, d.wo})
    fail(ErrorKind::kShapeMismatch, "conv2d_backward dy " + dy.shape().str());
  Conv2dGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor(Shape{d.cout})};
  const int kdim = d.cin * d.kh * d.kw;
  const int cols = d.ho * d.wo;
  std::vector<float> col(static_cast<std::size_t>(kdim) * cols);
  std::vector<float> dcol(static_cast<std::size_t>(kdim) * cols);
  const std::size_t x_stride = static_cast<std::size_t>(d.cin) * d.h * d.w;
  const std::size_t y_stride = static_cast<std::size_t>(d.cout) * cols;
  std::vector<double> db(static_cast<std::size_t>(d.cout), 0.0);
  for (int n = 0; n < d.n; ++n) {
    const float* dyn = dy.data() + n * y_stride;
    // dcol = W^T . dy_n, scattered back to the input image
    gemm(true, false, kdim, cols, d.cout, w.data(), dyn, dcol.data(), 0.0f);
    col2im(dcol.data(), d, stride, pad, g.dx.data() + n * x_stride);
    // dW += dy_n . col^T, recomputing the unrolled patches; the recompute hits
    // a warm reused buffer and measures faster than caching them across passes
    im2col(x.data() + n * x_stride, d, stride, pad, col.data());
    gemm(false, true, d.cout, kdim, cols, dyn, col.data(), g.dw.data(), 1.0f);
    for (int co = 0; co < d.cout; ++co) {
      const float* row = dyn + static_cast<std::size_t>(co) * cols;
      double acc = 0.0;
      for (int i = 0; i < cols; ++i) acc += row[i];
      db[static_cast<std::size_t>(co)] += acc;
    }
  }
  for (int co = 0; co < d.cout; ++co) g.db[static_cast<std::size_t>(co)] = static_cast<float>(db[static_cast<std::size_t>(co)]);
  return g;
}

MaxPoolResult maxpool2d(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.rank() != 4) fail(ErrorKind::kShapeMismatch, "maxpool2d input " + s.str());
  const int n = s.dim(0), c = s.dim(1), h = s.dim(2), w = s.dim(3);
  if (h % 2 != 0 || w % 2 != 0) fail(ErrorKind::kShapeMismatch, "maxpool2d needs even H,W, got " + s.str());
  const int ho = h / 2, wo = w / 2;
  MaxPoolResult r{Tensor(Shape{n, c, ho, wo}), {}};
  r.argmax.resize(static_cast<std::size_t>(r.y.numel()));
  std::size_t oi = 0;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * h * w;
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow, ++oi) {
          std::size_t best = base + static_cast<std::size_t>(2 * oh) * w + 2 * ow;
          float bv = x[best];
          for (int a = 0; a < 2; ++a)
            for (int bcol = 0; bcol < 2; ++bcol) {
              const std::size_t idx = base + static_cast<std::size_t>(2 * oh + a) * w + (2 * ow + bcol);
              if (x[idx] > bv) {
                bv = x[idx];
                best = idx;
              }
            }
          r.y[oi] = bv;
          r.argmax[oi] = static_cast<std::int32_t>(best);
        }
    }
  return r;
}

Tensor maxpool2d_backward(const Shape& x_shape, const std::vector<std::int32_t>& argmax, const Tensor& dy) {
  Tensor dx(x_shape);
  if (static_cast<std::int64_t>(argmax.size()) != dy.numel())
    fail(ErrorKind::kShapeMismatch, "maxpool2d_backward argmax/dy length mismatch");
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[static_cast<std::size_t>(argmax[i])] += dy[i];
  return dx;
}

Tensor upsample_nearest2x(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.rank() != 4) fail(ErrorKind::kShapeMismatch, "upsample_nearest2x input " + s.str());
  const int n = s.dim(0), c = s.dim(1), h = s.dim(2), w = s.dim(3);
  Tensor out(Shape{n, c, 2 * h, 2 * w});
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const float* src = x.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
      float* dst = out.data() + (static_cast<std::size_t>(ni) * c + ci) * 4 * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const float v = src[static_cast<std::size_t>(i) * w + j];
          float* row = dst + static_cast<std::size_t>(2 * i) * 2 * w + 2 * j;
          row[0] = v;
          row[1] = v;
          row[2 * w] = v;
          row[2 * w + 1] = v;
        }
    }
  return out;
}

Tensor upsample_nearest2x_backward(const Tensor& dy) {
  const Shape& s = dy.shape();
  if (s.rank() != 4 || s.dim(2) % 2 != 0 || s.dim(3) % 2 != 0)
    fail(ErrorKind::kShapeMismatch, "upsample_nearest2x_backward dy " + s.str());
  const int n = s.dim(0), c = s.dim(1), h = s.dim(2) / 2, w = s.dim(3) / 2;
  Tensor dx(Shape{n, c, h, w});
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      float* dst = dx.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
      const float* src = dy.data() + (static_cast<std::size_t>(ni) * c + ci) * 4 * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const float* row = src + static_cast<std::size_t>(2 * i) * 2 * w + 2 * j;
          dst[static_cast<std::size_t>(i) * w + j] = (row[0] + row[1]) + (row[2 * w] + row[2 * w + 1]);
        }
    }
  return dx;
}

ReduceResult reduce(ReduceOp op, const Tensor& x, const std::vector<int>& axes) {
  const Shape& s = x.shape();
  std::vector<bool> reduced(static_cast<std::size_t>(s.rank()), false);
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const int a = axes[i];
    if (a < 0 || a >= s.rank()) fail(ErrorKind::kShapeMismatch, "reduce axis out of range for " + s.str());
    if (reduced[static_cast<std::size_t>(a)]) fail(ErrorKind::kShapeMismatch, "duplicate reduce axis");
    reduced[static_cast<std::size_t>(a)] = true;
  }
  std::vector<int> out_dims;
  std::int64_t group = 1;
  for (int i = 0; i < s.rank(); ++i) {
    if (reduced[static_cast<std::size_t>(i)])
      group *= s.dim(i);
    else
      out_dims.push_back(s.dim(i));
  }
  ReduceResult r{Tensor(Shape(out_dims)), {}};
  const std::int64_t out_n = r.y.numel();

  // strides of x, and the out-index contribution of each kept axis
  std::vector<std::int64_t> stride(static_cast<std::size_t>(s.rank()), 1);
  for (int i = s.rank() - 2; i >= 0; --i)
    stride[static_cast<std::size_t>(i)] = stride[static_cast<std::size_t>(i + 1)] * s.dim(i + 1);

  std::vector<double> acc;
  std::vector<float> best;
  if (op == ReduceOp::kMax) {
    best.assign(static_cast<std::size_t>(out_n), 0.0f);
    r.argmax.assign(static_cast<std::size_t>(out_n), -1);
  } else {
    acc.assign(static_cast<std::size_t>(out_n), 0.0);
  }

  const std::int64_t total = x.numel();
  for (std::int64_t flat = 0; flat < total; ++flat) {
    std::int64_t rem = flat;
    std::int64_t out_idx = 0;
    for (int i = 0; i < s.rank(); ++i) {
      const std::int64_t coord = rem / stride[static_cast<std::size_t>(i)];
      rem %= stride[static_cast<std::size_t>(i)];
      if (!reduced[static_cast<std::size_t>(i)]) out_idx = out_idx * s.dim(i) + coord;
    }
    const float v = x[static_cast<std::size_t>(flat)];
    if (op == ReduceOp::kMax) {
      auto& am = r.argmax[static_cast<std::size_t>(out_idx)];
      if (am < 0 || v > best[static_cast<std::size_t>(out_idx)]) {
        best[static_cast<std::size_t>(out_idx)] = v;
        am = static_cast<std::int32_t>(flat);
      }
    } else {
      acc[static_cast<std::size_t>(out_idx)] += v;
    }
  }
  for (std::int64_t i = 0; i < out_n; ++i) {
    switch (op) {
      case ReduceOp::kSum: r.y[static_cast<std::size_t>(i)] = static_cast<float>(acc[static_cast<std::size_t>(i)]); break;
      case ReduceOp::kMean: r.y[static_cast<std::size_t>(i)] = static_cast<float>(acc[static_cast<std::size_t>(i)] / static_cast<double>(group)); break;
      case ReduceOp::kMax: r.y[static_cast<std::size_t>(i)] = best[static_cast<std::size_t>(i)]; break;
    }
  }
  return r;
}

Tensor transpose2d(const Tensor& x) {
  if (x.shape().rank() != 2) fail(ErrorKind::kShapeMismatch, "transpose2d input " + x.shape().str());
  const int m = x.shape().dim(0), n = x.shape().dim(1);
  Tensor out(Shape{n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = x[static_cast<std::size_t>(i) * n + j];
  return out;
}

Tensor reshape(const Tensor& x, Shape target) {
  if (target.numel() != x.numel())
    fail(ErrorKind::kShapeMismatch, "reshape " + x.shape().str() + " -> " + target.str());
  return Tensor(std::move(target), x.values());
}

}  // namespace laif
