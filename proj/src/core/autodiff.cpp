#include "core/autodiff.hpp"

#include <cmath>
#include <utility>

#include "core/gemm.hpp"

namespace laif {

void ParamSlot::accumulate(const Tensor& g) {
  if (g.shape() != value.shape())
    fail(ErrorKind::kShapeMismatch, "gradient shape " + g.shape().str() + " for param " + name);
  if (!has_grad) {
    grad = g;
    has_grad = true;
    return;
  }
  float* pg = grad.data();
  const float* ps = g.data();
  const std::int64_t n = grad.numel();
  for (std::int64_t i = 0; i < n; ++i) pg[i] += ps[i];
}

void ParamSlot::clear_grad() {
  grad = Tensor(value.shape());
  has_grad = false;
}

namespace {

/// Sums g over every axis except axis 1; g is rank 2 or 4 with dim(1)==channels.
Tensor sum_to_channel(const Tensor& g, int channels) {
  Tensor out(Shape{channels});
  std::vector<double> acc(static_cast<std::size_t>(channels), 0.0);
  const std::int64_t outer = g.shape().dim(0);
  const std::int64_t inner = g.numel() / (outer * channels);
  const float* p = g.data();
  std::int64_t idx = 0;
  for (std::int64_t n = 0; n < outer; ++n)
    for (int c = 0; c < channels; ++c)
      for (std::int64_t i = 0; i < inner; ++i, ++idx) acc[static_cast<std::size_t>(c)] += p[idx];
  for (int c = 0; c < channels; ++c) out[static_cast<std::size_t>(c)] = static_cast<float>(acc[static_cast<std::size_t>(c)]);
  return out;
}

Tensor negate(Tensor t) {
  float* p = t.data();
  const std::int64_t n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) p[i] = -p[i];
  return t;
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), requires_grad && grads_enabled_});
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node_at(Var v) const {
  if (v.tape != this || v.node < 0 || v.node >= static_cast<std::int32_t>(nodes_.size()))
    fail(ErrorKind::kTapeMismatch, "variable does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.node)];
}

void Tape::accumulate_node(std::int32_t idx, Tensor g) {
  if (!nodes_[static_cast<std::size_t>(idx)].requires_grad) return;
  if (!grad_set_[static_cast<std::size_t>(idx)]) {
    grads_[static_cast<std::size_t>(idx)] = std::move(g);
    grad_set_[static_cast<std::size_t>(idx)] = 1;
    return;
  }
  float* pa = grads_[static_cast<std::size_t>(idx)].data();
  const float* pb = g.data();
  const std::int64_t n = g.numel();
  for (std::int64_t i = 0; i < n; ++i) pa[i] += pb[i];
}

void Tape::record(std::int32_t out, std::function<void(const Tensor&)> pull) {
  if (!nodes_[static_cast<std::size_t>(out)].requires_grad) return;
  records_.push_back(Record{out, std::move(pull)});
}

Var Tape::constant(Tensor value) { return push(std::move(value), false); }

Var Tape::param(ParamSlot& slot) {
  Var v = push(slot.value, true);
  ParamSlot* s = &slot;
  record(v.node, [s](const Tensor& dy) { s->accumulate(dy); });
  return v;
}

const Tensor& Tape::value(Var v) const { return node_at(v).value; }

Var Tape::ew(EwOp op, Var a, Var b) {
  const Tensor& va = node_at(a).value;
  const Tensor& vb = node_at(b).value;
  const bool broadcast = !(va.shape() == vb.shape());
  Var out = push(ew_binary(op, va, vb), needs_grad(a) || needs_grad(b));
  const std::int32_t ia = a.node, ib = b.node;
  record(out.node, [this, op, ia, ib, broadcast](const Tensor& dy) {
    const Tensor& va = nodes_[static_cast<std::size_t>(ia)].value;
    const Tensor& vb = nodes_[static_cast<std::size_t>(ib)].value;
    const int channels = broadcast ? vb.shape().dim(0) : 0;
    switch (op) {
      case EwOp::kAdd:
        if (needs_grad(Var{this, ia})) accumulate_node(ia, dy);
        if (needs_grad(Var{this, ib})) accumulate_node(ib, broadcast ? sum_to_channel(dy, channels) : dy);
        break;
      case EwOp::kSub:
        if (needs_grad(Var{this, ia})) accumulate_node(ia, dy);
        if (needs_grad(Var{this, ib}))
          accumulate_node(ib, negate(broadcast ? sum_to_channel(dy, channels) : dy));
        break;
      case EwOp::kMul:
        if (needs_grad(Var{this, ia})) accumulate_node(ia, ew_binary(EwOp::kMul, dy, vb));
        if (needs_grad(Var{this, ib})) {
          Tensor full = ew_binary(EwOp::kMul, dy, va);
          accumulate_node(ib, broadcast ? sum_to_channel(full, channels) : std::move(full));
        }
        break;
      case EwOp::kDiv:
        if (needs_grad(Var{this, ia})) accumulate_node(ia, ew_binary(EwOp::kDiv, dy, vb));
        if (needs_grad(Var{this, ib})) {
          Tensor num = ew_binary(EwOp::kMul, dy, va);
          Tensor den = ew_binary(EwOp::kMul, vb, vb);
          Tensor full = negate(ew_binary(EwOp::kDiv, num, den));
          accumulate_node(ib, broadcast ? sum_to_channel(full, channels) : std::move(full));
        }
        break;
    }
  });
  return out;
}

Var Tape::add(Var a, Var b) { return ew(EwOp::kAdd, a, b); }
Var Tape::sub(Var a, Var b) { return ew(EwOp::kSub, a, b); }
Var Tape::mul(Var a, Var b) { return ew(EwOp::kMul, a, b); }
Var Tape::div(Var a, Var b) { return ew(EwOp::kDiv, a, b); }

Var Tape::matmul(Var a, Var b) {
  const Tensor& va = node_at(a).value;
  const Tensor& vb = node_at(b).value;
  Var out = push(laif::matmul(va, vb), needs_grad(a) || needs_grad(b));
  const std::int32_t ia = a.node, ib = b.node;
  record(out.node, [this, ia, ib](const Tensor& dy) {
    const Tensor& va = nodes_[static_cast<std::size_t>(ia)].value;
    const Tensor& vb = nodes_[static_cast<std::size_t>(ib)].value;
    const int m = va.shape().dim(0), k = va.shape().dim(1), n = vb.shape().dim(1);
    if (needs_grad(Var{this, ia})) {
      Tensor da(va.shape());
      gemm(false, true, m, k, n, dy.data(), vb.data(), da.data(), 0.0f);
      accumulate_node(ia, std::move(da));
    }
    if (needs_grad(Var{this, ib})) {
      Tensor db(vb.shape());
      gemm(true, false, k, n, m, va.data(), dy.data(), db.data(), 0.0f);
      accumulate_node(ib, std::move(db));
    }
  });
  return out;
}

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& vx = node_at(x).value;
  const Tensor& vw = node_at(w).value;
  const Tensor& vb = node_at(b).value;
  Var out = push(laif::conv2d(vx, vw, vb, stride, pad), needs_grad(x) || needs_grad(w) || needs_grad(b));
  const std::int32_t ix = x.node, iw = w.node, ib = b.node;
  record(out.node, [this, ix, iw, ib, stride, pad](const Tensor& dy) {
    const Tensor& vx = nodes_[static_cast<std::size_t>(ix)].value;
    const Tensor& vw = nodes_[static_cast<std::size_t>(iw)].value;
    Conv2dGrads g = conv2d_backward(vx, vw, stride, pad, dy);
    accumulate_node(ix, std::move(g.dx));
    accumulate_node(iw, std::move(g.dw));
    accumulate_node(ib, std::move(g.db));
  });
  return out;
}

Var Tape::maxpool2(Var x) {
  MaxPoolResult r = maxpool2d(node_at(x).value);
  const Shape x_shape = node_at(x).value.shape();
  Var out = push(std::move(r.y), needs_grad(x));
  const std::int32_t ix = x.node;
  record(out.node, [this, ix, x_shape, argmax = std::move(r.argmax)](const Tensor& dy) {
    accumulate_node(ix, maxpool2d_backward(x_shape, argmax, dy));
  });
  return out;
}

Var Tape::upsample2x(Var x) {
  Var out = push(upsample_nearest2x(node_at(x).value), needs_grad(x));
  const std::int32_t ix = x.node;
  record(out.node, [this, ix](const Tensor& dy) { accumulate_node(ix, upsample_nearest2x_backward(dy)); });
  return out;
}

Var Tape::reshape(Var x, Shape target) {
  const Shape x_shape = node_at(x).value.shape();
  Var out = push(laif::reshape(node_at(x).value, std::move(target)), needs_grad(x));
  const std::int32_t ix = x.node;
  record(out.node, [this, ix, x_shape](const Tensor& dy) { accumulate_node(ix, laif::reshape(dy, x_shape)); });
  return out;
}

Var Tape::transpose(Var x) {
  Var out = push(transpose2d(node_at(x).value), needs_grad(x));
  const std::int32_t ix = x.node;
  record(out.node, [this, ix](const Tensor& dy) { accumulate_node(ix, transpose2d(dy)); });
  return out;
}

Var Tape::relu(Var x) {
  const Tensor& vx = node_at(x).value;
  Tensor y(vx.shape());
  const float* px = vx.data();
  float* py = y.data();
  const std::int64_t n = vx.numel();
  for (std::int64_t i = 0; i < n; ++i) py[i] = px[i] > 0.0f ? px[i] : 0.0f;
  Var out = push(std::move(y), needs_grad(x));
  const std::int32_t ix = x.node;
  record(out.node, [this, ix](const Tensor& dy) {
    const Tensor& vx = nodes_[static_cast<std::size_t>(ix)].value;
    Tensor dx(vx.shape());
    const float* px = vx.data();
    const float* pd = dy.data();
    float* po = dx.data();
    const std::int64_t n = vx.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > 0.0f ? pd[i] : 0.0f;
    accumulate_node(ix, std::move(dx));
  });
  return out;
}

Var Tape::leaky_relu(Var x, float slope) {
  const Tensor& vx = node_at(x).value;
  Tensor y(vx.shape());
  const float* px = vx.data();
  float* py = y.data();
  const std::int64_t n = vx.numel();
  for (std::int64_t i = 0; i < n; ++i) py[i] = px[i] > 0.0f ? px[i] : slope * px[i];
  Var out = push(std::move(y), needs_grad(x));
  const std::int32_t ix = x.node;
  record(out.node, [this, ix, slope](const Tensor& dy) {
    const Tensor& vx = nodes_[static_cast<std::size_t>(ix)].value;
    Tensor dx(vx.shape());
    const float* px = vx.data();
    const float* pd = dy.data();
    float* po = dx.data();
    const std::int64_t n = vx.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > 0.0f ? pd[i] : slope * pd[i];
    accumulate_node(ix, std::move(dx));
  });
  return out;
}

Var Tape::tanh(Var x) {
  const Tensor& vx = node_at(x).value;
  Tensor y(vx.shape());
  const float* px = vx.data();
  float* py = y.data();
  const std::int64_t n = vx.numel();
  for (std::int64_t i = 0; i < n; ++i) py[i] = std::tanh(px[i]);
  Var out = push(std::move(y), needs_grad(x));
  const std::int32_t ix = x.node, iy = out.node;
  record(out.node, [this, ix, iy](const Tensor& dy) {
    const Tensor& vy = nodes_[static_cast<std::size_t>(iy)].value;
    Tensor dx(vy.shape());
    const float* py = vy.data();
    const float* pd = dy.data();
    float* po = dx.data();
    const std::int64_t n = vy.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pd[i] * (1.0f - py[i] * py[i]);
    accumulate_node(ix, std::move(dx));
  });
  return out;
}

Var Tape::sigmoid(Var x) {
  const Tensor& vx = node_at(x).value;
  Tensor y(vx.shape());
  const float* px = vx.data();
  float* py = y.data();
  const std::int64_t n = vx.numel();
  for (std::int64_t i = 0; i < n; ++i) py[i] = 1.0f / (1.0f + std::exp(-px[i]));
  Var out = push(std::move(y), needs_grad(x));
  const std::int32_t ix = x.node, iy = out.node;
  record(out.node, [this, ix, iy](const Tensor& dy) {
    const Tensor& vy = nodes_[static_cast<std::size_t>(iy)].value;
    Tensor dx(vy.shape());
    const float* py = vy.data();
    const float* pd = dy.data();
    float* po = dx.data();
    const std::int64_t n = vy.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pd[i] * py[i] * (1.0f - py[i]);
    accumulate_node(ix, std::move(dx));
  });
  return out;
}

Var Tape::dropout2d(Var x, float p, Rng& rng) {
  const Tensor& vx = node_at(x).value;
  if (vx.shape().rank() != 4) fail(ErrorKind::kShapeMismatch, "dropout2d input " + vx.shape().str());
  if (!(p >= 0.0f && p < 1.0f)) fail(ErrorKind::kBadProbability, "dropout2d rate must be in [0,1)");
  const int n = vx.shape().dim(0), c = vx.shape().dim(1);
  const std::int64_t plane = vx.numel() / (static_cast<std::int64_t>(n) * c);
  const float keep_scale = 1.0f / (1.0f - p);
  std::vector<float> mask(static_cast<std::size_t>(n) * c);
  for (auto& m : mask) m = rng.uniform_float() < p ? 0.0f : keep_scale;
  Tensor y(vx.shape());
  const float* px = vx.data();
  float* py = y.data();
  std::int64_t idx = 0;
  for (std::size_t nc = 0; nc < mask.size(); ++nc)
    for (std::int64_t i = 0; i < plane; ++i, ++idx) py[idx] = px[idx] * mask[nc];
  Var out = push(std::move(y), needs_grad(x));
  const std::int32_t ix = x.node;
  record(out.node, [this, ix, plane, mask = std::move(mask)](const Tensor& dy) {
    Tensor dx(dy.shape());
    const float* pd = dy.data();
    float* po = dx.data();
    std::int64_t idx = 0;
    for (std::size_t nc = 0; nc < mask.size(); ++nc)
      for (std::int64_t i = 0; i < plane; ++i, ++idx) po[idx] = pd[idx] * mask[nc];
    accumulate_node(ix, std::move(dx));
  });
  return out;
}

namespace {

void check_bn_shapes(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  const Shape& s = x.shape();
  if (s.rank() != 2 && s.rank() != 4)
    fail(ErrorKind::kShapeMismatch, "batch norm input " + s.str());
  const Shape want{s.dim(1)};
  if (gamma.shape() != want || beta.shape() != want)
    fail(ErrorKind::kShapeMismatch, "batch norm affine params for " + s.str());
}

// Per-channel sums of dy and dy * xhat, where xhat = (x - mean) * inv_std.
// Four channels run side by side: each channel keeps its own serial chain,
// so per-channel rounding order is unchanged, while the independent chains
// overlap and hide the FP add latency.
void bn_grad_sums(const float* pd, const float* px, const std::vector<float>& mean_f,
                  const std::vector<float>& inv_std, std::int64_t outer, int channels,
                  std::int64_t inner, std::vector<double>& sum_dy, std::vector<double>& sum_dy_h) {
  for (std::int64_t n = 0; n < outer; ++n) {
    const std::int64_t row = n * channels * inner;
    int c = 0;
    for (; c + 4 <= channels; c += 4) {
      const std::size_t u = static_cast<std::size_t>(c);
      const float* d0 = pd + row + (c + 0) * inner;
      const float* d1 = pd + row + (c + 1) * inner;
      const float* d2 = pd + row + (c + 2) * inner;
      const float* d3 = pd + row + (c + 3) * inner;
      const float* x0 = px + row + (c + 0) * inner;
      const float* x1 = px + row + (c + 1) * inner;
      const float* x2 = px + row + (c + 2) * inner;
      const float* x3 = px + row + (c + 3) * inner;
      const float mu0 = mean_f[u], is0 = inv_std[u];
      const float mu1 = mean_f[u + 1], is1 = inv_std[u + 1];
      const float mu2 = mean_f[u + 2], is2 = inv_std[u + 2];
      const float mu3 = mean_f[u + 3], is3 = inv_std[u + 3];
      double a0 = sum_dy[u], h0 = sum_dy_h[u];
      double a1 = sum_dy[u + 1], h1 = sum_dy_h[u + 1];
      double a2 = sum_dy[u + 2], h2 = sum_dy_h[u + 2];
      double a3 = sum_dy[u + 3], h3 = sum_dy_h[u + 3];
      for (std::int64_t i = 0; i < inner; ++i) {
        a0 += d0[i]; h0 += static_cast<double>(d0[i]) * ((x0[i] - mu0) * is0);
        a1 += d1[i]; h1 += static_cast<double>(d1[i]) * ((x1[i] - mu1) * is1);
        a2 += d2[i]; h2 += static_cast<double>(d2[i]) * ((x2[i] - mu2) * is2);
        a3 += d3[i]; h3 += static_cast<double>(d3[i]) * ((x3[i] - mu3) * is3);
      }
      sum_dy[u] = a0;  sum_dy_h[u] = h0;
      sum_dy[u + 1] = a1;  sum_dy_h[u + 1] = h1;
      sum_dy[u + 2] = a2;  sum_dy_h[u + 2] = h2;
      sum_dy[u + 3] = a3;  sum_dy_h[u + 3] = h3;
    }
    for (; c < channels; ++c) {
      const std::size_t u = static_cast<std::size_t>(c);
      const float* d = pd + row + c * inner;
      const float* xp = px + row + c * inner;
      const float mu = mean_f[u], is = inv_std[u];
      double a = sum_dy[u], h = sum_dy_h[u];
      for (std::int64_t i = 0; i < inner; ++i) {
        a += d[i];
        h += static_cast<double>(d[i]) * ((xp[i] - mu) * is);
      }
      sum_dy[u] = a;
      sum_dy_h[u] = h;
    }
  }
}

}  // namespace

Tape::BatchNormOut Tape::batchnorm_train(Var x, Var gamma, Var beta, float eps) {
  const Tensor& vx = node_at(x).value;
  const Tensor& vg = node_at(gamma).value;
  const Tensor& vbt = node_at(beta).value;
  check_bn_shapes(vx, vg, vbt);
  const int channels = vx.shape().dim(1);
  const std::int64_t outer = vx.shape().dim(0);
  const std::int64_t inner = vx.numel() / (outer * channels);
  const std::int64_t m = outer * inner;
  if (m < 2) fail(ErrorKind::kDegenerateBatch, "batch norm needs at least 2 values per channel");

  // Four channels are accumulated side by side: each channel keeps its own
  // serial chain (so per-channel rounding order is unchanged), but the
  // independent chains overlap and hide the FP add latency.
  std::vector<double> sum(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> sumsq(static_cast<std::size_t>(channels), 0.0);
  const float* px = vx.data();
  for (std::int64_t n = 0; n < outer; ++n) {
    const float* base = px + n * channels * inner;
    int c = 0;
    for (; c + 4 <= channels; c += 4) {
      const float* p0 = base + (c + 0) * inner;
      const float* p1 = base + (c + 1) * inner;
      const float* p2 = base + (c + 2) * inner;
      const float* p3 = base + (c + 3) * inner;
      double s0 = sum[static_cast<std::size_t>(c)], q0 = sumsq[static_cast<std::size_t>(c)];
      double s1 = sum[static_cast<std::size_t>(c) + 1], q1 = sumsq[static_cast<std::size_t>(c) + 1];
      double s2 = sum[static_cast<std::size_t>(c) + 2], q2 = sumsq[static_cast<std::size_t>(c) + 2];
      double s3 = sum[static_cast<std::size_t>(c) + 3], q3 = sumsq[static_cast<std::size_t>(c) + 3];
      for (std::int64_t i = 0; i < inner; ++i) {
        const double v0 = p0[i], v1 = p1[i], v2 = p2[i], v3 = p3[i];
        s0 += v0; q0 += v0 * v0;
        s1 += v1; q1 += v1 * v1;
        s2 += v2; q2 += v2 * v2;
        s3 += v3; q3 += v3 * v3;
      }
      sum[static_cast<std::size_t>(c)] = s0;  sumsq[static_cast<std::size_t>(c)] = q0;
      sum[static_cast<std::size_t>(c) + 1] = s1;  sumsq[static_cast<std::size_t>(c) + 1] = q1;
      sum[static_cast<std::size_t>(c) + 2] = s2;  sumsq[static_cast<std::size_t>(c) + 2] = q2;
      sum[static_cast<std::size_t>(c) + 3] = s3;  sumsq[static_cast<std::size_t>(c) + 3] = q3;
    }
    for (; c < channels; ++c) {
      const float* p = base + c * inner;
      double s = sum[static_cast<std::size_t>(c)], q = sumsq[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < inner; ++i) {
        const double v = p[i];
        s += v; q += v * v;
      }
      sum[static_cast<std::size_t>(c)] = s;
      sumsq[static_cast<std::size_t>(c)] = q;
    }
  }

  Tensor mean(Shape{channels});
  Tensor var(Shape{channels});
  std::vector<float> inv_std(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    const double mu = sum[static_cast<std::size_t>(c)] / static_cast<double>(m);
    double v = sumsq[static_cast<std::size_t>(c)] / static_cast<double>(m) - mu * mu;
    if (v < 0.0) v = 0.0;  // guard tiny negative from cancellation
    mean[static_cast<std::size_t>(c)] = static_cast<float>(mu);
    var[static_cast<std::size_t>(c)] = static_cast<float>(v);
    inv_std[static_cast<std::size_t>(c)] = static_cast<float>(1.0 / std::sqrt(v + static_cast<double>(eps)));
  }

  Tensor y(vx.shape());
  float* py = y.data();
  std::int64_t idx = 0;
  for (std::int64_t n = 0; n < outer; ++n)
    for (int c = 0; c < channels; ++c) {
      const float mu = mean[static_cast<std::size_t>(c)];
      const float is = inv_std[static_cast<std::size_t>(c)];
      const float g = vg[static_cast<std::size_t>(c)];
      const float bt = vbt[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < inner; ++i, ++idx) {
        const float h = (px[idx] - mu) * is;
        py[idx] = g * h + bt;
      }
    }

  // The backward recomputes xhat from the saved input instead of storing a
  // full normalized copy; same float expression, so results are bit-equal.
  std::vector<float> mean_f(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) mean_f[static_cast<std::size_t>(c)] = mean[static_cast<std::size_t>(c)];

  Var out = push(std::move(y), needs_grad(x) || needs_grad(gamma) || needs_grad(beta));
  const std::int32_t ix = x.node, ig = gamma.node, ib = beta.node;
  record(out.node, [this, ix, ig, ib, channels, outer, inner, m, inv_std = std::move(inv_std),
                    mean_f = std::move(mean_f)](const Tensor& dy) {
    const Tensor& vx = nodes_[static_cast<std::size_t>(ix)].value;
    const Tensor& vg = nodes_[static_cast<std::size_t>(ig)].value;
    std::vector<double> sum_dy(static_cast<std::size_t>(channels), 0.0);
    std::vector<double> sum_dy_h(static_cast<std::size_t>(channels), 0.0);
    const float* pd = dy.data();
    const float* px = vx.data();
    bn_grad_sums(pd, px, mean_f, inv_std, outer, channels, inner, sum_dy, sum_dy_h);
    Tensor dgamma(Shape{channels});
    Tensor dbeta(Shape{channels});
    for (int c = 0; c < channels; ++c) {
      dgamma[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy_h[static_cast<std::size_t>(c)]);
      dbeta[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy[static_cast<std::size_t>(c)]);
    }
    if (needs_grad(Var{this, ix})) {
      Tensor dx(vx.shape());
      float* po = dx.data();
      std::int64_t idx = 0;
      for (std::int64_t n = 0; n < outer; ++n)
        for (int c = 0; c < channels; ++c) {
          const float mu = mean_f[static_cast<std::size_t>(c)];
          const float is = inv_std[static_cast<std::size_t>(c)];
          const float scale = vg[static_cast<std::size_t>(c)] * is;
          const float mean_dy = static_cast<float>(sum_dy[static_cast<std::size_t>(c)] / static_cast<double>(m));
          const float mean_dy_h = static_cast<float>(sum_dy_h[static_cast<std::size_t>(c)] / static_cast<double>(m));
          for (std::int64_t i = 0; i < inner; ++i, ++idx)
            po[idx] = scale * (pd[idx] - mean_dy - ((px[idx] - mu) * is) * mean_dy_h);
        }
      accumulate_node(ix, std::move(dx));
    }
    accumulate_node(ig, std::move(dgamma));
    accumulate_node(ib, std::move(dbeta));
  });
  return BatchNormOut{out, std::move(mean), std::move(var)};
}

Var Tape::batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var, float eps) {
  const Tensor& vx = node_at(x).value;
  const Tensor& vg = node_at(gamma).value;
  const Tensor& vbt = node_at(beta).value;
  check_bn_shapes(vx, vg, vbt);
  const int channels = vx.shape().dim(1);
  if (mean.shape() != Shape{channels} || var.shape() != Shape{channels})
    fail(ErrorKind::kShapeMismatch, "batch norm running stats for " + vx.shape().str());
  const std::int64_t outer = vx.shape().dim(0);
  const std::int64_t inner = vx.numel() / (outer * channels);

  std::vector<float> inv_std(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c)
    inv_std[static_cast<std::size_t>(c)] =
        static_cast<float>(1.0 / std::sqrt(static_cast<double>(var[static_cast<std::size_t>(c)]) + static_cast<double>(eps)));

  Tensor y(vx.shape());
  const float* px = vx.data();
  float* py = y.data();
  std::int64_t idx = 0;
  for (std::int64_t n = 0; n < outer; ++n)
    for (int c = 0; c < channels; ++c) {
      const float mu = mean[static_cast<std::size_t>(c)];
      const float is = inv_std[static_cast<std::size_t>(c)];
      const float g = vg[static_cast<std::size_t>(c)];
      const float bt = vbt[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < inner; ++i, ++idx) {
        const float h = (px[idx] - mu) * is;
        py[idx] = g * h + bt;
      }
    }

  std::vector<float> mean_f(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) mean_f[static_cast<std::size_t>(c)] = mean[static_cast<std::size_t>(c)];

  Var out = push(std::move(y), needs_grad(x) || needs_grad(gamma) || needs_grad(beta));
  const std::int32_t ix = x.node, ig = gamma.node, ib = beta.node;
  record(out.node, [this, ix, ig, ib, channels, outer, inner, inv_std = std::move(inv_std),
                    mean_f = std::move(mean_f)](const Tensor& dy) {
    const Tensor& vx = nodes_[static_cast<std::size_t>(ix)].value;
    const Tensor& vg = nodes_[static_cast<std::size_t>(ig)].value;
    std::vector<double> sum_dy(static_cast<std::size_t>(channels), 0.0);
    std::vector<double> sum_dy_h(static_cast<std::size_t>(channels), 0.0);
    const float* pd = dy.data();
    const float* px = vx.data();
    bn_grad_sums(pd, px, mean_f, inv_std, outer, channels, inner, sum_dy, sum_dy_h);
    Tensor dgamma(Shape{channels});
    Tensor dbeta(Shape{channels});
    for (int c = 0; c < channels; ++c) {
      dgamma[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy_h[static_cast<std::size_t>(c)]);
      dbeta[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy[static_cast<std::size_t>(c)]);
    }
    if (needs_grad(Var{this, ix})) {
      Tensor dx(vx.shape());
      float* po = dx.data();
      std::int64_t idx = 0;
      for (std::int64_t n = 0; n < outer; ++n)
        for (int c = 0; c < channels; ++c) {
          const float scale = vg[static_cast<std::size_t>(c)] * inv_std[static_cast<std::size_t>(c)];
          for (std::int64_t i = 0; i < inner; ++i, ++idx) po[idx] = scale * pd[idx];
        }
      accumulate_node(ix, std::move(dx));
    }
    accumulate_node(ig, std::move(dgamma));
    accumulate_node(ib, std::move(dbeta));
  });
  return out;
}

Tape::SoftmaxCeOut Tape::softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  const Tensor& vl = node_at(logits).value;
  if (vl.shape().rank() != 2) fail(ErrorKind::kShapeMismatch, "cross entropy logits " + vl.shape().str());
  const int n = vl.shape().dim(0), classes = vl.shape().dim(1);
  if (static_cast<int>(labels.size()) != n)
    fail(ErrorKind::kShapeMismatch, "cross entropy labels count " + std::to_string(labels.size()));
  for (int label : labels)
    if (label < 0 || label >= classes)
      fail(ErrorKind::kBadLabel, "label " + std::to_string(label) + " outside [0," + std::to_string(classes) + ")");

  Tensor probs(vl.shape());
  double loss_acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = vl.data() + static_cast<std::size_t>(i) * classes;
    float* prow = probs.data() + static_cast<std::size_t>(i) * classes;
    float mx = row[0];
    for (int c = 1; c < classes; ++c) mx = row[c] > mx ? row[c] : mx;
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    const double log_denom = std::log(denom);
    for (int c = 0; c < classes; ++c)
      prow[c] = static_cast<float>(std::exp(static_cast<double>(row[c] - mx)) / denom);
    loss_acc += log_denom - static_cast<double>(row[labels[static_cast<std::size_t>(i)]] - mx);
  }
  Var loss = push(Tensor::scalar(static_cast<float>(loss_acc / n)), needs_grad(logits));
  const std::int32_t il = logits.node;
  record(loss.node, [this, il, n, classes, probs, labels](const Tensor& dy) {
    const float scale = dy[0] / static_cast<float>(n);
    Tensor dl(probs.shape());
    const float* pp = probs.data();
    float* po = dl.data();
    const std::int64_t total = probs.numel();
    for (std::int64_t i = 0; i < total; ++i) po[i] = pp[i] * scale;
    for (int i = 0; i < n; ++i)
      po[static_cast<std::size_t>(i) * classes + labels[static_cast<std::size_t>(i)]] -= scale;
    accumulate_node(il, std::move(dl));
  });
  return SoftmaxCeOut{loss, std::move(probs)};
}

Var Tape::bce(Var probs, const Tensor& targets) {
  const Tensor& vp = node_at(probs).value;
  if (vp.shape() != targets.shape())
    fail(ErrorKind::kShapeMismatch, "bce probs " + vp.shape().str() + " targets " + targets.shape().str());
  const std::int64_t n = vp.numel();
  if (n == 0) fail(ErrorKind::kShapeMismatch, "bce on empty tensor");
  constexpr float kEps = 1e-7f;
  Tensor factor(vp.shape());  // d(mean loss)/d(probs), zero where the clamp binds
  double loss_acc = 0.0;
  const float* pp = vp.data();
  const float* pt = targets.data();
  float* pf = factor.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const float p = pp[i];
    if (!(p >= 0.0f && p <= 1.0f))
      fail(ErrorKind::kBadProbability, "bce input " + std::to_string(p) + " outside [0,1]");
    const float t = pt[i];
    const bool clamped = p < kEps || p > 1.0f - kEps;
    const float ph = p < kEps ? kEps : (p > 1.0f - kEps ? 1.0f - kEps : p);
    loss_acc -= static_cast<double>(t) * std::log(static_cast<double>(ph)) +
                static_cast<double>(1.0f - t) * std::log(static_cast<double>(1.0f - ph));
    pf[i] = clamped ? 0.0f : (ph - t) / (ph * (1.0f - ph) * static_cast<float>(n));
  }
  Var loss = push(Tensor::scalar(static_cast<float>(loss_acc / static_cast<double>(n))), needs_grad(probs));
  const std::int32_t ip = probs.node;
  record(loss.node, [this, ip, factor = std::move(factor)](const Tensor& dy) {
    Tensor dp(factor.shape());
    const float* pf = factor.data();
    float* po = dp.data();
    const float s = dy[0];
    const std::int64_t n = factor.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pf[i] * s;
    accumulate_node(ip, std::move(dp));
  });
  return loss;
}

Var Tape::sum_all(Var x) {
  const Tensor& vx = node_at(x).value;
  std::vector<int> axes(static_cast<std::size_t>(vx.shape().rank()));
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  ReduceResult r = reduce(ReduceOp::kSum, vx, axes);
  Var out = push(std::move(r.y), needs_grad(x));
  const std::int32_t ix = x.node;
  const Shape x_shape = vx.shape();
  record(out.node, [this, ix, x_shape](const Tensor& dy) {
    accumulate_node(ix, Tensor::full(x_shape, dy[0]));
  });
  return out;
}

Var Tape::mean_all(Var x) {
  const Tensor& vx = node_at(x).value;
  std::vector<int> axes(static_cast<std::size_t>(vx.shape().rank()));
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  ReduceResult r = reduce(ReduceOp::kMean, vx, axes);
  Var out = push(std::move(r.y), needs_grad(x));
  const std::int32_t ix = x.node;
  const Shape x_shape = vx.shape();
  const float inv = 1.0f / static_cast<float>(vx.numel());
  record(out.node, [this, ix, x_shape, inv](const Tensor& dy) {
    accumulate_node(ix, Tensor::full(x_shape, dy[0] * inv));
  });
  return out;
}

Var Tape::detach(Var x) { return push(node_at(x).value, false); }

void Tape::backward(Var root) {
  const Node& r = node_at(root);
  if (r.value.numel() != 1)
    fail(ErrorKind::kNonScalarRoot, "backward root has shape " + r.value.shape().str());
  grads_.assign(nodes_.size(), Tensor());
  grad_set_.assign(nodes_.size(), 0);
  accumulate_node(root.node, Tensor::full(r.value.shape(), 1.0f));
  for (auto it = records_.rbegin(); it != records_.rend(); ++it)
    if (grad_set_[static_cast<std::size_t>(it->out)]) it->pull(grads_[static_cast<std::size_t>(it->out)]);
}

}  // namespace laif
