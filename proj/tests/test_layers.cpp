#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "core/layers.hpp"
#include "core/optim.hpp"
#include "doctest.h"
#include "oracles.hpp"

using laif::BatchNorm2d;
using laif::Conv2dLayer;
using laif::Dense;
using laif::Dropout2d;
using laif::ErrorKind;
using laif::Flatten;
using laif::LeakyRelu;
using laif::MaxPool2;
using laif::ParamSlot;
using laif::Relu;
using laif::ReshapeTo;
using laif::Rng;
using laif::Sequential;
using laif::Shape;
using laif::Tanh;
using laif::Tape;
using laif::Tensor;
using laif::Upsample2x;
using laif::Var;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const laif::Error& e) {
    return e.kind();
  }
  return static_cast<ErrorKind>(-1);
}

Tensor tensor_of(Shape shape, const oracle::Vec& v) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[static_cast<std::size_t>(i)] = static_cast<float>(v[static_cast<std::size_t>(i)]);
  return t;
}

oracle::Vec random_vec(Rng& rng, std::size_t n, double lo, double hi) {
  oracle::Vec v(n);
  for (auto& x : v) x = rng.uniform_in(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("dense layer computes x . W^T + b") {
  Dense layer(3, 2);
  // W rows are output units: y_j = sum_i x_i * W[j,i] + b_j.
  std::vector<float> w = {1.0f, 2.0f, 3.0f, -1.0f, 0.5f, 0.0f};
  layer.visit_named([&](const std::string& name, Tensor& t) {
    if (name == "weight") t = Tensor(Shape{2, 3}, w);
    if (name == "bias") t = Tensor(Shape{2}, std::vector<float>{10.0f, 20.0f});
  });
  Tape tape;
  Var y = layer.forward(tape, tape.constant(Tensor(Shape{1, 3}, std::vector<float>{1.0f, 1.0f, 2.0f})));
  CHECK(tape.value(y).shape() == Shape{1, 2});
  CHECK(tape.value(y)[0] == doctest::Approx(1 + 2 + 6 + 10));
  CHECK(tape.value(y)[1] == doctest::Approx(-1 + 0.5 + 0 + 20));
}

TEST_CASE("dense 1-to-1 with W=2 b=1 maps 3 to 7") {
  Dense layer(1, 1);
  layer.visit_named([&](const std::string& name, Tensor& t) {
    if (name == "weight") t = Tensor(Shape{1, 1}, std::vector<float>{2.0f});
    if (name == "bias") t = Tensor(Shape{1}, std::vector<float>{1.0f});
  });
  Tape tape;
  Var y = layer.forward(tape, tape.constant(Tensor(Shape{1, 1}, std::vector<float>{3.0f})));
  CHECK(tape.value(y)[0] == 7.0f);
}

TEST_CASE("identity dense weight passes input through") {
  Dense layer(4, 4);
  layer.visit_named([&](const std::string& name, Tensor& t) {
    if (name != "weight") return;
    for (int i = 0; i < 4; ++i) t[static_cast<std::size_t>(i * 4 + i)] = 1.0f;
  });
  Rng rng(3);
  const oracle::Vec xs = random_vec(rng, 8, -1.0, 1.0);
  Tape tape;
  Var y = layer.forward(tape, tape.constant(tensor_of(Shape{2, 4}, xs)));
  for (std::size_t i = 0; i < 8; ++i) CHECK(tape.value(y)[i] == doctest::Approx(xs[i]));
}

TEST_CASE("dense gradients match finite differences on the oracle") {
  const int n = 3, in = 4, out = 2;
  for (std::uint64_t seed = 400; seed < 420; ++seed) {
    Rng rng(seed);
    oracle::Vec xs = random_vec(rng, n * in, -1.0, 1.0);
    oracle::Vec ws = random_vec(rng, out * in, -1.0, 1.0);
    oracle::Vec bs = random_vec(rng, out, -0.5, 0.5);
    oracle::Vec signs(n * out);
    for (auto& s : signs) s = rng.below(2) ? 1.0 : -1.0;

    Dense layer(in, out);
    layer.visit_named([&](const std::string& name, Tensor& t) {
      if (name == "weight") t = tensor_of(Shape{out, in}, ws);
      if (name == "bias") t = tensor_of(Shape{out}, bs);
    });
    Tape tape;
    Var y = layer.forward(tape, tape.constant(tensor_of(Shape{n, in}, xs)));
    Var loss = tape.sum_all(tape.mul(y, tape.constant(tensor_of(Shape{n, out}, signs))));
    tape.backward(loss);

    // Oracle loss: sum_r sum_j signs[r,j] * (x . W^T + b)[r,j].
    auto loss_fn = [&]() {
      double acc = 0.0;
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < out; ++j) {
          double v = bs[static_cast<std::size_t>(j)];
          for (int i = 0; i < in; ++i)
            v += xs[static_cast<std::size_t>(r * in + i)] * ws[static_cast<std::size_t>(j * in + i)];
          acc += signs[static_cast<std::size_t>(r * out + j)] * v;
        }
      return acc;
    };
    const oracle::Vec fd_w = oracle::fd_grad(ws, loss_fn);
    const oracle::Vec fd_b = oracle::fd_grad(bs, loss_fn);
    layer.visit_params([&](ParamSlot& slot) {
      REQUIRE(slot.has_grad);
      const oracle::Vec& fd = slot.name == "weight" ? fd_w : fd_b;
      CHECK(oracle::max_rel_err(slot.grad.values(), fd) <= 1e-3);
    });
  }
}

TEST_CASE("conv layer with identity kernel passes input through") {
  Conv2dLayer layer(1, 1, 3, 1, 1);
  layer.visit_named([&](const std::string& name, Tensor& t) {
    if (name == "weight") t[4] = 1.0f;  // center tap of the 3x3 kernel
  });
  Rng rng(9);
  const oracle::Vec xs = random_vec(rng, 2 * 25, 0.0, 1.0);
  Tape tape;
  Var y = layer.forward(tape, tape.constant(tensor_of(Shape{2, 1, 5, 5}, xs)));
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(tape.value(y)[i] == doctest::Approx(xs[i]));
}

TEST_CASE("conv(128,64,3) holds 73792 parameters") {
  Conv2dLayer layer(128, 64, 3, 1, 1);
  std::int64_t count = 0;
  layer.visit_params([&](ParamSlot& slot) { count += slot.value.numel(); });
  CHECK(count == 73792);
}

TEST_CASE("conv layer output shape probe matches runtime") {
  Conv2dLayer layer(2, 5, 3, 2, 1);
  const Shape probe = layer.output_shape(Shape{1, 2, 9, 7});
  Tape tape;
  Var y = layer.forward(tape, tape.constant(Tensor(Shape{1, 2, 9, 7}, 0.5f)));
  CHECK(tape.value(y).shape() == probe);
  CHECK(kind_of([&] { (void)layer.output_shape(Shape{1, 3, 9, 7}); }) == ErrorKind::kShapeMismatch);
  CHECK(kind_of([&] { (void)Conv2dLayer(1, 1, 5, 1, 0).output_shape(Shape{1, 1, 3, 3}); }) ==
        ErrorKind::kNonPositiveOutput);
}

TEST_CASE("batchnorm running stats move toward the batch statistic") {
  const int n = 4, c = 2, hw = 3;
  Rng rng(77);
  const oracle::Vec xs = random_vec(rng, n * c * hw * hw, -2.0, 3.0);
  // Batch mean and biased variance per channel, straight from the data.
  oracle::Vec batch_mean(c, 0.0), batch_var(c, 0.0);
  const double count = n * hw * hw;
  for (int j = 0; j < c; ++j) {
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < hw * hw; ++p) {
        const double v = xs[static_cast<std::size_t>((i * c + j) * hw * hw + p)];
        sum += v;
        sumsq += v * v;
      }
    batch_mean[static_cast<std::size_t>(j)] = sum / count;
    batch_var[static_cast<std::size_t>(j)] = sumsq / count - (sum / count) * (sum / count);
  }

  BatchNorm2d bn(c, 0.8f);
  // Seed the running stats away from their defaults to expose the blend.
  bn.visit_named([&](const std::string& name, Tensor& t) {
    if (name == "running_mean") t = Tensor(Shape{c}, std::vector<float>{1.0f, -1.0f});
    if (name == "running_var") t = Tensor(Shape{c}, std::vector<float>{2.0f, 0.5f});
  });
  Tape tape;
  (void)bn.forward(tape, tape.constant(tensor_of(Shape{n, c, hw, hw}, xs)));
  const std::vector<float> old_mean = {1.0f, -1.0f}, old_var = {2.0f, 0.5f};
  for (int j = 0; j < c; ++j) {
    const float want_mean =
        0.2f * old_mean[static_cast<std::size_t>(j)] + 0.8f * static_cast<float>(batch_mean[static_cast<std::size_t>(j)]);
    const float want_var =
        0.2f * old_var[static_cast<std::size_t>(j)] + 0.8f * static_cast<float>(batch_var[static_cast<std::size_t>(j)]);
    CHECK(bn.running_mean()[static_cast<std::size_t>(j)] == doctest::Approx(want_mean).epsilon(1e-5));
    CHECK(bn.running_var()[static_cast<std::size_t>(j)] == doctest::Approx(want_var).epsilon(1e-5));
  }
}

TEST_CASE("batchnorm train output is normalized before the affine") {
  const int n = 6, c = 3, hw = 4;
  Rng rng(78);
  const oracle::Vec xs = random_vec(rng, n * c * hw * hw, -5.0, 5.0);
  BatchNorm2d bn(c);
  Tape tape;
  Var y = bn.forward(tape, tape.constant(tensor_of(Shape{n, c, hw, hw}, xs)));
  const Tensor& v = tape.value(y);
  for (int j = 0; j < c; ++j) {
    double sum = 0.0, sumsq = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < hw * hw; ++p) {
        const float val = v[static_cast<std::size_t>((i * c + j) * hw * hw + p)];
        sum += val;
        sumsq += static_cast<double>(val) * val;
        ++count;
      }
    const double mean = sum / count;
    const double var = sumsq / count - mean * mean;
    CHECK(std::abs(mean) <= 1e-5);
    CHECK(std::abs(var - 1.0) <= 1e-3);
  }
}

TEST_CASE("batchnorm stat updates are gated by mode, not by gradient recording") {
  const Tensor x(Shape{3, 2, 2, 2}, 0.7f);
  SUBCASE("eval mode leaves running stats untouched") {
    BatchNorm2d bn(2, 0.8f);
    bn.set_mode(false);
    Tape tape;
    (void)bn.forward(tape, tape.constant(x));
    CHECK(bn.running_mean()[0] == 0.0f);
    CHECK(bn.running_var()[0] == 1.0f);
  }
  SUBCASE("train mode updates running stats even on a value-only tape") {
    BatchNorm2d bn(2, 0.8f);
    Tape tape(/*grads_enabled=*/false);
    (void)bn.forward(tape, tape.constant(x));
    // constant batch: mean 0.7, variance 0; blend = 0.2*old + 0.8*batch
    CHECK(bn.running_mean()[0] == doctest::Approx(0.8f * 0.7f).epsilon(1e-6));
    CHECK(bn.running_var()[0] == doctest::Approx(0.2f * 1.0f).epsilon(1e-6));
  }
  SUBCASE("eval forward uses the running stats") {
    BatchNorm2d bn(2, 0.8f);
    bn.visit_named([&](const std::string& name, Tensor& t) {
      if (name == "running_mean") t = Tensor(Shape{2}, std::vector<float>{0.5f, -0.5f});
      if (name == "running_var") t = Tensor(Shape{2}, std::vector<float>{4.0f, 1.0f});
    });
    bn.set_mode(false);
    Tape tape;
    Var y = bn.forward(tape, tape.constant(x));
    // channel 0: (0.7 - 0.5) / sqrt(4 + eps) ~ 0.1
    CHECK(tape.value(y)[0] == doctest::Approx(0.1).epsilon(1e-4));
    // channel 1: (0.7 + 0.5) / sqrt(1 + eps) ~ 1.2
    CHECK(tape.value(y)[4] == doctest::Approx(1.2).epsilon(1e-4));
  }
}

TEST_CASE("dropout drop rate and survivor scaling over 10000 draws") {
  Dropout2d drop(0.25f);
  drop.reseed(2024);
  const Tensor x(Shape{100, 100, 1, 1}, 1.0f);
  Tape tape;
  Var y = drop.forward(tape, tape.constant(x));
  const Tensor& v = tape.value(y);
  int zeros = 0;
  const float scale = 1.0f / 0.75f;
  for (std::int64_t i = 0; i < v.numel(); ++i) {
    if (v[static_cast<std::size_t>(i)] == 0.0f) {
      ++zeros;
    } else {
      CHECK(v[static_cast<std::size_t>(i)] == scale);
    }
  }
  const double rate = zeros / 10000.0;
  CHECK(rate >= 0.23);
  CHECK(rate <= 0.27);
}

TEST_CASE("dropout is identity in eval mode and at p=0") {
  Rng rng(5);
  const oracle::Vec xs = random_vec(rng, 2 * 3 * 4, -1.0, 1.0);
  const Tensor x = tensor_of(Shape{2, 3, 2, 2}, xs);
  SUBCASE("eval mode") {
    Dropout2d drop(0.5f);
    drop.set_mode(false);
    Tape tape;
    Var y = drop.forward(tape, tape.constant(x));
    CHECK(tape.value(y).same_bits(x));
  }
  SUBCASE("p = 0 in train mode") {
    Dropout2d drop(0.0f);
    drop.reseed(1);
    Tape tape;
    Var y = drop.forward(tape, tape.constant(x));
    CHECK(tape.value(y).same_bits(x));
  }
  SUBCASE("p outside [0,1) rejected") {
    CHECK(kind_of([] { Dropout2d bad(1.0f); }) == ErrorKind::kBadProbability);
    CHECK(kind_of([] { Dropout2d bad(-0.1f); }) == ErrorKind::kBadProbability);
  }
}

TEST_CASE("dropout reseed replays the same mask") {
  const Tensor x(Shape{4, 8, 2, 2}, 1.0f);
  Dropout2d drop(0.5f);
  drop.reseed(99);
  Tape t1;
  const Tensor y1 = t1.value(drop.forward(t1, t1.constant(x)));
  drop.reseed(99);
  Tape t2;
  const Tensor y2 = t2.value(drop.forward(t2, t2.constant(x)));
  CHECK(y1.same_bits(y2));
}

TEST_CASE("xavier init is bounded, centered, and seed-deterministic") {
  Dense a(64, 32), b(64, 32);
  Rng r1(11), r2(11);
  a.init(r1);
  b.init(r2);
  const float limit = std::sqrt(6.0f / (64 + 32));
  double sum = 0.0;
  bool same = true;
  a.visit_named([&](const std::string& name, Tensor& t) {
    if (name != "weight") return;
    b.visit_named([&](const std::string& name2, Tensor& t2) {
      if (name2 == "weight") same = t.same_bits(t2);
    });
    for (auto v : t.values()) {
      CHECK(std::abs(v) <= limit);
      sum += v;
    }
  });
  CHECK(same);
  CHECK(std::abs(sum / (64 * 32)) < limit / 10);
}

TEST_CASE("sequential probes shapes at add time and rejects mis-chained stacks") {
  Sequential net(Shape{1, 1, 8, 8});
  net.add(std::make_unique<Conv2dLayer>(1, 4, 3, 1, 1));
  net.add(std::make_unique<Relu>());
  net.add(std::make_unique<MaxPool2>());
  CHECK(net.output_shape() == Shape{1, 4, 4, 4});
  CHECK(kind_of([&] { net.add(std::make_unique<Conv2dLayer>(8, 4, 3, 1, 1)); }) == ErrorKind::kShapeMismatch);
  CHECK(net.size() == 3);  // failed add leaves the stack unchanged
  net.add(std::make_unique<Flatten>());
  CHECK(kind_of([&] { net.add(std::make_unique<Dense>(63, 2)); }) == ErrorKind::kShapeMismatch);
  net.add(std::make_unique<Dense>(64, 2));
  CHECK(net.output_shape() == Shape{1, 2});
}

TEST_CASE("sequential forward matches the probe shape and composes layers") {
  Sequential net(Shape{1, 1, 8, 8});
  net.add(std::make_unique<Conv2dLayer>(1, 3, 3, 1, 1));
  net.add(std::make_unique<LeakyRelu>(0.2f));
  net.add(std::make_unique<MaxPool2>());
  net.add(std::make_unique<Flatten>());
  net.add(std::make_unique<Dense>(48, 5));
  Rng rng(21);
  net.init(rng);
  Tape tape;
  Var y = net.forward(tape, tape.constant(Tensor(Shape{3, 1, 8, 8}, 0.25f)));
  CHECK(tape.value(y).shape() == Shape{3, 5});
}

TEST_CASE("sequential visitor names carry the layer index") {
  Sequential net(Shape{1, 1, 4, 4});
  net.add(std::make_unique<Conv2dLayer>(1, 2, 3, 1, 1));
  net.add(std::make_unique<Relu>());
  net.add(std::make_unique<BatchNorm2d>(2));
  std::vector<std::string> names;
  net.visit_named([&](const std::string& name, Tensor&) { names.push_back(name); });
  const std::vector<std::string> want = {"layer0.weight", "layer0.bias",        "layer2.gamma",
                                         "layer2.beta",   "layer2.running_mean", "layer2.running_var"};
  CHECK(names == want);
}

TEST_CASE("reshape and upsample layers validate their inputs") {
  ReshapeTo reshape(std::vector<int>{2, 3, 3});
  CHECK(reshape.output_shape(Shape{5, 18}) == Shape{5, 2, 3, 3});
  CHECK(kind_of([&] { (void)reshape.output_shape(Shape{5, 17}); }) == ErrorKind::kShapeMismatch);
  Upsample2x up;
  CHECK(up.output_shape(Shape{1, 2, 3, 5}) == Shape{1, 2, 6, 10});
  Flatten flat;
  CHECK(flat.output_shape(Shape{2, 3, 4, 5}) == Shape{2, 60});
  CHECK(kind_of([&] { (void)flat.output_shape(Shape{2, 60}); }) == ErrorKind::kShapeMismatch);
}

TEST_CASE("gradients flow through a train-mode stack with dropout and batchnorm") {
  // The dropout mask is frozen by reseeding before each forward, so the two
  // engine passes see the same network function.
  Sequential net(Shape{1, 2, 4, 4});
  net.add(std::make_unique<Conv2dLayer>(2, 3, 3, 1, 1));
  net.add(std::make_unique<Dropout2d>(0.3f));
  net.add(std::make_unique<BatchNorm2d>(3, 0.8f));
  net.add(std::make_unique<Tanh>());
  Rng rng(31);
  net.init(rng);
  net.reseed(404);

  const Tensor x(Shape{4, 2, 4, 4}, 0.6f);
  Tape t1;
  net.reseed(404);
  const Tensor y1 = t1.value(net.forward(t1, t1.constant(x)));

  Tape t2;
  net.reseed(404);
  Var y = net.forward(t2, t2.constant(x));
  CHECK(t2.value(y).same_bits(y1));
  Var loss = t2.sum_all(y);
  t2.backward(loss);
  int with_grad = 0;
  net.visit_params([&](ParamSlot& slot) {
    if (slot.has_grad) ++with_grad;
  });
  CHECK(with_grad == 4);  // conv weight+bias, bn gamma+beta
}
