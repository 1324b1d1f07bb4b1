#include <cmath>
#include <functional>
#include <vector>

#include "core/optim.hpp"
#include "doctest.h"

using laif::Adam;
using laif::AdamConfig;
using laif::ErrorKind;
using laif::ParamSlot;
using laif::Sgd;
using laif::SgdConfig;
using laif::Shape;
using laif::Tensor;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const laif::Error& e) {
    return e.kind();
  }
  return static_cast<ErrorKind>(-1);
}

void set_grad(ParamSlot& slot, float g) {
  slot.clear_grad();
  slot.accumulate(Tensor::full(slot.value.shape(), g));
}

}  // namespace

TEST_CASE("sgd takes a plain gradient step") {
  ParamSlot w("w", Tensor::full(Shape{1}, 1.0f));
  Sgd opt({&w}, SgdConfig{0.1f, 0.0f, 0.0f});
  set_grad(w, 1.0f);
  opt.step();
  CHECK(w.value[0] == doctest::Approx(0.9));
}

TEST_CASE("sgd momentum compounds the velocity") {
  ParamSlot w("w", Tensor::full(Shape{1}, 10.0f));
  Sgd opt({&w}, SgdConfig{1.0f, 0.9f, 0.0f});
  set_grad(w, 1.0f);
  opt.step();
  CHECK(w.value[0] == doctest::Approx(9.0));  // v = 1
  set_grad(w, 1.0f);
  opt.step();
  CHECK(w.value[0] == doctest::Approx(7.1));  // v = 0.9 + 1 = 1.9
}

TEST_CASE("weight decay shrinks decayed slots only") {
  ParamSlot w("w", Tensor::full(Shape{1}, 2.0f));
  ParamSlot b("b", Tensor::full(Shape{1}, 2.0f), /*decay_flag=*/false);
  Sgd opt({&w, &b}, SgdConfig{0.1f, 0.0f, 0.1f});
  set_grad(w, 0.0f);
  set_grad(b, 0.0f);
  opt.step();
  CHECK(w.value[0] == doctest::Approx(2.0f * (1.0f - 0.1f * 0.1f)));
  CHECK(b.value[0] == 2.0f);
}

TEST_CASE("sgd with lr=0 is a bitwise no-op") {
  std::vector<float> vals = {1.5f, -0.0f, 0.0f, -3.25f};
  ParamSlot w("w", Tensor(Shape{4}, vals));
  const Tensor before = w.value;
  Sgd opt({&w}, SgdConfig{0.0f, 0.9f, 0.1f});
  for (int i = 0; i < 3; ++i) {
    w.clear_grad();
    w.accumulate(Tensor(Shape{4}, std::vector<float>{1.0f, -2.0f, 3.0f, -4.0f}));
    opt.step();
  }
  CHECK(w.value.same_bits(before));
}

TEST_CASE("stepping without a gradient raises MissingGrad") {
  ParamSlot w("w", Tensor::full(Shape{2}, 1.0f));
  Sgd sgd({&w}, SgdConfig{});
  CHECK(kind_of([&] { sgd.step(); }) == ErrorKind::kMissingGrad);
  Adam adam({&w}, AdamConfig{});
  CHECK(kind_of([&] { adam.step(); }) == ErrorKind::kMissingGrad);
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
  ParamSlot w("w", Tensor::full(Shape{1}, 0.5f));
  AdamConfig cfg;
  cfg.lr = 0.01f;
  Adam opt({&w}, cfg);
  set_grad(w, 0.3f);
  opt.step();
  // mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps) ~ lr.
  CHECK(w.value[0] == doctest::Approx(0.5 - 0.01).epsilon(1e-5));
}

TEST_CASE("adam with zero gradient leaves the parameter unchanged") {
  ParamSlot w("w", Tensor::full(Shape{3}, 1.25f));
  Adam opt({&w}, AdamConfig{});
  const Tensor before = w.value;
  for (int i = 0; i < 5; ++i) {
    set_grad(w, 0.0f);
    opt.step();
  }
  CHECK(w.value.same_bits(before));
}

TEST_CASE("adam matches a scalar reference over 100 steps") {
  ParamSlot w("w", Tensor::full(Shape{1}, 0.8f));
  AdamConfig cfg;  // defaults: lr 2e-4, beta1 0.5, beta2 0.999, eps 1e-8
  Adam opt({&w}, cfg);

  float ref_w = 0.8f, ref_m = 0.0f, ref_v = 0.0f;
  for (int t = 1; t <= 100; ++t) {
    const float g = static_cast<float>(std::sin(0.37 * t) + 0.2);
    set_grad(w, g);
    opt.step();
    const double md = cfg.beta1 * ref_m + (1.0 - cfg.beta1) * static_cast<double>(g);
    const double vd = cfg.beta2 * ref_v + (1.0 - cfg.beta2) * static_cast<double>(g) * g;
    ref_m = static_cast<float>(md);
    ref_v = static_cast<float>(vd);
    const double mhat = md / (1.0 - std::pow(static_cast<double>(cfg.beta1), t));
    const double vhat = vd / (1.0 - std::pow(static_cast<double>(cfg.beta2), t));
    ref_w = static_cast<float>(ref_w - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
  CHECK(std::abs(w.value[0] - ref_w) <= 1e-7f);
}

TEST_CASE("adam steps are invariant to gradient scale") {
  ParamSlot a("a", Tensor::full(Shape{1}, 1.0f));
  ParamSlot b("b", Tensor::full(Shape{1}, 1.0f));
  Adam opt_a({&a}, AdamConfig{});
  Adam opt_b({&b}, AdamConfig{});
  for (int t = 1; t <= 20; ++t) {
    const float g = static_cast<float>(std::cos(0.21 * t) + 0.5);
    set_grad(a, g);
    set_grad(b, 10.0f * g);
    opt_a.step();
    opt_b.step();
  }
  CHECK(std::abs(a.value[0] - b.value[0]) < 1e-6f);
}

TEST_CASE("sgd drives a quadratic toward its minimum") {
  // L(w) = w^2/2, dL/dw = w; any lr < 1 contracts toward zero.
  ParamSlot w("w", Tensor::full(Shape{1}, 4.0f));
  Sgd opt({&w}, SgdConfig{0.1f, 0.0f, 0.0f});
  float prev = std::abs(w.value[0]);
  for (int i = 0; i < 50; ++i) {
    w.clear_grad();
    w.accumulate(w.value);
    opt.step();
    CHECK(std::abs(w.value[0]) < prev);
    prev = std::abs(w.value[0]);
  }
  CHECK(prev < 0.05f);
}

TEST_CASE("accuracy counts argmax hits with first-max tie breaking") {
  Tensor scores(Shape{3, 3}, std::vector<float>{0.1f, 0.9f, 0.0f,    // argmax 1
                                                0.5f, 0.5f, 0.5f,    // tie, argmax 0
                                                0.0f, 0.2f, 0.8f});  // argmax 2
  CHECK(laif::accuracy(scores, {1, 0, 2}) == doctest::Approx(1.0));
  CHECK(laif::accuracy(scores, {1, 1, 2}) == doctest::Approx(2.0 / 3.0));
  CHECK(kind_of([&] { (void)laif::accuracy(scores, {0, 1}); }) == ErrorKind::kShapeMismatch);
}

TEST_CASE("topk orders by score then lower index") {
  SUBCASE("plain ordering") {
    const auto top = laif::topk({0.1f, 0.7f, 0.2f}, 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0].first == 1);
    CHECK(top[1].first == 2);
    CHECK(top[2].first == 0);
  }
  SUBCASE("uniform scores fall back to index order") {
    const std::vector<float> uniform(30, 1.0f / 30.0f);
    const auto top = laif::topk(uniform, 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0].first == 0);
    CHECK(top[1].first == 1);
    CHECK(top[2].first == 2);
    for (const auto& [idx, p] : top) CHECK(p == doctest::Approx(1.0 / 30.0));
  }
  SUBCASE("k bounds") {
    CHECK(kind_of([] { (void)laif::topk({0.5f}, 2); }) == ErrorKind::kInvalidArgument);
  }
}
