#include <functional>
#include <map>
#include <vector>

#include "core/models.hpp"
#include "doctest.h"

using laif::ErrorKind;
using laif::GanSpec;
using laif::Model;
using laif::ParamSlot;
using laif::RecognizerSpec;
using laif::Rng;
using laif::Sequential;
using laif::Shape;
using laif::Tape;
using laif::Tensor;
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

Tensor random_tensor(Shape shape, Rng& rng, float lo, float hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform_in(lo, hi));
  return t;
}

std::map<std::string, Tensor> snapshot(Model& m) {
  std::map<std::string, Tensor> out;
  m.net.visit_named([&](const std::string& name, Tensor& t) { out.emplace(name, t); });
  return out;
}

int count_kind(Sequential& net, const std::string& kind) {
  int n = 0;
  for (std::size_t i = 0; i < net.size(); ++i)
    if (net.at(i).kind() == kind) ++n;
  return n;
}

}  // namespace

TEST_CASE("desk recognizer maps a 32x32 image to 30 logits") {
  Model m = build_recognizer(RecognizerSpec{});
  CHECK(m.arch == "rec-desk");
  CHECK(m.net.output_shape() == Shape{1, 30});
  Rng rng(1);
  m.net.init(rng);
  Tape tape;
  Var y = m.net.forward(tape, tape.constant(random_tensor(Shape{2, 1, 32, 32}, rng, 0.0f, 1.0f)));
  CHECK(tape.value(y).shape() == Shape{2, 30});
}

TEST_CASE("full recognizer plan carries 16 conv layers and 3 dense layers") {
  RecognizerSpec spec;
  spec.scale = "vgg19";
  Model m = build_recognizer(spec);
  CHECK(m.arch == "rec-vgg19");
  CHECK(count_kind(m.net, "conv") == 16);
  CHECK(count_kind(m.net, "dense") == 3);
  CHECK(count_kind(m.net, "maxpool") == 5);
  CHECK(m.net.output_shape() == Shape{1, 30});
}

TEST_CASE("desk recognizer parameter count matches hand arithmetic") {
  Model m = build_recognizer(RecognizerSpec{});
  // convs: (1,16) 160, (16,16) 2320, (16,32) 4640, (32,32) 9248, (32,64) 18496
  // dense: (1024,256) 262400, head (256,30) 7710
  CHECK(laif::param_count(m.net) == 160 + 2320 + 4640 + 9248 + 18496 + 262400 + 7710);
}

TEST_CASE("two-class recognizer builds and rejects smaller heads") {
  RecognizerSpec spec;
  spec.head_classes = 2;
  Model m = build_recognizer(spec);
  CHECK(m.net.output_shape() == Shape{1, 2});
  spec.head_classes = 1;
  CHECK(kind_of([&] { (void)build_recognizer(spec); }) == ErrorKind::kInvalidPlan);
  RecognizerSpec bad;
  bad.scale = "tiny";
  CHECK(kind_of([&] { (void)build_recognizer(bad); }) == ErrorKind::kInvalidPlan);
}

TEST_CASE("replace_head preserves every other tensor bitwise") {
  RecognizerSpec spec;
  spec.head_classes = 10;
  Model m = build_recognizer(spec);
  Rng rng(42);
  m.net.init(rng);
  const auto before = snapshot(m);
  const std::string head_prefix = "layer" + std::to_string(m.net.size() - 1) + ".";

  Rng head_rng(43);
  auto old_head = replace_head(m, 30, head_rng);
  CHECK(old_head->kind() == "dense");
  CHECK(m.net.output_shape() == Shape{1, 30});

  const auto after = snapshot(m);
  CHECK(before.size() == after.size());
  for (const auto& [name, tensor] : after) {
    if (name.rfind(head_prefix, 0) == 0) {
      if (name == head_prefix + "weight") CHECK(tensor.shape() == Shape{30, 256});
    } else {
      CHECK(tensor.same_bits(before.at(name)));
    }
  }

  // A second replacement draws fresh weights from the advanced stream.
  const Tensor first_head = after.at(head_prefix + "weight");
  (void)replace_head(m, 30, head_rng);
  const auto twice = snapshot(m);
  CHECK(twice.at(head_prefix + "weight").shape() == Shape{30, 256});
  CHECK(!twice.at(head_prefix + "weight").same_bits(first_head));
}

TEST_CASE("replace_head refuses models without a dense tail") {
  Model m;
  m.net = Sequential(Shape{1, 1, 8, 8});
  m.net.add(std::make_unique<laif::Conv2dLayer>(1, 2, 3, 1, 1));
  m.net.add(std::make_unique<laif::Relu>());
  Rng rng(7);
  CHECK(kind_of([&] { (void)replace_head(m, 30, rng); }) == ErrorKind::kNoHead);
}

TEST_CASE("generator maps latents to tanh-bounded 32x32 images") {
  Model g = build_generator(GanSpec{});
  CHECK(g.arch == "dcgan-g");
  CHECK(g.net.output_shape() == Shape{1, 1, 32, 32});
  CHECK(laif::param_count(g.net) == 1049985);

  Rng rng(11);
  g.net.init(rng);
  Tape tape;
  Tensor z(Shape{2, 100});
  for (auto& v : z.values()) v = static_cast<float>(rng.normal());
  Var img = g.net.forward(tape, tape.constant(z));
  const Tensor& out = tape.value(img);
  CHECK(out.shape() == Shape{2, 1, 32, 32});
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out[static_cast<std::size_t>(i)] >= -1.0f);
    CHECK(out[static_cast<std::size_t>(i)] <= 1.0f);
  }
  // Distinct latent rows give distinct images.
  bool differs = false;
  for (int i = 0; i < 32 * 32 && !differs; ++i)
    differs = out[static_cast<std::size_t>(i)] != out[static_cast<std::size_t>(32 * 32 + i)];
  CHECK(differs);
}

TEST_CASE("generator spatial plan doubles twice from img_size/4") {
  Model g = build_generator(GanSpec{});
  // dense -> reshape to [N,128,8,8]; the first upsample lands at 16x16.
  laif::ReshapeTo reshape(std::vector<int>{128, 8, 8});
  CHECK(reshape.output_shape(Shape{1, 8192}) == Shape{1, 128, 8, 8});
  laif::Upsample2x up;
  CHECK(up.output_shape(Shape{1, 128, 8, 8}) == Shape{1, 128, 16, 16});
  CHECK(g.net.at(0).kind() == "dense");
  CHECK(g.net.at(2).kind() == "batchnorm");
}

TEST_CASE("conv block halves spatial dims and orders its stages") {
  Sequential net(Shape{1, 8, 32, 32});
  laif::add_conv_block(net, 8, 16);
  CHECK(net.output_shape() == Shape{1, 16, 16, 16});
  REQUIRE(net.size() == 4);
  CHECK(net.at(0).kind() == "conv");
  CHECK(net.at(1).kind() == "leaky_relu");
  CHECK(net.at(2).kind() == "dropout");
  CHECK(net.at(3).kind() == "batchnorm");
}

TEST_CASE("discriminator maps images to probabilities") {
  Model d = build_discriminator(GanSpec{});
  CHECK(d.arch == "dcgan-d");
  CHECK(d.net.output_shape() == Shape{1, 1});
  CHECK(d.net.at(0).output_shape(Shape{1, 1, 32, 32}).dim(1) == 8);  // stem feeds the first block

  Rng rng(13);
  d.net.init(rng);
  d.net.set_mode(false);
  Tape tape;
  Var p = d.net.forward(tape, tape.constant(random_tensor(Shape{3, 1, 32, 32}, rng, -1.0f, 1.0f)));
  const Tensor& out = tape.value(p);
  CHECK(out.shape() == Shape{3, 1});
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out[static_cast<std::size_t>(i)] > 0.0f);
    CHECK(out[static_cast<std::size_t>(i)] < 1.0f);
  }
}

TEST_CASE("gan specs reject incompatible image sizes") {
  GanSpec g;
  g.img_size = 30;
  CHECK(kind_of([&] { (void)build_generator(g); }) == ErrorKind::kInvalidSpec);
  GanSpec d;
  d.img_size = 24;  // divisible by 4 but not by 16
  CHECK(kind_of([&] { (void)build_discriminator(d); }) == ErrorKind::kInvalidSpec);
  CHECK(build_generator(d).net.output_shape() == Shape{1, 1, 24, 24});
  GanSpec zero;
  zero.latent_dim = 0;
  CHECK(kind_of([&] { (void)build_generator(zero); }) == ErrorKind::kInvalidSpec);
}

TEST_CASE("same-seed rebuilds are bitwise identical") {
  Model a = build_recognizer(RecognizerSpec{});
  Model b = build_recognizer(RecognizerSpec{});
  Rng r1(123), r2(123);
  a.net.init(r1);
  b.net.init(r2);
  auto sa = snapshot(a), sb = snapshot(b);
  REQUIRE(sa.size() == sb.size());
  for (const auto& [name, tensor] : sa) CHECK(tensor.same_bits(sb.at(name)));

  Model g1 = build_generator(GanSpec{});
  Model g2 = build_generator(GanSpec{});
  Rng r3(9), r4(9);
  g1.net.init(r3);
  g2.net.init(r4);
  auto sg1 = snapshot(g1), sg2 = snapshot(g2);
  for (const auto& [name, tensor] : sg1) CHECK(tensor.same_bits(sg2.at(name)));
}
