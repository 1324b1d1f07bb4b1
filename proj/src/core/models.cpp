#include "core/models.hpp"

#include <cmath>

namespace laif {

namespace {

constexpr int kPool = -1;

Sequential conv_backbone(const std::vector<int>& plan, int channels, int img_size, int hidden) {
  Sequential net(Shape{1, channels, img_size, img_size});
  int c = channels;
  for (int entry : plan) {
    if (entry == kPool) {
      net.add(std::make_unique<MaxPool2>());
    } else {
      net.add(std::make_unique<Conv2dLayer>(c, entry, 3, 1, 1));
      net.add(std::make_unique<Relu>());
      c = entry;
    }
  }
  net.add(std::make_unique<Flatten>());
  const Shape& flat = net.output_shape();
  net.add(std::make_unique<Dense>(flat.dim(1), hidden));
  net.add(std::make_unique<Relu>());
  return net;
}

}  // namespace

Model build_recognizer(const RecognizerSpec& spec) {
  if (spec.head_classes < 2) fail(ErrorKind::kInvalidPlan, "head needs at least 2 classes");
  if (spec.img_size < 8 || spec.channels < 1) fail(ErrorKind::kInvalidPlan, "bad input geometry");
  Model model;
  if (spec.scale == "desk") {
    if (spec.img_size % 8 != 0) fail(ErrorKind::kInvalidPlan, "desk plan needs img_size divisible by 8");
    model.net = conv_backbone({16, 16, kPool, 32, 32, kPool, 64, kPool}, spec.channels, spec.img_size, 256);
    model.arch = "rec-desk";
  } else if (spec.scale == "vgg19") {
    if (spec.img_size % 32 != 0) fail(ErrorKind::kInvalidPlan, "vgg19 plan needs img_size divisible by 32");
    model.net = conv_backbone({64, 64, kPool, 128, 128, kPool, 256, 256, 256, 256, kPool,
                               512, 512, 512, 512, kPool, 512, 512, 512, 512, kPool},
                              spec.channels, spec.img_size, 256);
    model.net.add(std::make_unique<Dense>(256, 256));
    model.net.add(std::make_unique<Relu>());
    model.arch = "rec-vgg19";
  } else {
    fail(ErrorKind::kInvalidPlan, "unknown scale: " + spec.scale);
  }
  model.net.add(std::make_unique<Dense>(256, spec.head_classes));
  return model;
}

std::unique_ptr<Layer> replace_head(Model& model, int new_classes, Rng& rng) {
  if (new_classes < 2) fail(ErrorKind::kInvalidPlan, "head needs at least 2 classes");
  if (model.net.size() == 0 || model.net.at(model.net.size() - 1).kind() != "dense")
    fail(ErrorKind::kNoHead, "model does not end in a dense head");
  const std::size_t index = model.net.size() - 1;
  auto& old_head = static_cast<Dense&>(model.net.at(index));
  auto fresh = std::make_unique<Dense>(old_head.in_features(), new_classes);
  fresh->init(rng);
  return model.net.replace(index, std::move(fresh));
}

Model build_generator(const GanSpec& spec) {
  if (spec.img_size < 4 || spec.img_size % 4 != 0) fail(ErrorKind::kInvalidSpec, "img_size must be divisible by 4");
  if (spec.latent_dim < 1 || spec.channels < 1) fail(ErrorKind::kInvalidSpec, "bad latent or channel count");
  const int s4 = spec.img_size / 4;
  Model model;
  model.arch = "dcgan-g";
  Sequential net(Shape{1, spec.latent_dim});
  net.add(std::make_unique<Dense>(spec.latent_dim, 128 * s4 * s4));
  net.add(std::make_unique<ReshapeTo>(std::vector<int>{128, s4, s4}));
  net.add(std::make_unique<BatchNorm2d>(128));  // default momentum, unlike the rest of the stack
  net.add(std::make_unique<Upsample2x>());
  net.add(std::make_unique<Conv2dLayer>(128, 128, 3, 1, 1));
  net.add(std::make_unique<BatchNorm2d>(128, 0.8f));
  net.add(std::make_unique<LeakyRelu>(0.2f));
  net.add(std::make_unique<Upsample2x>());
  net.add(std::make_unique<Conv2dLayer>(128, 64, 3, 1, 1));
  net.add(std::make_unique<BatchNorm2d>(64, 0.8f));
  net.add(std::make_unique<LeakyRelu>(0.2f));
  net.add(std::make_unique<Conv2dLayer>(64, spec.channels, 3, 1, 1));
  net.add(std::make_unique<Tanh>());
  model.net = std::move(net);
  return model;
}

void add_conv_block(Sequential& net, int in_c, int out_c) {
  net.add(std::make_unique<Conv2dLayer>(in_c, out_c, 3, 2, 1));
  net.add(std::make_unique<LeakyRelu>(0.2f));
  net.add(std::make_unique<Dropout2d>(0.25f));
  net.add(std::make_unique<BatchNorm2d>(out_c, 0.8f));
}

Model build_discriminator(const GanSpec& spec) {
  if (spec.img_size < 16 || spec.img_size % 16 != 0) fail(ErrorKind::kInvalidSpec, "img_size must be divisible by 16");
  if (spec.channels < 1) fail(ErrorKind::kInvalidSpec, "bad channel count");
  const int s16 = spec.img_size / 16;
  Model model;
  model.arch = "dcgan-d";
  Sequential net(Shape{1, spec.channels, spec.img_size, spec.img_size});
  net.add(std::make_unique<Conv2dLayer>(spec.channels, 8, 3, 1, 1));
  net.add(std::make_unique<LeakyRelu>(0.2f));
  add_conv_block(net, 8, 16);
  add_conv_block(net, 16, 32);
  add_conv_block(net, 32, 64);
  add_conv_block(net, 64, 128);
  net.add(std::make_unique<Flatten>());
  net.add(std::make_unique<Dense>(128 * s16 * s16, 1));
  net.add(std::make_unique<Sigmoid>());
  model.net = std::move(net);
  return model;
}

std::int64_t param_count(Sequential& net) {
  std::int64_t n = 0;
  net.visit_params([&](ParamSlot& slot) { n += slot.value.numel(); });
  return n;
}

}  // namespace laif
