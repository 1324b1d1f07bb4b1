#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/layers.hpp"

namespace laif {

/// A built network plus the identity needed to checkpoint and reload it.
/// `arch` is one of "rec-desk", "rec-vgg19", "dcgan-g", "dcgan-d";
/// class_names is populated for recognizers only.
struct Model {
  Sequential net;
  std::string arch;
  std::vector<std::string> class_names;
};

/// Recognizer: stacks of 3x3 stride-1 pad-1 conv+relu with maxpools, then a
/// dense tail ending in a replaceable classification head.
///   desk scale:  [16,16,M,32,32,M,64,M] + dense(256) + head
///   full scale:  the 16-conv VGG19 plan + 3 dense layers sized for the
///                1-channel 32x32 footprint
struct RecognizerSpec {
  std::string scale = "desk";  // "desk" or "vgg19"
  int head_classes = 30;
  int img_size = 32;
  int channels = 1;
};

struct GanSpec {
  int latent_dim = 100;
  int channels = 1;
  int img_size = 32;  // divisible by 4 (generator) and 16 (discriminator)
};

Model build_recognizer(const RecognizerSpec& spec);

/// Swaps the final dense head for a fresh Xavier-initialized dense with
/// `new_classes` outputs; every other tensor is preserved bitwise.
/// Returns the old head layer.
std::unique_ptr<Layer> replace_head(Model& model, int new_classes, Rng& rng);

Model build_generator(const GanSpec& spec);
Model build_discriminator(const GanSpec& spec);

/// Discriminator building block: conv(in,out,3,stride 2,pad 1) -> LReLU(0.2)
/// -> Dropout2d(0.25) -> BN(out, momentum 0.8), appended to `net`.
void add_conv_block(Sequential& net, int in_c, int out_c);

std::int64_t param_count(Sequential& net);

}  // namespace laif
