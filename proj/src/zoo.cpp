#include "funginet/zoo.hpp"

#include <stdexcept>

namespace funginet {

ArchitectureId parse_architecture(const std::string& name) {
  if (name == "alexnet") return ArchitectureId::alexnet;
  if (name == "vgg16") return ArchitectureId::vgg16;
  if (name == "densenet121") return ArchitectureId::densenet121;
  if (name == "resnet50") return ArchitectureId::resnet50;
  throw std::invalid_argument("unknown architecture '" + name +
                              "' (expected alexnet, vgg16, densenet121 or resnet50)");
}

std::string architecture_id(ArchitectureId arch) {
  switch (arch) {
    case ArchitectureId::alexnet: return "alexnet";
    case ArchitectureId::vgg16: return "vgg16";
    case ArchitectureId::densenet121: return "densenet121";
    case ArchitectureId::resnet50: return "resnet50";
  }
  throw std::logic_error("unreachable architecture id");
}

std::string architecture_display_name(ArchitectureId arch) {
  switch (arch) {
    case ArchitectureId::alexnet: return "AlexNet";
    case ArchitectureId::vgg16: return "VGG16";
    case ArchitectureId::densenet121: return "DenseNet121";
    case ArchitectureId::resnet50: return "ResNet50";
  }
  throw std::logic_error("unreachable architecture id");
}

std::size_t head_input_width(ArchitectureId arch) {
  switch (arch) {
    case ArchitectureId::alexnet: return 4096;
    case ArchitectureId::vgg16: return 4096;
    case ArchitectureId::densenet121: return 1024;
    case ArchitectureId::resnet50: return 2048;
  }
  throw std::logic_error("unreachable architecture id");
}

namespace {

// Single-tower AlexNet without local response normalization, the variant
// shipped by modern pretrained-model zoos.
void build_alexnet(ModelGraph& g, int num_classes, Rng& rng) {
  int x = g.add_input(3, 224, 224);
  x = g.add_conv("features.0", x, 64, 11, 4, 2, true, rng);
  x = g.add_relu(x);
  x = g.add_maxpool(x, 3, 2, 0);
  x = g.add_conv("features.3", x, 192, 5, 1, 2, true, rng);
  x = g.add_relu(x);
  x = g.add_maxpool(x, 3, 2, 0);
  x = g.add_conv("features.6", x, 384, 3, 1, 1, true, rng);
  x = g.add_relu(x);
  x = g.add_conv("features.8", x, 256, 3, 1, 1, true, rng);
  x = g.add_relu(x);
  x = g.add_conv("features.10", x, 256, 3, 1, 1, true, rng);
  x = g.add_relu(x);
  x = g.add_maxpool(x, 3, 2, 0);
  if (g.node_shape(x) != std::vector<std::size_t>{256, 6, 6})
    throw std::logic_error("alexnet: unexpected feature shape before the classifier");
  x = g.add_flatten(x);
  x = g.add_dropout(x, 0.5);
  x = g.add_linear("classifier.1", x, 4096, rng);
  x = g.add_relu(x);
  x = g.add_dropout(x, 0.5);
  x = g.add_linear("classifier.4", x, 4096, rng);
  x = g.add_relu(x);
  x = g.add_linear("classifier.6", x, static_cast<std::size_t>(num_classes), rng);
  g.set_output(x);
  g.set_head_prefix("classifier.6");
}

void build_vgg16(ModelGraph& g, int num_classes, Rng& rng) {
  // Configuration D: conv channel runs with a max pool after each run.
  const std::vector<std::vector<std::size_t>> blocks = {
      {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
  int x = g.add_input(3, 224, 224);
  int idx = 0;
  for (const auto& block : blocks) {
    for (std::size_t ch : block) {
      x = g.add_conv("features." + std::to_string(idx), x, ch, 3, 1, 1, true, rng);
      idx += 2;  // conv + relu share the sequential numbering
      x = g.add_relu(x);
    }
    x = g.add_maxpool(x, 2, 2, 0);
    idx += 1;
  }
  if (g.node_shape(x) != std::vector<std::size_t>{512, 7, 7})
    throw std::logic_error("vgg16: unexpected feature shape before the classifier");
  x = g.add_flatten(x);
  x = g.add_linear("classifier.0", x, 4096, rng);
  x = g.add_relu(x);
  x = g.add_dropout(x, 0.5);
  x = g.add_linear("classifier.3", x, 4096, rng);
  x = g.add_relu(x);
  x = g.add_dropout(x, 0.5);
  x = g.add_linear("classifier.6", x, static_cast<std::size_t>(num_classes), rng);
  g.set_output(x);
  g.set_head_prefix("classifier.6");
}

int resnet_bottleneck(ModelGraph& g, const std::string& scope, int x, std::size_t width,
                      int stride, Rng& rng) {
  const std::size_t in_ch = g.node_shape(x)[0];
  const std::size_t out_ch = width * 4;
  int y = g.add_conv(scope + ".conv1", x, width, 1, 1, 0, false, rng);
  y = g.add_batchnorm(scope + ".bn1", y);
  y = g.add_relu(y);
  y = g.add_conv(scope + ".conv2", y, width, 3, stride, 1, false, rng);
  y = g.add_batchnorm(scope + ".bn2", y);
  y = g.add_relu(y);
  y = g.add_conv(scope + ".conv3", y, out_ch, 1, 1, 0, false, rng);
  y = g.add_batchnorm(scope + ".bn3", y);
  int shortcut = x;
  if (stride != 1 || in_ch != out_ch) {
    shortcut = g.add_conv(scope + ".downsample.0", x, out_ch, 1, stride, 0, false, rng);
    shortcut = g.add_batchnorm(scope + ".downsample.1", shortcut);
  }
  y = g.add_residual(y, shortcut);
  return g.add_relu(y);
}

void build_resnet50(ModelGraph& g, int num_classes, Rng& rng) {
  const std::vector<std::pair<std::size_t, int>> stages = {
      {64, 3}, {128, 4}, {256, 6}, {512, 3}};
  int x = g.add_input(3, 224, 224);
  x = g.add_conv("conv1", x, 64, 7, 2, 3, false, rng);
  x = g.add_batchnorm("bn1", x);
  x = g.add_relu(x);
  x = g.add_maxpool(x, 3, 2, 1);
  for (std::size_t stage = 0; stage < stages.size(); ++stage) {
    auto [width, blocks] = stages[stage];
    for (int b = 0; b < blocks; ++b) {
      int stride = (stage > 0 && b == 0) ? 2 : 1;
      std::string scope = "layer" + std::to_string(stage + 1) + "." + std::to_string(b);
      x = resnet_bottleneck(g, scope, x, width, stride, rng);
    }
  }
  if (g.node_shape(x) != std::vector<std::size_t>{2048, 7, 7})
    throw std::logic_error("resnet50: unexpected feature shape before pooling");
  x = g.add_global_avgpool(x);
  x = g.add_flatten(x);
  x = g.add_linear("fc", x, static_cast<std::size_t>(num_classes), rng);
  g.set_output(x);
  g.set_head_prefix("fc");
}

int dense_layer(ModelGraph& g, const std::string& scope, int x, std::size_t growth,
                std::size_t bn_size, Rng& rng) {
  int y = g.add_batchnorm(scope + ".norm1", x);
  y = g.add_relu(y);
  y = g.add_conv(scope + ".conv1", y, bn_size * growth, 1, 1, 0, false, rng);
  y = g.add_batchnorm(scope + ".norm2", y);
  y = g.add_relu(y);
  y = g.add_conv(scope + ".conv2", y, growth, 3, 1, 1, false, rng);
  return g.add_concat({x, y});
}

void build_densenet121(ModelGraph& g, int num_classes, Rng& rng) {
  const std::size_t growth = 32, bn_size = 4;
  const std::vector<int> block_layers = {6, 12, 24, 16};
  int x = g.add_input(3, 224, 224);
  x = g.add_conv("features.conv0", x, 64, 7, 2, 3, false, rng);
  x = g.add_batchnorm("features.norm0", x);
  x = g.add_relu(x);
  x = g.add_maxpool(x, 3, 2, 1);
  std::size_t channels = 64;
  for (std::size_t b = 0; b < block_layers.size(); ++b) {
    std::string block_scope = "features.denseblock" + std::to_string(b + 1);
    for (int l = 0; l < block_layers[b]; ++l) {
      x = dense_layer(g, block_scope + ".denselayer" + std::to_string(l + 1), x, growth, bn_size,
                      rng);
    }
    channels += growth * static_cast<std::size_t>(block_layers[b]);
    if (g.node_shape(x)[0] != channels) {
      throw std::logic_error("densenet121: dense block " + std::to_string(b + 1) +
                             " channel bookkeeping mismatch: expected " +
                             std::to_string(channels) + ", built " +
                             std::to_string(g.node_shape(x)[0]));
    }
    if (b + 1 < block_layers.size()) {
      std::string t = "features.transition" + std::to_string(b + 1);
      x = g.add_batchnorm(t + ".norm", x);
      x = g.add_relu(x);
      channels /= 2;
      x = g.add_conv(t + ".conv", x, channels, 1, 1, 0, false, rng);
      x = g.add_avgpool(x, 2, 2, 0);
    }
  }
  x = g.add_batchnorm("features.norm5", x);
  x = g.add_relu(x);
  x = g.add_global_avgpool(x);
  x = g.add_flatten(x);
  x = g.add_linear("classifier", x, static_cast<std::size_t>(num_classes), rng);
  g.set_output(x);
  g.set_head_prefix("classifier");
}

}  // namespace

ModelGraph build_model(ArchitectureId arch, int num_classes, std::uint64_t seed) {
  if (num_classes < 2) {
    throw std::invalid_argument("build_model: num_classes must be >= 2, got " +
                                std::to_string(num_classes));
  }
  Rng rng(derive_seed(seed, stream::model_init));
  ModelGraph g;
  switch (arch) {
    case ArchitectureId::alexnet: build_alexnet(g, num_classes, rng); break;
    case ArchitectureId::vgg16: build_vgg16(g, num_classes, rng); break;
    case ArchitectureId::densenet121: build_densenet121(g, num_classes, rng); break;
    case ArchitectureId::resnet50: build_resnet50(g, num_classes, rng); break;
  }
  g.architecture = architecture_id(arch);
  g.declared_classes = num_classes;
  g.creation_seed = seed;
  return g;
}

}  // namespace funginet
