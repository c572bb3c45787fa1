#pragma once

#include <cstdint>
#include <string>

#include "funginet/graph.hpp"

namespace funginet {

enum class ArchitectureId { alexnet, vgg16, densenet121, resnet50 };

ArchitectureId parse_architecture(const std::string& name);  // lowercase id
std::string architecture_id(ArchitectureId arch);            // "resnet50"
std::string architecture_display_name(ArchitectureId arch);  // "ResNet50"

// Builds the named architecture with a fresh classifier head of width
// num_classes. Weights are Kaiming-uniform initialized from the seed;
// batchnorm starts at gamma=1, beta=0, running stats (0,1).
ModelGraph build_model(ArchitectureId arch, int num_classes, std::uint64_t seed);

// Final-layer input widths (feature width seen by the classifier head).
std::size_t head_input_width(ArchitectureId arch);

}  // namespace funginet
