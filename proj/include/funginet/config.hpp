#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "funginet/train.hpp"

namespace funginet {

// Every tunable of the pipeline; defaults are the published study values.
// Unknown JSON keys are rejected so hyperparameter typos fail loudly.
struct ExperimentConfig {
  int image_resize = 256;
  int crop_size = 224;
  std::array<double, 3> norm_mean{0.485, 0.456, 0.406};
  std::array<double, 3> norm_std{0.229, 0.224, 0.225};
  std::string architecture = "resnet50";
  int num_classes = 2;
  double learning_rate = 0.001;
  double momentum = 0.9;
  std::size_t batch_size = 4;
  std::size_t max_epochs = 500;
  std::size_t patience = 5;
  std::size_t repeats = 5;
  std::size_t test_count = 90;
  std::size_t val_count = 40;
  std::uint64_t seed = 1;
  bool freeze_backbone = false;
  std::string data_root;        // optional; CLI flags may override
  std::string checkpoint_out;   // optional default output path
  std::string log_csv;          // optional default per-epoch CSV path
};

ExperimentConfig parse_config_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Fully resolved config as JSON, echoed to the run log for reproducibility.
std::string config_to_json(const ExperimentConfig& cfg);

TrainConfig to_train_config(const ExperimentConfig& cfg);
PreprocessOptions to_preprocess_options(const ExperimentConfig& cfg);

}  // namespace funginet
