#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "funginet/dataset.hpp"
#include "funginet/metrics.hpp"
#include "funginet/zoo.hpp"

namespace funginet {

struct OptimizerState {
  double learning_rate = 0.001;
  double momentum = 0.9;
  std::vector<Tensor> velocity;  // zero-initialized, shaped like the parameters
};

// Per parameter: v <- momentum * v + g, then w <- w - learning_rate * v.
// Gradients are zeroed afterwards. In strict mode a trainable parameter
// without a populated gradient is an error.
void sgd_step(const std::vector<Tensor>& parameters, OptimizerState& state, bool strict = true,
              const std::vector<std::string>* names = nullptr);

// Strict-improvement early stopping on validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  struct Decision {
    bool improved = false;
    bool stop = false;
  };
  Decision observe(double val_loss);

  std::size_t epochs_seen() const { return epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t streak_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct TrainConfig {
  std::size_t max_epochs = 500;
  std::size_t patience = 5;
  std::size_t batch_size = 4;
  std::size_t repeats = 5;
  std::uint64_t seed = 1;
  ArchitectureId arch = ArchitectureId::resnet50;
  int num_classes = 2;
  double learning_rate = 0.001;
  double momentum = 0.9;
  bool freeze_backbone = false;
  PreprocessOptions preprocess;
  // The early-stopping monitor is validation loss, fixed.
};

struct EpochStats {
  double train_loss = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  double seconds = 0;
};

struct TrainRecord {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based
  std::size_t stop_epoch = 0;  // 1-based
};

// One model + optimizer bound to a dataset; run_epoch() advances one full
// train pass followed by a validation pass. train_model drives this loop;
// tests can drive it directly.
class Trainer {
 public:
  Trainer(ModelGraph& model, const DatasetManifest& data, const TrainConfig& cfg,
          ImageCache* cache = nullptr);

  EpochStats run_epoch();
  std::size_t epochs_run() const { return epoch_; }
  ModelGraph& model() { return *model_; }

 private:
  ModelGraph* model_;
  const DatasetManifest* data_;
  TrainConfig cfg_;
  ImageCache* cache_;
  OptimizerState opt_;
  std::vector<Tensor> trainable_;
  std::vector<std::string> trainable_names_;
  std::size_t epoch_ = 0;
};

// Full training loop with early stopping and best-weight restoration. Writes
// one log line per epoch to epoch_log when given, and a per-epoch CSV with
// header epoch,train_loss,val_loss,val_accuracy,seconds to log_csv_path when
// non-empty.
TrainRecord train_model(ModelGraph& model, const DatasetManifest& data, const TrainConfig& cfg,
                        std::ostream* epoch_log = nullptr, const std::string& log_csv_path = "",
                        ImageCache* cache = nullptr);

// Eval-mode predictions over one split (scores = positive-class softmax).
PredictionSet predict_split(ModelGraph& model, const DatasetManifest& data, Split split,
                            std::size_t batch_size, const PreprocessOptions& opts = {},
                            ImageCache* cache = nullptr);

MetricsReport evaluate_model(ModelGraph& model, const DatasetManifest& data, Split split,
                             std::size_t batch_size, const PreprocessOptions& opts = {},
                             ImageCache* cache = nullptr);

struct RepeatResult {
  TrainRecord record;
  MetricsReport test_report;
  double val_accuracy = 0;
};

struct ExperimentResult {
  std::vector<RepeatResult> repeats;
  MetricsReport mean_test;
  double mean_val_accuracy = 0;
};

// Trains `repeats` models with seeds derived from (cfg.seed, repeat index),
// evaluates each on the test split, and averages the metric reports.
ExperimentResult run_experiment(const TrainConfig& cfg, const DatasetManifest& data,
                                ImageCache* cache = nullptr, std::ostream* log = nullptr);

// Runs every candidate config and returns the index of the one with the best
// mean validation accuracy; its experiment result is the evaluated one.
std::pair<std::size_t, std::vector<ExperimentResult>> run_experiment_select(
    const std::vector<TrainConfig>& candidates, const DatasetManifest& data,
    ImageCache* cache = nullptr, std::ostream* log = nullptr);

}  // namespace funginet
