#include "funginet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "funginet/autograd.hpp"

namespace funginet {

void sgd_step(const std::vector<Tensor>& parameters, OptimizerState& state, bool strict,
              const std::vector<std::string>* names) {
  if (!(state.learning_rate > 0.0))
    throw std::invalid_argument("sgd_step: learning_rate must be positive");
  if (state.momentum < 0.0 || state.momentum >= 1.0)
    throw std::invalid_argument("sgd_step: momentum must lie in [0,1)");
  if (state.velocity.empty()) {
    state.velocity.reserve(parameters.size());
    for (const Tensor& p : parameters)
      state.velocity.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
  if (state.velocity.size() != parameters.size())
    throw std::invalid_argument("sgd_step: optimizer state sized for " +
                                std::to_string(state.velocity.size()) + " parameters, got " +
                                std::to_string(parameters.size()));

  for (std::size_t i = 0; i < parameters.size(); ++i) {
    Tensor p = parameters[i];
    if (!p.has_grad()) {
      if (strict) {
        std::string label = names && i < names->size() ? (*names)[i]
                                                       : ("parameter #" + std::to_string(i));
        throw std::runtime_error("sgd_step: missing gradient for " + label);
      }
      continue;
    }
    if (state.velocity[i].shape() != p.shape())
      throw std::invalid_argument("sgd_step: velocity shape mismatch at parameter " +
                                  std::to_string(i));
    std::size_t n = p.size();
    if (p.dtype() == DType::f32) {
      float* w = p.f32();
      float* g = p.grad_f32();
      float* v = state.velocity[i].f32();
      const float mu = static_cast<float>(state.momentum);
      const float lr = static_cast<float>(state.learning_rate);
      for (std::size_t k = 0; k < n; ++k) {
        v[k] = mu * v[k] + g[k];
        w[k] -= lr * v[k];
      }
    } else {
      double* w = p.f64();
      double* g = p.grad_f64();
      double* v = state.velocity[i].f64();
      for (std::size_t k = 0; k < n; ++k) {
        v[k] = state.momentum * v[k] + g[k];
        w[k] -= state.learning_rate * v[k];
      }
    }
    p.zero_grad();
  }
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw std::invalid_argument("EarlyStopping: patience must be >= 1");
}

EarlyStopping::Decision EarlyStopping::observe(double val_loss) {
  ++epoch_;
  Decision d;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    streak_ = 0;
    d.improved = true;
  } else {
    ++streak_;
  }
  d.stop = streak_ >= patience_;
  return d;
}

Trainer::Trainer(ModelGraph& model, const DatasetManifest& data, const TrainConfig& cfg,
                 ImageCache* cache)
    : model_(&model), data_(&data), cfg_(cfg), cache_(cache) {
  if (cfg.batch_size == 0) throw std::invalid_argument("Trainer: batch_size must be >= 1");
  opt_.learning_rate = cfg.learning_rate;
  opt_.momentum = cfg.momentum;
  for (const ParamEntry& p : model.parameters()) {
    if (p.trainable && p.tensor.requires_grad()) {
      trainable_.push_back(p.tensor);
      trainable_names_.push_back(p.name);
    }
  }
  if (trainable_.empty()) throw std::invalid_argument("Trainer: model has no trainable parameters");
}

EpochStats Trainer::run_epoch() {
  ++epoch_;
  auto t0 = std::chrono::steady_clock::now();
  EpochStats stats;

  auto plans = epoch_batch_plan(*data_, Split::train, cfg_.batch_size, cfg_.seed, epoch_);
  double loss_sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t b = 0; b < plans.size(); ++b) {
    Batch batch = load_batch(*data_, plans[b], Split::train, cfg_.preprocess, cache_);
    Tape tape;
    double loss_value;
    {
      TapeScope scope(tape);
      Rng dropout_rng(derive_seed(cfg_.seed, stream::dropout, epoch_, b));
      Tensor logits = model_->forward(batch.images, Mode::train, &dropout_rng);
      Tensor loss = softmax_cross_entropy(logits, batch.labels);
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch_) + ", batch " + std::to_string(b + 1));
      }
      backward(loss, tape);
    }
    sgd_step(trainable_, opt_, true, &trainable_names_);
    loss_sum += loss_value * static_cast<double>(batch.labels.size());
    seen += batch.labels.size();
  }
  stats.train_loss = loss_sum / static_cast<double>(seen);

  // Full-validation pass in eval mode.
  auto val_plans = epoch_batch_plan(*data_, Split::val, cfg_.batch_size, cfg_.seed, epoch_);
  double val_loss_sum = 0.0;
  std::size_t val_seen = 0, val_correct = 0;
  for (const BatchPlan& plan : val_plans) {
    Batch batch = load_batch(*data_, plan, Split::val, cfg_.preprocess, cache_);
    Tensor logits = model_->forward(batch.images, Mode::eval, nullptr);
    Tensor loss = softmax_cross_entropy(logits, batch.labels);
    val_loss_sum += loss.item() * static_cast<double>(batch.labels.size());
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      std::vector<double> probs = softmax_row(logits, i);
      int predicted = probs[1] >= 0.5 ? 1 : 0;
      val_correct += (predicted == batch.labels[i]);
    }
    val_seen += batch.labels.size();
  }
  stats.val_loss = val_loss_sum / static_cast<double>(val_seen);
  stats.val_accuracy = static_cast<double>(val_correct) / static_cast<double>(val_seen);
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

TrainRecord train_model(ModelGraph& model, const DatasetManifest& data, const TrainConfig& cfg,
                        std::ostream* epoch_log, const std::string& log_csv_path,
                        ImageCache* cache) {
  if (cfg.max_epochs == 0) throw std::invalid_argument("train_model: max_epochs must be >= 1");
  Trainer trainer(model, data, cfg, cache);
  EarlyStopping stopping(cfg.patience);
  TrainRecord record;
  std::vector<Tensor> best_snapshot;

  std::ofstream csv;
  if (!log_csv_path.empty()) {
    csv.open(log_csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw std::runtime_error("train_model: cannot write log CSV " + log_csv_path);
    csv << "epoch,train_loss,val_loss,val_accuracy,seconds\n";
  }

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochStats stats = trainer.run_epoch();
    record.epochs.push_back(stats);
    record.stop_epoch = epoch;
    EarlyStopping::Decision d = stopping.observe(stats.val_loss);
    if (d.improved) {
      best_snapshot = model.snapshot_parameters();
      record.best_epoch = epoch;
    }
    if (epoch_log) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "epoch %zu train_loss %.6f val_loss %.6f val_acc %.4f", epoch,
                    stats.train_loss, stats.val_loss, stats.val_accuracy);
      (*epoch_log) << line << '\n';
    }
    if (csv.is_open()) {
      char line[200];
      std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.6f,%.3f\n", epoch, stats.train_loss,
                    stats.val_loss, stats.val_accuracy, stats.seconds);
      csv << line;
    }
    if (d.stop) break;
  }
  if (!best_snapshot.empty()) model.restore_parameters(best_snapshot);
  return record;
}

PredictionSet predict_split(ModelGraph& model, const DatasetManifest& data, Split split,
                            std::size_t batch_size, const PreprocessOptions& opts,
                            ImageCache* cache) {
  if (model.output_dim() != 2)
    throw std::logic_error("predict_split: expected a 2-class model, head width is " +
                           std::to_string(model.output_dim()));
  PredictionSet p;
  for (const BatchPlan& plan : epoch_batch_plan(data, split, batch_size, 0, 0)) {
    Batch batch = load_batch(data, plan, split, opts, cache);
    Tensor logits = model.forward(batch.images, Mode::eval, nullptr);
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      std::vector<double> probs = softmax_row(logits, i);
      p.labels.push_back(batch.labels[i]);
      p.scores.push_back(probs[1]);
    }
  }
  predict_labels(p);
  return p;
}

MetricsReport evaluate_model(ModelGraph& model, const DatasetManifest& data, Split split,
                             std::size_t batch_size, const PreprocessOptions& opts,
                             ImageCache* cache) {
  return compute_report(predict_split(model, data, split, batch_size, opts, cache));
}

ExperimentResult run_experiment(const TrainConfig& cfg, const DatasetManifest& data,
                                ImageCache* cache, std::ostream* log) {
  if (cfg.repeats == 0) throw std::invalid_argument("run_experiment: repeats must be >= 1");
  ExperimentResult result;
  std::vector<MetricsReport> test_reports;
  for (std::size_t r = 1; r <= cfg.repeats; ++r) {
    std::uint64_t seed_r = derive_seed(cfg.seed, stream::repeat, r);
    ModelGraph model = build_model(cfg.arch, cfg.num_classes, seed_r);
    if (cfg.freeze_backbone) model.freeze_backbone();
    TrainConfig run_cfg = cfg;
    run_cfg.seed = seed_r;
    if (log) (*log) << "repeat " << r << "/" << cfg.repeats << " (seed " << seed_r << ")\n";
    RepeatResult rep;
    rep.record = train_model(model, data, run_cfg, log, "", cache);
    MetricsReport val_report = evaluate_model(model, data, Split::val, cfg.batch_size,
                                              cfg.preprocess, cache);
    rep.val_accuracy = val_report.accuracy;
    rep.test_report = evaluate_model(model, data, Split::test, cfg.batch_size, cfg.preprocess,
                                     cache);
    result.mean_val_accuracy += rep.val_accuracy;
    test_reports.push_back(rep.test_report);
    result.repeats.push_back(std::move(rep));
  }
  result.mean_val_accuracy /= static_cast<double>(cfg.repeats);
  result.mean_test = mean_report(test_reports);
  return result;
}

std::pair<std::size_t, std::vector<ExperimentResult>> run_experiment_select(
    const std::vector<TrainConfig>& candidates, const DatasetManifest& data, ImageCache* cache,
    std::ostream* log) {
  if (candidates.empty())
    throw std::invalid_argument("run_experiment_select: no candidate configs");
  std::vector<ExperimentResult> results;
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (log) (*log) << "candidate config " << (i + 1) << "/" << candidates.size() << '\n';
    results.push_back(run_experiment(candidates[i], data, cache, log));
    if (results[i].mean_val_accuracy > results[best].mean_val_accuracy) best = i;
  }
  return {best, std::move(results)};
}

}  // namespace funginet
