#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "funginet/dataset.hpp"
#include "funginet/imageio.hpp"
#include "funginet/train.hpp"

using namespace funginet;
namespace fs = std::filesystem;

namespace {

Tensor scalar_param(double v) {
  Tensor t = Tensor::scalar(v);
  t.set_requires_grad(true);
  return t;
}

void set_grad(Tensor& t, double g) {
  t.zero_grad();
  t.grad_f32()[0] = static_cast<float>(g);
}

// Input (3,12,12): a small stack that still exercises conv, bn and the head.
ModelGraph tiny_model(std::uint64_t seed) {
  Rng rng(derive_seed(seed, stream::model_init));
  ModelGraph g;
  int x = g.add_input(3, 12, 12);
  x = g.add_conv("conv1", x, 4, 3, 2, 1, true, rng);
  x = g.add_relu(x);
  x = g.add_global_avgpool(x);
  x = g.add_flatten(x);
  x = g.add_linear("fc", x, 2, rng);
  g.set_output(x);
  g.set_head_prefix("fc");
  g.creation_seed = seed;
  g.declared_classes = 2;
  return g;
}

struct TinyCorpus {
  fs::path root;
  DatasetManifest manifest;

  explicit TinyCorpus(const std::string& name, int per_class = 6) {
    root = fs::temp_directory_path() / name;
    fs::remove_all(root);
    fs::create_directories(root / "edible");
    fs::create_directories(root / "poisonous");
    Rng rng(12321);
    for (int i = 0; i < per_class; ++i) {
      // Dark textured edible images, bright textured poisonous ones.
      ImageBuffer dark = make_image(16, 16, 0);
      ImageBuffer bright = make_image(16, 16, 0);
      for (std::size_t k = 0; k < dark.pixels.size(); ++k) {
        dark.pixels[k] = static_cast<std::uint8_t>(rng.below(90));
        bright.pixels[k] = static_cast<std::uint8_t>(160 + rng.below(90));
      }
      encode_png((root / "edible" / ("e" + std::to_string(i) + ".png")).string(), dark);
      encode_png((root / "poisonous" / ("p" + std::to_string(i) + ".png")).string(), bright);
    }
    manifest = ingest(root.string()).manifest;
    SplitSpec spec;
    spec.test_count = 2;
    spec.val_count = 4;
    spec.seed = 5;
    assign_splits(manifest, spec);
  }
  ~TinyCorpus() { fs::remove_all(root); }
};

TrainConfig tiny_config(std::uint64_t seed, std::size_t max_epochs) {
  TrainConfig cfg;
  cfg.max_epochs = max_epochs;
  cfg.patience = 5;
  cfg.batch_size = 4;
  cfg.seed = seed;
  cfg.preprocess.resize = 14;
  cfg.preprocess.crop = 12;
  return cfg;
}

}  // namespace

TEST_CASE("sgd momentum recurrence on a scalar") {
  Tensor w = scalar_param(1.0);
  OptimizerState opt;
  opt.learning_rate = 0.1;
  opt.momentum = 0.9;
  std::vector<Tensor> params = {w};

  set_grad(w, 1.0);
  sgd_step(params, opt);
  CHECK(w.item() == doctest::Approx(0.9));

  set_grad(w, 1.0);
  sgd_step(params, opt);
  CHECK(w.item() == doctest::Approx(0.71));  // v = 1.9, step 0.19
}

TEST_CASE("sgd with zero gradient still decays along the velocity") {
  Tensor w = scalar_param(1.0);
  OptimizerState opt;
  opt.learning_rate = 0.1;
  opt.momentum = 0.9;
  std::vector<Tensor> params = {w};
  set_grad(w, 1.0);
  sgd_step(params, opt);  // w = 0.9, v = 1
  set_grad(w, 0.0);
  sgd_step(params, opt);  // v decays to 0.9, w -= 0.09
  CHECK(w.item() == doctest::Approx(0.81));
}

TEST_CASE("zero momentum reduces to plain gradient descent") {
  Tensor w = scalar_param(2.0);
  OptimizerState opt;
  opt.learning_rate = 0.5;
  opt.momentum = 0.0;
  std::vector<Tensor> params = {w};
  set_grad(w, 3.0);
  sgd_step(params, opt);
  CHECK(w.item() == doctest::Approx(2.0 - 0.5 * 3.0));
}

TEST_CASE("sgd zeroes gradients after stepping") {
  Tensor w = scalar_param(1.0);
  OptimizerState opt;
  std::vector<Tensor> params = {w};
  set_grad(w, 1.0);
  sgd_step(params, opt);
  CHECK(w.grad_at(0) == 0.0);
}

TEST_CASE("sgd on the quadratic half w^2 converges under momentum") {
  Tensor w = scalar_param(1.0);
  OptimizerState opt;
  opt.learning_rate = 0.01;
  opt.momentum = 0.9;
  std::vector<Tensor> params = {w};
  for (int step = 0; step < 2000; ++step) {
    set_grad(w, w.item());  // d(w^2/2)/dw = w
    sgd_step(params, opt);
  }
  CHECK(std::fabs(w.item()) < 1e-3);
}

TEST_CASE("strict sgd names parameters missing gradients") {
  Tensor w = scalar_param(1.0);
  OptimizerState opt;
  std::vector<Tensor> params = {w};
  std::vector<std::string> names = {"fc.weight"};
  CHECK_THROWS_WITH_AS(sgd_step(params, opt, true, &names), doctest::Contains("fc.weight"),
                       std::runtime_error);
  sgd_step(params, opt, false, &names);  // relaxed mode skips
  CHECK(w.item() == 1.0);
}

TEST_CASE("early stopping follows the traced example") {
  // Losses [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99]: epochs 3..7 are five
  // consecutive non-improvements, so training stops after epoch 7 with
  // best epoch 2.
  EarlyStopping es(5);
  const double losses[] = {1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99};
  std::size_t stop_at = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    auto d = es.observe(losses[i]);
    if (d.stop) {
      stop_at = i + 1;
      break;
    }
  }
  CHECK(stop_at == 7);
  CHECK(es.best_epoch() == 2);
}

TEST_CASE("strictly improving sequences never stop") {
  EarlyStopping es(5);
  double loss = 10.0;
  for (int epoch = 1; epoch <= 500; ++epoch) {
    loss *= 0.999;
    auto d = es.observe(loss);
    CHECK(d.improved);
    CHECK_FALSE(d.stop);
  }
  CHECK(es.epochs_seen() == 500);
}

TEST_CASE("stopping never tolerates more than patience consecutive non-improvements") {
  Rng rng(5150);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t patience = 1 + rng.below(6);
    EarlyStopping es(patience);
    double best = 1e18;
    std::size_t streak = 0;
    for (int step = 0; step < 200; ++step) {
      double loss = rng.uniform(0.0, 1.0);
      auto d = es.observe(loss);
      if (loss < best) {
        best = loss;
        streak = 0;
      } else {
        ++streak;
      }
      CHECK(streak <= patience);
      if (d.stop) break;
    }
  }
}

TEST_CASE("train_model restores the best-epoch weights") {
  TinyCorpus corpus("funginet_train_restore");
  ModelGraph model = tiny_model(42);
  TrainConfig cfg = tiny_config(42, 12);
  ImageCache cache(cfg.preprocess.resize);
  TrainRecord record = train_model(model, corpus.manifest, cfg, nullptr, "", &cache);

  REQUIRE(record.best_epoch >= 1);
  REQUIRE(record.best_epoch <= record.stop_epoch);
  REQUIRE(record.stop_epoch <= cfg.max_epochs);
  double recorded_min = 1e300;
  for (const EpochStats& e : record.epochs) recorded_min = std::min(recorded_min, e.val_loss);
  CHECK(record.epochs[record.best_epoch - 1].val_loss == doctest::Approx(recorded_min));

  // Recompute validation loss of the restored model.
  double loss_sum = 0;
  std::size_t seen = 0;
  for (const Batch& b :
       epoch_batches(corpus.manifest, Split::val, cfg.batch_size, 0, 0, cfg.preprocess, &cache)) {
    Tensor logits = model.forward(b.images, Mode::eval, nullptr);
    loss_sum += softmax_cross_entropy(logits, b.labels).item() * b.labels.size();
    seen += b.labels.size();
  }
  CHECK(loss_sum / seen == doctest::Approx(recorded_min).epsilon(1e-6));
}

TEST_CASE("training is deterministic: identical records across runs") {
  TinyCorpus corpus("funginet_train_determinism");
  auto run = [&]() {
    ModelGraph model = tiny_model(7);
    TrainConfig cfg = tiny_config(7, 6);
    ImageCache cache(cfg.preprocess.resize);
    return train_model(model, corpus.manifest, cfg, nullptr, "", &cache);
  };
  TrainRecord a = run();
  TrainRecord b = run();
  REQUIRE(a.epochs.size() == b.epochs.size());
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.stop_epoch == b.stop_epoch);
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].train_loss == b.epochs[i].train_loss);
    CHECK(a.epochs[i].val_loss == b.epochs[i].val_loss);
    CHECK(a.epochs[i].val_accuracy == b.epochs[i].val_accuracy);
  }
}

TEST_CASE("an optimizer step moves trainable parameters and spares frozen ones") {
  TinyCorpus corpus("funginet_train_freeze");
  ModelGraph model = tiny_model(9);
  model.freeze_backbone();  // only fc.* stays trainable
  Tensor conv_before = model.find_param("conv1.weight")->clone();
  Tensor fc_before = model.find_param("fc.weight")->clone();

  TrainConfig cfg = tiny_config(9, 1);
  ImageCache cache(cfg.preprocess.resize);
  train_model(model, corpus.manifest, cfg, nullptr, "", &cache);

  const Tensor* conv_after = model.find_param("conv1.weight");
  const Tensor* fc_after = model.find_param("fc.weight");
  bool conv_moved = false, fc_moved = false;
  for (std::size_t i = 0; i < conv_after->size(); ++i)
    conv_moved |= conv_after->value_at(i) != conv_before.value_at(i);
  for (std::size_t i = 0; i < fc_after->size(); ++i)
    fc_moved |= fc_after->value_at(i) != fc_before.value_at(i);
  CHECK_FALSE(conv_moved);
  CHECK(fc_moved);
}

TEST_CASE("non-finite losses abort with epoch and batch in the message") {
  TinyCorpus corpus("funginet_train_diverge");
  ModelGraph model = tiny_model(3);
  TrainConfig cfg = tiny_config(3, 5);
  cfg.learning_rate = 1e30;  // guaranteed overflow
  ImageCache cache(cfg.preprocess.resize);
  CHECK_THROWS_WITH_AS(train_model(model, corpus.manifest, cfg, nullptr, "", &cache),
                       doctest::Contains("non-finite loss at epoch"), std::runtime_error);
}

TEST_CASE("run_experiment with repeats=1 returns that single report as the mean") {
  TinyCorpus corpus("funginet_experiment_single");
  TrainConfig cfg = tiny_config(11, 3);
  cfg.repeats = 1;
  cfg.arch = ArchitectureId::alexnet;  // unused below; replaced by tiny model path
  // run_experiment builds zoo models; for unit scale use the API directly on
  // a tiny custom model instead, mirroring its logic for one repeat.
  ModelGraph model = tiny_model(derive_seed(cfg.seed, stream::repeat, 1));
  ImageCache cache(cfg.preprocess.resize);
  TrainConfig run_cfg = cfg;
  run_cfg.seed = derive_seed(cfg.seed, stream::repeat, 1);
  train_model(model, corpus.manifest, run_cfg, nullptr, "", &cache);
  MetricsReport single = evaluate_model(model, corpus.manifest, Split::test, cfg.batch_size,
                                        cfg.preprocess, &cache);
  MetricsReport mean = mean_report(std::vector<MetricsReport>{single});
  CHECK(mean.accuracy == single.accuracy);
  CHECK(mean.auc == single.auc);
  CHECK(mean.f1 == single.f1);
}
