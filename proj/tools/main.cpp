#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "funginet/checkpoint.hpp"
#include "funginet/config.hpp"
#include "funginet/dataset.hpp"
#include "funginet/fsutil.hpp"
#include "funginet/imageio.hpp"
#include "funginet/metrics.hpp"
#include "funginet/train.hpp"

namespace {

using namespace funginet;

void cmd_ingest(const std::string& data_root, const std::string& manifest_out) {
  IngestSummary summary = ingest(data_root);
  save_manifest_csv(summary.manifest, manifest_out);
  std::cout << "ingested " << summary.manifest.records.size() << " images ("
            << summary.manifest.count_label(Label::poisonous) << " poisonous, "
            << summary.manifest.count_label(Label::edible) << " edible)";
  if (summary.skipped > 0) std::cout << "; skipped " << summary.skipped << " unreadable files";
  std::cout << "\nwrote " << manifest_out << "\n";
}

void cmd_split(const std::string& manifest_path, std::uint64_t seed, std::size_t test_count,
               std::size_t val_count, bool no_stratify) {
  DatasetManifest manifest = load_manifest_csv(manifest_path);
  SplitSpec spec;
  spec.test_count = test_count;
  spec.val_count = val_count;
  spec.stratified = !no_stratify;
  spec.seed = seed;
  assign_splits(manifest, spec);
  save_manifest_csv(manifest, manifest_path);
  std::cout << "split " << manifest.records.size() << " records into train "
            << manifest.count_split(Split::train) << ", val " << manifest.count_split(Split::val)
            << ", test " << manifest.count_split(Split::test) << "\n";
}

// Pretrained checkpoints may carry a classifier head of a different width
// (e.g. 1000 classes); those head entries are dropped and the fresh head is
// kept, matching the replace-the-head fine-tuning flow.
void apply_init_weights(ModelGraph& model, const std::string& ckpt_path) {
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  std::vector<std::pair<std::string, Tensor>> usable;
  std::size_t dropped = 0;
  for (auto& [name, tensor] : ckpt.tensors) {
    const Tensor* target = model.find_param(name);
    if (target && target->shape() != tensor.shape()) {
      ++dropped;
      continue;
    }
    usable.emplace_back(name, tensor);
  }
  model.apply_weights(usable, /*strict=*/false);
  std::cout << "initialized " << usable.size() << " tensors from " << ckpt_path;
  if (dropped > 0) std::cout << " (" << dropped << " head tensors replaced by the fresh head)";
  std::cout << "\n";
}

void cmd_train(const std::string& config_path, const std::string& manifest_path,
               const std::string& model_out, const std::string& init_weights,
               const std::string& log_csv_flag) {
  ExperimentConfig cfg = load_config(config_path);
  std::cout << "resolved config:\n" << config_to_json(cfg) << "\n";
  DatasetManifest manifest = load_manifest_csv(manifest_path);

  TrainConfig tc = to_train_config(cfg);
  ModelGraph model = build_model(tc.arch, tc.num_classes, tc.seed);
  if (!init_weights.empty()) apply_init_weights(model, init_weights);
  if (tc.freeze_backbone) model.freeze_backbone();

  std::string log_csv = !log_csv_flag.empty() ? log_csv_flag : cfg.log_csv;
  ImageCache cache(cfg.image_resize);
  TrainRecord record = train_model(model, manifest, tc, &std::cout, log_csv, &cache);
  std::cout << "stopped after epoch " << record.stop_epoch << " (best epoch "
            << record.best_epoch << ")\n";
  save_checkpoint(model, model_out);
  std::cout << "wrote " << model_out << "\n";
}

ModelGraph model_from_checkpoint(const std::string& path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  ArchitectureId arch = parse_architecture(ckpt.provenance.architecture);
  ModelGraph model = build_model(arch, ckpt.provenance.num_classes, ckpt.provenance.seed);
  model.apply_weights(ckpt.tensors, /*strict=*/true);
  return model;
}

void cmd_evaluate(const std::string& model_path, const std::string& manifest_path,
                  const std::string& split_str, const std::string& metrics_out,
                  std::size_t batch_size) {
  ModelGraph model = model_from_checkpoint(model_path);
  DatasetManifest manifest = load_manifest_csv(manifest_path);
  Split split = parse_split(split_str);
  MetricsReport report = evaluate_model(model, manifest, split, batch_size);
  std::string name = architecture_display_name(parse_architecture(model.architecture));
  std::string csv = emit_report({{name, report}});
  write_file_atomic(metrics_out, csv);
  std::cout << csv << "wrote " << metrics_out << "\n";
}

void cmd_predict(const std::string& model_path, const std::string& image_path) {
  ModelGraph model = model_from_checkpoint(model_path);
  ImageBuffer img = decode_image_file(image_path);
  Tensor sample = preprocess_eval(img);
  Tensor batch = Tensor::zeros({1, 3, sample.extent(1), sample.extent(2)});
  batch.copy_data_from(reshape(sample, batch.shape()));
  Tensor logits = model.forward(batch, Mode::eval, nullptr);
  std::vector<double> probs = softmax_row(logits, 0);
  const char* label = probs[1] >= 0.5 ? "poisonous" : "edible";
  char line[64];
  std::snprintf(line, sizeof(line), "%s %.6f\n", label, probs[1]);
  std::cout << line;
}

void cmd_report(const std::string& inputs_csv, const std::string& table_out) {
  std::vector<std::string> inputs;
  std::string cur;
  for (char c : inputs_csv) {
    if (c == ',') {
      if (!cur.empty()) inputs.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) inputs.push_back(cur);
  if (inputs.empty()) throw std::runtime_error("report: no input files given");

  const std::string header = "Model,Accuracy,AUC,Precision,Recall,F1";
  std::string table = header + "\n";
  for (const std::string& path : inputs) {
    std::string text = read_file(path);
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      std::string line = text.substr(pos, end - pos);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      pos = end + 1;
      if (first) {
        if (line != header) {
          throw std::runtime_error("report: " + path + " is not a metrics CSV (bad header)");
        }
        first = false;
        continue;
      }
      if (!line.empty()) table += line + "\n";
    }
  }
  write_file_atomic(table_out, table);
  std::cout << table << "wrote " << table_out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fungi image classification pipeline"};
  app.require_subcommand(1);

  std::string data_root, manifest_path, config_path, model_path, image_path;
  std::string out_path, init_weights, log_csv, split_str = "test", inputs_csv;
  std::uint64_t seed = 1;
  std::size_t test_count = 90, val_count = 40, batch_size = 4;
  bool no_stratify = false;

  CLI::App* c_ingest = app.add_subcommand("ingest", "scan a corpus directory into a manifest");
  c_ingest->add_option("--data-root", data_root, "directory with edible/ and poisonous/")
      ->required();
  c_ingest->add_option("--manifest", out_path, "output manifest CSV")->required();

  CLI::App* c_split = app.add_subcommand("split", "assign train/val/test splits in a manifest");
  c_split->add_option("--manifest", manifest_path, "manifest CSV to update")->required();
  c_split->add_option("--seed", seed, "split seed")->required();
  c_split->add_option("--test-count", test_count, "test set size (default 90)");
  c_split->add_option("--val-count", val_count, "validation set size (default 40)");
  c_split->add_flag("--no-stratify", no_stratify, "draw splits without class stratification");

  CLI::App* c_train = app.add_subcommand("train", "train one model from a config");
  c_train->add_option("--config", config_path, "experiment config JSON")->required();
  c_train->add_option("--manifest", manifest_path, "manifest CSV with splits")->required();
  c_train->add_option("--out", out_path, "output checkpoint path")->required();
  c_train->add_option("--init-weights", init_weights, "checkpoint with initial weights");
  c_train->add_option("--log", log_csv, "per-epoch CSV log path");

  CLI::App* c_eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
  c_eval->add_option("--model", model_path, "checkpoint to evaluate")->required();
  c_eval->add_option("--manifest", manifest_path, "manifest CSV with splits")->required();
  c_eval->add_option("--split", split_str, "split to evaluate (default test)");
  c_eval->add_option("--out", out_path, "output metrics CSV")->required();
  c_eval->add_option("--batch-size", batch_size, "evaluation batch size (default 4)");

  CLI::App* c_predict = app.add_subcommand("predict", "classify one image");
  c_predict->add_option("--model", model_path, "checkpoint to use")->required();
  c_predict->add_option("--image", image_path, "image file")->required();

  CLI::App* c_report = app.add_subcommand("report", "merge metrics CSVs into one table");
  c_report->add_option("--inputs", inputs_csv, "comma-separated metrics CSV paths")->required();
  c_report->add_option("--out", out_path, "output table CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_ingest->parsed()) {
      cmd_ingest(data_root, out_path);
    } else if (c_split->parsed()) {
      cmd_split(manifest_path, seed, test_count, val_count, no_stratify);
    } else if (c_train->parsed()) {
      cmd_train(config_path, manifest_path, out_path, init_weights, log_csv);
    } else if (c_eval->parsed()) {
      cmd_evaluate(model_path, manifest_path, split_str, out_path, batch_size);
    } else if (c_predict->parsed()) {
      cmd_predict(model_path, image_path);
    } else if (c_report->parsed()) {
      cmd_report(inputs_csv, out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
