#include "funginet/config.hpp"

#include <set>
#include <stdexcept>

#include <json.hpp>

#include "funginet/fsutil.hpp"

namespace funginet {

namespace {

using nlohmann::json;

[[noreturn]] void bad_value(const std::string& key, const std::string& constraint) {
  throw std::invalid_argument("config: key '" + key + "' " + constraint);
}

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) bad_value(key, "must be a number");
  return j.get<double>();
}

std::size_t get_count(const json& j, const std::string& key, std::size_t min_value) {
  if (!j.is_number_integer() || j.get<double>() < 0) bad_value(key, "must be a non-negative integer");
  auto v = j.get<std::size_t>();
  if (v < min_value) bad_value(key, "must be >= " + std::to_string(min_value));
  return v;
}

std::array<double, 3> get_triplet(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) bad_value(key, "must be an array of 3 numbers");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = get_number(j[i], key);
  return out;
}

std::string get_string(const json& j, const std::string& key) {
  if (!j.is_string()) bad_value(key, "must be a string");
  return j.get<std::string>();
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("config: invalid JSON");
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");

  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "image_resize") {
      cfg.image_resize = static_cast<int>(get_count(value, key, 1));
    } else if (key == "crop_size") {
      cfg.crop_size = static_cast<int>(get_count(value, key, 1));
    } else if (key == "norm_mean") {
      cfg.norm_mean = get_triplet(value, key);
    } else if (key == "norm_std") {
      cfg.norm_std = get_triplet(value, key);
      for (double s : cfg.norm_std)
        if (!(s > 0.0)) bad_value(key, "entries must be positive");
    } else if (key == "architecture") {
      cfg.architecture = get_string(value, key);
      parse_architecture(cfg.architecture);  // validates
    } else if (key == "num_classes") {
      cfg.num_classes = static_cast<int>(get_count(value, key, 2));
    } else if (key == "learning_rate") {
      cfg.learning_rate = get_number(value, key);
      if (!(cfg.learning_rate > 0.0)) bad_value(key, "must be positive");
    } else if (key == "momentum") {
      cfg.momentum = get_number(value, key);
      if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) bad_value(key, "must lie in [0,1)");
    } else if (key == "batch_size") {
      cfg.batch_size = get_count(value, key, 1);
    } else if (key == "max_epochs") {
      cfg.max_epochs = get_count(value, key, 1);
    } else if (key == "patience") {
      cfg.patience = get_count(value, key, 1);
    } else if (key == "repeats") {
      cfg.repeats = get_count(value, key, 1);
    } else if (key == "test_count") {
      cfg.test_count = get_count(value, key, 0);
    } else if (key == "val_count") {
      cfg.val_count = get_count(value, key, 0);
    } else if (key == "seed") {
      if (!value.is_number_integer() || value.get<double>() < 0)
        bad_value(key, "must be a non-negative integer");
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "freeze_backbone") {
      if (!value.is_boolean()) bad_value(key, "must be a boolean");
      cfg.freeze_backbone = value.get<bool>();
    } else if (key == "data_root") {
      cfg.data_root = get_string(value, key);
    } else if (key == "checkpoint_out") {
      cfg.checkpoint_out = get_string(value, key);
    } else if (key == "log_csv") {
      cfg.log_csv = get_string(value, key);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  if (cfg.crop_size > cfg.image_resize) {
    throw std::invalid_argument("config: crop_size (" + std::to_string(cfg.crop_size) +
                                ") must not exceed image_resize (" +
                                std::to_string(cfg.image_resize) + ")");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config_json(read_file(path));
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["image_resize"] = cfg.image_resize;
  j["crop_size"] = cfg.crop_size;
  j["norm_mean"] = cfg.norm_mean;
  j["norm_std"] = cfg.norm_std;
  j["architecture"] = cfg.architecture;
  j["num_classes"] = cfg.num_classes;
  j["learning_rate"] = cfg.learning_rate;
  j["momentum"] = cfg.momentum;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["repeats"] = cfg.repeats;
  j["test_count"] = cfg.test_count;
  j["val_count"] = cfg.val_count;
  j["seed"] = cfg.seed;
  j["freeze_backbone"] = cfg.freeze_backbone;
  j["data_root"] = cfg.data_root;
  j["checkpoint_out"] = cfg.checkpoint_out;
  j["log_csv"] = cfg.log_csv;
  return j.dump(2);
}

TrainConfig to_train_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.max_epochs = cfg.max_epochs;
  t.patience = cfg.patience;
  t.batch_size = cfg.batch_size;
  t.repeats = cfg.repeats;
  t.seed = cfg.seed;
  t.arch = parse_architecture(cfg.architecture);
  t.num_classes = cfg.num_classes;
  t.learning_rate = cfg.learning_rate;
  t.momentum = cfg.momentum;
  t.freeze_backbone = cfg.freeze_backbone;
  t.preprocess = to_preprocess_options(cfg);
  return t;
}

PreprocessOptions to_preprocess_options(const ExperimentConfig& cfg) {
  PreprocessOptions opts;
  opts.resize = cfg.image_resize;
  opts.crop = cfg.crop_size;
  opts.norm.mean = cfg.norm_mean;
  opts.norm.stddev = cfg.norm_std;
  return opts;
}

}  // namespace funginet
