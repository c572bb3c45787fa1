#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "funginet/image.hpp"
#include "funginet/tensor.hpp"

namespace funginet {

enum class Split { unassigned, train, val, test };
enum class Label { edible = 0, poisonous = 1 };

std::string split_name(Split s);
Split parse_split(const std::string& name);
std::string label_name(Label l);
Label parse_label(const std::string& name);

struct ManifestRecord {
  std::string path;
  Label label = Label::edible;
  Split split = Split::unassigned;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::size_t count_label(Label l) const;
  std::size_t count_split(Split s) const;
  std::vector<std::size_t> indices_of(Split s) const;
};

struct IngestSummary {
  DatasetManifest manifest;
  std::size_t skipped = 0;  // unsupported extensions + undecodable files
};

// Expects root/edible/ and root/poisonous/; one record per decodable image,
// labeled by subdirectory, ordered by path.
IngestSummary ingest(const std::string& root);

struct SplitSpec {
  std::size_t test_count = 90;
  std::size_t val_count = 40;
  bool stratified = true;
  std::uint64_t seed = 0;
};

// Draws the test set first, then the validation set from the remainder; the
// rest is train. Stratified draws keep per-class proportions within one
// record of exact. Deterministic in the seed.
void assign_splits(DatasetManifest& manifest, const SplitSpec& spec);

void save_manifest_csv(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest_csv(const std::string& path);

// Keeps decoded images after the deterministic resize stage, keyed by path.
class ImageCache {
 public:
  explicit ImageCache(int resize) : resize_(resize) {}
  const ImageBuffer& get(const std::string& path);

 private:
  int resize_;
  std::unordered_map<std::string, ImageBuffer> cache_;
};

struct BatchPlan {
  std::vector<std::size_t> indices;        // manifest record indices
  std::vector<std::uint64_t> image_seeds;  // augmentation stream per image
};

// Train split is reshuffled per epoch from (seed, epoch_index); val/test keep
// manifest order. The final partial batch is kept.
std::vector<BatchPlan> epoch_batch_plan(const DatasetManifest& manifest, Split split,
                                        std::size_t batch_size, std::uint64_t seed,
                                        std::size_t epoch_index);

struct Batch {
  Tensor images;  // (B,3,crop,crop) float32
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

// Applies preprocess_train for the train split and preprocess_eval otherwise.
Batch load_batch(const DatasetManifest& manifest, const BatchPlan& plan, Split split,
                 const PreprocessOptions& opts = {}, ImageCache* cache = nullptr);

std::vector<Batch> epoch_batches(const DatasetManifest& manifest, Split split,
                                 std::size_t batch_size, std::uint64_t seed,
                                 std::size_t epoch_index, const PreprocessOptions& opts = {},
                                 ImageCache* cache = nullptr);

}  // namespace funginet
