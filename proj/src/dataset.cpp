#include "funginet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "funginet/fsutil.hpp"
#include "funginet/imageio.hpp"
#include "funginet/rng.hpp"

namespace fs = std::filesystem;

namespace funginet {

std::string split_name(Split s) {
  switch (s) {
    case Split::unassigned: return "unassigned";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw std::logic_error("unreachable split");
}

Split parse_split(const std::string& name) {
  if (name == "unassigned") return Split::unassigned;
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::string label_name(Label l) { return l == Label::edible ? "edible" : "poisonous"; }

Label parse_label(const std::string& name) {
  if (name == "edible") return Label::edible;
  if (name == "poisonous") return Label::poisonous;
  throw std::invalid_argument("unknown label '" + name + "' (expected edible or poisonous)");
}

std::size_t DatasetManifest::count_label(Label l) const {
  std::size_t n = 0;
  for (const auto& r : records) n += (r.label == l);
  return n;
}

std::size_t DatasetManifest::count_split(Split s) const {
  std::size_t n = 0;
  for (const auto& r : records) n += (r.split == s);
  return n;
}

std::vector<std::size_t> DatasetManifest::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == s) out.push_back(i);
  return out;
}

namespace {

bool has_supported_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

}  // namespace

IngestSummary ingest(const std::string& root) {
  const std::pair<const char*, Label> classes[] = {{"edible", Label::edible},
                                                   {"poisonous", Label::poisonous}};
  for (const auto& [sub, label] : classes) {
    if (!fs::is_directory(fs::path(root) / sub)) {
      throw std::runtime_error("ingest: missing subdirectory '" + std::string(sub) + "' under " +
                               root);
    }
  }
  IngestSummary summary;
  for (const auto& [sub, label] : classes) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / sub)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& file : files) {
      if (!has_supported_extension(file)) {
        ++summary.skipped;
        continue;
      }
      ImageBuffer probe;
      if (!try_decode_image_file(file.string(), probe)) {
        ++summary.skipped;
        continue;
      }
      summary.manifest.records.push_back({file.string(), label, Split::unassigned});
    }
  }
  if (summary.manifest.records.empty()) {
    throw std::runtime_error("ingest: no decodable images under " + root);
  }
  return summary;
}

namespace {

// Largest-remainder apportionment of `want` draws across class pools; each
// quota lands within one record of exact proportionality.
std::vector<std::size_t> stratified_quotas(const std::vector<std::size_t>& pool_sizes,
                                           std::size_t want) {
  std::size_t total = 0;
  for (std::size_t n : pool_sizes) total += n;
  std::vector<std::size_t> quota(pool_sizes.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < pool_sizes.size(); ++c) {
    double exact = static_cast<double>(want) * static_cast<double>(pool_sizes[c]) /
                   static_cast<double>(total);
    quota[c] = static_cast<std::size_t>(exact);
    assigned += quota[c];
    remainders.push_back({exact - static_cast<double>(quota[c]), c});
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < want; ++i) {
    quota[remainders[i % remainders.size()].second] += 1;
    ++assigned;
  }
  return quota;
}

void draw_split(std::vector<std::vector<std::size_t>>& pools, std::size_t want, bool stratified,
                Split split, DatasetManifest& manifest, Rng& rng) {
  std::size_t total = 0;
  for (const auto& p : pools) total += p.size();
  if (want > total) {
    throw std::invalid_argument("split: cannot draw " + std::to_string(want) + " records from " +
                                std::to_string(total) + " remaining");
  }
  if (stratified) {
    std::vector<std::size_t> sizes;
    for (const auto& p : pools) sizes.push_back(p.size());
    std::vector<std::size_t> quota = stratified_quotas(sizes, want);
    for (std::size_t c = 0; c < pools.size(); ++c) {
      if (quota[c] > pools[c].size()) {
        throw std::invalid_argument("split: class '" +
                                    label_name(static_cast<Label>(c)) + "' has only " +
                                    std::to_string(pools[c].size()) + " records left, need " +
                                    std::to_string(quota[c]));
      }
      rng.shuffle(pools[c]);
      for (std::size_t k = 0; k < quota[c]; ++k) {
        manifest.records[pools[c].back()].split = split;
        pools[c].pop_back();
      }
    }
  } else {
    std::vector<std::size_t> all;
    for (auto& p : pools) all.insert(all.end(), p.begin(), p.end());
    rng.shuffle(all);
    for (std::size_t k = 0; k < want; ++k) {
      manifest.records[all.back()].split = split;
      all.pop_back();
    }
    for (auto& p : pools) p.clear();
    for (std::size_t idx : all) {
      pools[static_cast<std::size_t>(manifest.records[idx].label)].push_back(idx);
    }
  }
}

}  // namespace

void assign_splits(DatasetManifest& manifest, const SplitSpec& spec) {
  std::size_t total = manifest.records.size();
  if (spec.test_count + spec.val_count >= total) {
    throw std::invalid_argument("split: test_count + val_count (" +
                                std::to_string(spec.test_count + spec.val_count) +
                                ") must be smaller than the corpus (" + std::to_string(total) +
                                ")");
  }
  for (auto& r : manifest.records) r.split = Split::unassigned;

  std::vector<std::vector<std::size_t>> pools(2);
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    pools[static_cast<std::size_t>(manifest.records[i].label)].push_back(i);
  }

  Rng rng(derive_seed(spec.seed, stream::split));
  draw_split(pools, spec.test_count, spec.stratified, Split::test, manifest, rng);
  draw_split(pools, spec.val_count, spec.stratified, Split::val, manifest, rng);
  for (const auto& pool : pools) {
    for (std::size_t idx : pool) manifest.records[idx].split = Split::train;
  }
}

namespace {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_parse_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw std::runtime_error("manifest: unterminated quote on line " + std::to_string(line_no));
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void save_manifest_csv(const DatasetManifest& manifest, const std::string& path) {
  std::ostringstream os;
  os << "path,label,split\n";
  for (const auto& r : manifest.records) {
    os << csv_escape(r.path) << ',' << label_name(r.label) << ',' << split_name(r.split) << '\n';
  }
  write_file_atomic(path, os.str());
}

DatasetManifest load_manifest_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("manifest is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label,split") {
    throw std::runtime_error("manifest header must be 'path,label,split', got '" + line + "'");
  }
  DatasetManifest manifest;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = csv_parse_line(line, line_no);
    if (fields.size() != 3) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": expected 3 fields, got " +
                               std::to_string(fields.size()));
    }
    try {
      manifest.records.push_back({fields[0], parse_label(fields[1]), parse_split(fields[2])});
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return manifest;
}

const ImageBuffer& ImageCache::get(const std::string& path) {
  auto it = cache_.find(path);
  if (it != cache_.end()) return it->second;
  ImageBuffer img = decode_image_file(path);
  ImageBuffer resized = resize_bilinear(img, resize_, resize_);
  return cache_.emplace(path, std::move(resized)).first->second;
}

std::vector<BatchPlan> epoch_batch_plan(const DatasetManifest& manifest, Split split,
                                        std::size_t batch_size, std::uint64_t seed,
                                        std::size_t epoch_index) {
  if (batch_size == 0) throw std::invalid_argument("epoch_batches: batch_size must be positive");
  std::vector<std::size_t> indices = manifest.indices_of(split);
  if (indices.empty()) {
    throw std::invalid_argument("epoch_batches: split '" + split_name(split) + "' is empty");
  }
  if (split == Split::train) {
    Rng rng(derive_seed(seed, stream::shuffle, epoch_index));
    rng.shuffle(indices);
  }
  std::vector<BatchPlan> plans;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    BatchPlan plan;
    std::size_t end = std::min(start + batch_size, indices.size());
    for (std::size_t i = start; i < end; ++i) {
      plan.indices.push_back(indices[i]);
      plan.image_seeds.push_back(derive_seed(seed, stream::augment, epoch_index, indices[i]));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

Batch load_batch(const DatasetManifest& manifest, const BatchPlan& plan, Split split,
                 const PreprocessOptions& opts, ImageCache* cache) {
  if (plan.indices.empty()) throw std::invalid_argument("load_batch: empty batch plan");
  std::size_t crop_sz = static_cast<std::size_t>(opts.crop);
  Batch batch;
  batch.indices = plan.indices;
  batch.images = Tensor::zeros({plan.indices.size(), 3, crop_sz, crop_sz}, DType::f32);
  const std::size_t sample_elems = 3 * crop_sz * crop_sz;
  for (std::size_t i = 0; i < plan.indices.size(); ++i) {
    const ManifestRecord& rec = manifest.records[plan.indices[i]];
    Tensor sample;
    if (cache) {
      // The cache holds post-resize buffers; re-resizing to the same extent
      // is an exact identity under half-pixel mapping.
      const ImageBuffer& img = cache->get(rec.path);
      if (split == Split::train) {
        Rng rng(plan.image_seeds[i]);
        sample = preprocess_train(img, rng, opts);
      } else {
        sample = preprocess_eval(img, opts);
      }
    } else {
      ImageBuffer img = decode_image_file(rec.path);
      if (split == Split::train) {
        Rng rng(plan.image_seeds[i]);
        sample = preprocess_train(img, rng, opts);
      } else {
        sample = preprocess_eval(img, opts);
      }
    }
    std::memcpy(batch.images.f32() + i * sample_elems, sample.f32(), sample_elems * sizeof(float));
    batch.labels.push_back(static_cast<int>(rec.label));
  }
  return batch;
}

std::vector<Batch> epoch_batches(const DatasetManifest& manifest, Split split,
                                 std::size_t batch_size, std::uint64_t seed,
                                 std::size_t epoch_index, const PreprocessOptions& opts,
                                 ImageCache* cache) {
  std::vector<Batch> out;
  for (const BatchPlan& plan : epoch_batch_plan(manifest, split, batch_size, seed, epoch_index)) {
    out.push_back(load_batch(manifest, plan, split, opts, cache));
  }
  return out;
}

}  // namespace funginet
