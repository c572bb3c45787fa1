#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "funginet/dataset.hpp"
#include "funginet/imageio.hpp"
#include "funginet/rng.hpp"

using namespace funginet;
namespace fs = std::filesystem;

namespace {

// In-memory manifest with the published corpus proportions.
DatasetManifest synthetic_manifest(std::size_t poisonous, std::size_t edible) {
  DatasetManifest m;
  for (std::size_t i = 0; i < poisonous; ++i)
    m.records.push_back({"p/" + std::to_string(i) + ".jpg", Label::poisonous});
  for (std::size_t i = 0; i < edible; ++i)
    m.records.push_back({"e/" + std::to_string(i) + ".jpg", Label::edible});
  return m;
}

struct TempCorpus {
  fs::path root;
  explicit TempCorpus(const std::string& name) {
    root = fs::temp_directory_path() / name;
    fs::remove_all(root);
    fs::create_directories(root / "edible");
    fs::create_directories(root / "poisonous");
  }
  ~TempCorpus() { fs::remove_all(root); }

  void add_image(Label label, const std::string& name, std::uint8_t shade) {
    ImageBuffer img = make_image(16, 16, shade);
    encode_png((root / (label == Label::edible ? "edible" : "poisonous") / name).string(), img);
  }
};

}  // namespace

TEST_CASE("the published corpus proportions split to 320/40/90") {
  DatasetManifest m = synthetic_manifest(250, 200);
  SplitSpec spec;
  spec.seed = 7;
  assign_splits(m, spec);
  CHECK(m.count_split(Split::train) == 320);
  CHECK(m.count_split(Split::val) == 40);
  CHECK(m.count_split(Split::test) == 90);
  CHECK(m.count_split(Split::unassigned) == 0);
}

TEST_CASE("stratified splits stay within one record of exact proportions") {
  DatasetManifest m = synthetic_manifest(250, 200);
  SplitSpec spec;
  spec.seed = 21;
  assign_splits(m, spec);
  auto class_count = [&](Split s, Label l) {
    std::size_t n = 0;
    for (const auto& r : m.records) n += (r.split == s && r.label == l);
    return n;
  };
  struct Want {
    Split split;
    double poisonous_exact;
  };
  for (auto [split, total] : {std::pair{Split::test, 90.0}, {Split::val, 40.0},
                              {Split::train, 320.0}}) {
    double exact = total * 250.0 / 450.0;
    double got = static_cast<double>(class_count(split, Label::poisonous));
    CHECK(std::fabs(got - exact) <= 1.0);
  }
}

TEST_CASE("splits are deterministic in the seed and partition the corpus") {
  for (std::uint64_t seed : {1ull, 99ull, 31337ull}) {
    DatasetManifest a = synthetic_manifest(61, 48);
    DatasetManifest b = synthetic_manifest(61, 48);
    SplitSpec spec;
    spec.test_count = 20;
    spec.val_count = 10;
    spec.seed = seed;
    assign_splits(a, spec);
    assign_splits(b, spec);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].split == b.records[i].split);
      CHECK(a.records[i].split != Split::unassigned);
    }
  }
}

TEST_CASE("infeasible split counts error") {
  DatasetManifest m = synthetic_manifest(5, 5);
  SplitSpec spec;
  spec.test_count = 8;
  spec.val_count = 2;
  CHECK_THROWS_AS(assign_splits(m, spec), std::invalid_argument);
}

TEST_CASE("epoch batch plans: counts, partial tail, determinism, permutation") {
  DatasetManifest m = synthetic_manifest(250, 200);
  SplitSpec spec;
  spec.seed = 3;
  assign_splits(m, spec);

  auto train_plans = epoch_batch_plan(m, Split::train, 4, 11, 1);
  CHECK(train_plans.size() == 80);  // 320 / 4
  for (const auto& p : train_plans) CHECK(p.indices.size() == 4);

  auto test_plans = epoch_batch_plan(m, Split::test, 4, 11, 1);
  CHECK(test_plans.size() == 23);  // 22*4 + 2
  CHECK(test_plans.back().indices.size() == 2);

  // Shuffle is a permutation: each train record appears exactly once.
  std::set<std::size_t> seen;
  for (const auto& p : train_plans) seen.insert(p.indices.begin(), p.indices.end());
  CHECK(seen.size() == 320);

  // Same (seed, epoch) twice reproduces the order; a new epoch reshuffles.
  auto again = epoch_batch_plan(m, Split::train, 4, 11, 1);
  CHECK(train_plans[0].indices == again[0].indices);
  auto epoch2 = epoch_batch_plan(m, Split::train, 4, 11, 2);
  bool any_difference = false;
  for (std::size_t i = 0; i < train_plans.size() && !any_difference; ++i)
    any_difference = train_plans[i].indices != epoch2[i].indices;
  CHECK(any_difference);

  // Val and test keep manifest order.
  auto val_plans = epoch_batch_plan(m, Split::val, 4, 11, 5);
  std::size_t prev = 0;
  bool ordered = true;
  bool first = true;
  for (const auto& p : val_plans)
    for (std::size_t idx : p.indices) {
      if (!first && idx <= prev) ordered = false;
      prev = idx;
      first = false;
    }
  CHECK(ordered);

  CHECK_THROWS_AS(epoch_batch_plan(m, Split::unassigned, 4, 11, 1), std::invalid_argument);
}

TEST_CASE("manifest CSV round-trips, including odd paths") {
  DatasetManifest m;
  m.records.push_back({"plain/img1.jpg", Label::poisonous, Split::train});
  m.records.push_back({"with,comma/img2.jpg", Label::edible, Split::test});
  m.records.push_back({"with\"quote.png", Label::edible, Split::val});
  fs::path path = fs::temp_directory_path() / "funginet_manifest_test.csv";
  save_manifest_csv(m, path.string());
  DatasetManifest loaded = load_manifest_csv(path.string());
  REQUIRE(loaded.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded.records[i].path == m.records[i].path);
    CHECK(loaded.records[i].label == m.records[i].label);
    CHECK(loaded.records[i].split == m.records[i].split);
  }
  fs::remove(path);
}

TEST_CASE("manifest CSV rejects bad headers and labels") {
  fs::path path = fs::temp_directory_path() / "funginet_manifest_bad.csv";
  {
    std::ofstream out(path);
    out << "path,label\nx,edible\n";
  }
  CHECK_THROWS_WITH_AS(load_manifest_csv(path.string()), doctest::Contains("header"),
                       std::runtime_error);
  {
    std::ofstream out(path);
    out << "path,label,split\nx,mystery,train\n";
  }
  CHECK_THROWS_WITH_AS(load_manifest_csv(path.string()), doctest::Contains("mystery"),
                       std::runtime_error);
  fs::remove(path);
}

TEST_CASE("ingest labels by directory, skips junk, and errors usefully") {
  TempCorpus corpus("funginet_ingest_test");
  for (int i = 0; i < 6; ++i)
    corpus.add_image(Label::poisonous, "p" + std::to_string(i) + ".png",
                     static_cast<std::uint8_t>(40 + i));
  for (int i = 0; i < 4; ++i)
    corpus.add_image(Label::edible, "e" + std::to_string(i) + ".png",
                     static_cast<std::uint8_t>(90 + i));
  // One unreadable "image" and one unsupported extension.
  {
    std::ofstream junk(corpus.root / "edible" / "broken.png");
    junk << "not an image";
    std::ofstream note(corpus.root / "edible" / "readme.txt");
    note << "hello";
  }

  IngestSummary summary = ingest(corpus.root.string());
  CHECK(summary.manifest.records.size() == 10);
  CHECK(summary.manifest.count_label(Label::poisonous) == 6);
  CHECK(summary.manifest.count_label(Label::edible) == 4);
  CHECK(summary.skipped == 2);
  for (const auto& r : summary.manifest.records) CHECK(r.split == Split::unassigned);

  TempCorpus empty("funginet_ingest_empty");
  CHECK_THROWS_WITH_AS(ingest(empty.root.string()), doctest::Contains("no decodable"),
                       std::runtime_error);

  fs::remove_all(empty.root / "poisonous");
  CHECK_THROWS_WITH_AS(ingest(empty.root.string()), doctest::Contains("poisonous"),
                       std::runtime_error);
}

TEST_CASE("load_batch stacks preprocessed tensors with labels") {
  TempCorpus corpus("funginet_batch_test");
  for (int i = 0; i < 3; ++i)
    corpus.add_image(Label::poisonous, "p" + std::to_string(i) + ".png", 50);
  for (int i = 0; i < 3; ++i)
    corpus.add_image(Label::edible, "e" + std::to_string(i) + ".png", 200);
  IngestSummary summary = ingest(corpus.root.string());
  SplitSpec spec;
  spec.test_count = 2;
  spec.val_count = 2;
  spec.seed = 1;
  assign_splits(summary.manifest, spec);

  PreprocessOptions opts;
  opts.resize = 32;
  opts.crop = 28;
  ImageCache cache(opts.resize);
  auto plans = epoch_batch_plan(summary.manifest, Split::train, 2, 5, 1);
  REQUIRE(plans.size() == 1);
  Batch batch = load_batch(summary.manifest, plans[0], Split::train, opts, &cache);
  CHECK(batch.images.shape() == std::vector<std::size_t>{2, 3, 28, 28});
  CHECK(batch.labels.size() == 2);

  // The cache path must reproduce the no-cache path bit for bit.
  Batch uncached = load_batch(summary.manifest, plans[0], Split::train, opts, nullptr);
  CHECK(std::memcmp(batch.images.f32(), uncached.images.f32(),
                    batch.images.size() * sizeof(float)) == 0);
}
