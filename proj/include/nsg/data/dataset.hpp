#ifndef NSG_DATA_DATASET_HPP
#define NSG_DATA_DATASET_HPP

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nsg/core/rng.hpp"
#include "nsg/core/tensor.hpp"
#include "nsg/data/condition.hpp"
#include "nsg/data/image_io.hpp"
#include "nsg/data/semantic.hpp"
#include "nsg/data/synthetic.hpp"

namespace nsg {

struct Sample {
  Tensor<float> image;
  SemanticLayout layout;
  AgeCondition condition;
  int identity_id = 0;
  int group = 0;
};

struct Dataset {
  int height = 0;
  int width = 0;
  std::vector<Sample> samples;
  std::array<std::vector<int>, kNumGroups> by_group;

  int size() const { return static_cast<int>(samples.size()); }

  void index_groups() {
    for (auto& g : by_group) g.clear();
    for (int i = 0; i < size(); ++i) by_group[static_cast<size_t>(samples[i].group)].push_back(i);
  }
};

inline Dataset dataset_from_synthetic(std::vector<SyntheticSample> rendered) {
  if (rendered.empty()) throw DataError("synthetic dataset is empty");
  Dataset ds;
  ds.height = rendered[0].image.dim(1);
  ds.width = rendered[0].image.dim(2);
  for (auto& r : rendered) {
    Sample s;
    s.image = std::move(r.image);
    s.layout = std::move(r.layout);
    s.condition = std::move(r.condition);
    s.identity_id = r.spec.identity_id;
    s.group = r.spec.group;
    ds.samples.push_back(std::move(s));
  }
  ds.index_groups();
  return ds;
}

/// Writes images, label maps, and a JSON-lines manifest under
/// root/<group>/<identity>_<index>.png (+ sibling _seg.png).
inline void save_synthetic_dataset(const std::vector<SyntheticSample>& rendered,
                                   const std::filesystem::path& root, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.jsonl");
  if (!manifest) throw DataError("cannot write manifest under " + root.string());
  std::map<std::pair<int, int>, int> next_index;
  for (const auto& r : rendered) {
    const int idx = next_index[{r.spec.identity_id, r.spec.group}]++;
    const fs::path dir = root / std::to_string(r.spec.group);
    fs::create_directories(dir);
    const std::string stem = std::to_string(r.spec.identity_id) + "_" + std::to_string(idx);
    const fs::path img_path = dir / (stem + ".png");
    const fs::path seg_path = dir / (stem + "_seg.png");
    write_png(img_path, tensor_to_image(r.image));
    ImageU8 seg;
    seg.channels = 1;
    seg.height = r.layout.height;
    seg.width = r.layout.width;
    seg.pixels = r.layout.classes;
    write_png(seg_path, seg);
    nlohmann::json rec{{"identity_id", r.spec.identity_id},
                       {"group", r.spec.group},
                       {"seed", seed},
                       {"image", std::to_string(r.spec.group) + "/" + stem + ".png"},
                       {"seg", std::to_string(r.spec.group) + "/" + stem + "_seg.png"}};
    manifest << rec.dump() << '\n';
  }
}

/// Loads root/<group>/<identity>_<index>.png with sibling _seg.png label maps
/// (8-bit class ids in the 12-class convention).
inline Dataset load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());
  Dataset ds;
  const auto mapping = identity_class_mapping();
  std::vector<fs::path> files;
  for (int g = 0; g < kNumGroups; ++g) {
    const fs::path dir = root / std::to_string(g);
    if (!fs::is_directory(dir)) continue;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file() || e.path().extension() != ".png") continue;
      if (e.path().stem().string().ends_with("_seg")) continue;
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& img_path : files) {
    const int g = std::stoi(img_path.parent_path().filename().string());
    const std::string stem = img_path.stem().string();
    const auto us = stem.find('_');
    if (us == std::string::npos)
      throw DataError("file name not <identity>_<index>.png: " + img_path.string());
    Sample s;
    s.identity_id = std::stoi(stem.substr(0, us));
    s.group = g;
    const ImageU8 img = read_png(img_path);
    if (img.channels != 3) throw DataError("expected RGB image: " + img_path.string());
    s.image = image_to_tensor(img);

    fs::path seg_path = img_path.parent_path() / (stem + "_seg.png");
    if (!fs::exists(seg_path)) throw DataError("missing label map: " + seg_path.string());
    const ImageU8 seg = read_png(seg_path);
    if (seg.channels != 1 || seg.height != img.height || seg.width != img.width)
      throw DataError("label map does not match image: " + seg_path.string());
    std::vector<int> raw(seg.pixels.begin(), seg.pixels.end());
    s.layout = merge_parsing(raw, seg.height, seg.width, mapping);
    s.condition = make_condition(g, img.height, img.width);

    if (ds.samples.empty()) {
      ds.height = img.height;
      ds.width = img.width;
    } else if (img.height != ds.height || img.width != ds.width) {
      throw DataError("image size mismatch in dataset: " + img_path.string());
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw DataError("no samples under " + root.string());
  ds.index_groups();
  return ds;
}

/// One training batch: index pairs into the dataset with
/// young.group < old.group for every pair.
struct FacePairBatch {
  std::vector<std::pair<int, int>> pairs;  // (young index, old index)
  int size() const { return static_cast<int>(pairs.size()); }
};

/// One epoch of pair batches. Every sample appears at least once; partners
/// are drawn uniformly from the other groups; deterministic given the rng.
inline std::vector<FacePairBatch> make_pair_batches(const Dataset& ds, int batch_size, Rng rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const int n = ds.size();
  int largest_group = 0;
  for (const auto& g : ds.by_group) largest_group = std::max(largest_group, (int)g.size());
  if (largest_group == n)
    throw DataError("pairing needs images from at least two age groups");

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);

  std::vector<FacePairBatch> batches;
  FacePairBatch cur;
  for (int i : order) {
    const int gi = ds.samples[static_cast<size_t>(i)].group;
    // uniform draw over all samples outside group gi
    std::uint64_t r = rng.below(static_cast<std::uint64_t>(n - ds.by_group[gi].size()));
    int partner = -1;
    for (int g = 0; g < kNumGroups && partner < 0; ++g) {
      if (g == gi) continue;
      const auto& bucket = ds.by_group[static_cast<size_t>(g)];
      if (r < bucket.size()) partner = bucket[static_cast<size_t>(r)];
      else r -= bucket.size();
    }
    const int gp = ds.samples[static_cast<size_t>(partner)].group;
    cur.pairs.emplace_back(gi < gp ? i : partner, gi < gp ? partner : i);
    if (cur.size() == batch_size) {
      batches.push_back(std::move(cur));
      cur = FacePairBatch{};
    }
  }
  if (cur.size() > 0) batches.push_back(std::move(cur));
  return batches;
}

}  // namespace nsg

#endif
