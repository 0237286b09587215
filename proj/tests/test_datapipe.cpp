#include <doctest.h>

#include <filesystem>
#include <set>

#include "nsg/data/condition.hpp"
#include "nsg/data/dataset.hpp"
#include "nsg/data/noise.hpp"
#include "nsg/data/semantic.hpp"
#include "nsg/data/synthetic.hpp"
#include "nsg/eval/oracle.hpp"

using namespace nsg;

TEST_CASE("merge_parsing basics") {
  SUBCASE("all-zero labels with identity map give an all-background layout") {
    std::vector<int> raw(16, 0);
    auto layout = merge_parsing(raw, 4, 4, identity_class_mapping());
    for (int i = 0; i < 16; ++i) {
      CHECK(layout.onehot.data[i] == 1.0f);  // channel 0
      CHECK(layout.classes[i] == 0);
    }
    for (int c = 1; c < kNumClasses; ++c)
      CHECK(layout.onehot.data.segment(c * 16, 16).abs().maxCoeff() == 0.0f);
  }

  SUBCASE("two raw labels mapped to one class union their regions") {
    std::vector<int> raw = {4, 5, 4, 0};
    std::map<int, int> mapping = {{0, 0}, {4, 3}, {5, 3}};
    auto layout = merge_parsing(raw, 2, 2, mapping);
    // oracle: per-pixel loop
    for (int i = 0; i < 4; ++i) {
      const int expect = (raw[i] == 4 || raw[i] == 5) ? 3 : 0;
      CHECK(layout.classes[i] == expect);
      for (int c = 0; c < kNumClasses; ++c)
        CHECK(layout.onehot.data[c * 4 + i] == (c == expect ? 1.0f : 0.0f));
    }
  }

  SUBCASE("unknown raw label names the offender") {
    std::vector<int> raw = {0, 99};
    CHECK_THROWS_WITH_AS(merge_parsing(raw, 1, 2, identity_class_mapping()),
                         doctest::Contains("99"), DataError);
  }

  SUBCASE("mapping outside 0..11 is rejected") {
    std::vector<int> raw = {7};
    std::map<int, int> mapping = {{7, 12}};
    CHECK_THROWS_AS(merge_parsing(raw, 1, 1, mapping), DataError);
  }

  SUBCASE("size mismatch is rejected") {
    std::vector<int> raw = {0, 0};
    CHECK_THROWS_AS(merge_parsing(raw, 2, 2, identity_class_mapping()), ShapeError);
  }
}

TEST_CASE("layout one-hot channels sum to exactly 1 at every pixel") {
  auto sample = render_face(make_face_spec(3, 2, 77), 64);
  const int64_t hw = 64 * 64;
  for (int64_t i = 0; i < hw; ++i) {
    float s = 0;
    for (int c = 0; c < kNumClasses; ++c) s += sample.layout.onehot.data[c * hw + i];
    CHECK(s == 1.0f);
  }
}

TEST_CASE("make_condition") {
  SUBCASE("group 1 gives the 0-1-0-0 pattern") {
    auto c = make_condition(1, 4, 4);
    CHECK(c.onehot_maps.data.segment(0, 16).abs().maxCoeff() == 0.0f);
    CHECK(c.onehot_maps.data.segment(16, 16).minCoeff() == 1.0f);
    CHECK(c.onehot_maps.data.segment(32, 32).abs().maxCoeff() == 0.0f);
    CHECK(c.normalized_age == doctest::Approx(35.5 / 77.0));
  }
  SUBCASE("group 0 fills channel 0") {
    auto c = make_condition(0, 2, 2);
    CHECK(c.onehot_maps.data.segment(0, 4).minCoeff() == 1.0f);
    CHECK(c.normalized_age == doctest::Approx(23.0 / 77.0));
  }
  SUBCASE("group 4 is out of range") { CHECK_THROWS_AS(make_condition(4, 2, 2), ConfigError); }
}

TEST_CASE("apply_noise") {
  auto sample = render_face(make_face_spec(1, 0, 5), 32);
  const int64_t hw = 32 * 32;

  SUBCASE("unit noise with empty drop set is the identity") {
    NoiseMap ones;
    ones.data = Tensor<float>::full({1, 32, 32}, 1.0f);
    auto out = apply_noise(sample.layout, ones, {});
    CHECK((out.data - sample.layout.onehot.data).abs().maxCoeff() == 0.0f);
  }

  SUBCASE("dropped channels are exactly zero") {
    auto noise = make_noise_map(9, 32, 32);
    auto out = apply_noise(sample.layout, noise, default_drop_classes());
    for (int c : {kEyes, kLips, kInnerMouth})
      CHECK(out.data.segment(c * hw, hw).abs().maxCoeff() == 0.0f);
  }

  SUBCASE("matches the element-wise oracle") {
    auto noise = make_noise_map(10, 32, 32);
    auto out = apply_noise(sample.layout, noise, {kEyes});
    for (int c = 0; c < kNumClasses; ++c)
      for (int64_t i = 0; i < hw; ++i) {
        const float expect =
            c == kEyes ? 0.0f : sample.layout.onehot.data[c * hw + i] * noise.data.data[i];
        CHECK(out.data[c * hw + i] == expect);
      }
  }

  SUBCASE("shape mismatch throws") {
    auto noise = make_noise_map(11, 16, 16);
    CHECK_THROWS_AS(apply_noise(sample.layout, noise, {}), ShapeError);
  }
}

TEST_CASE("noise maps are reproducible by seed") {
  auto a = make_noise_map(123, 16, 16);
  auto b = make_noise_map(123, 16, 16);
  auto c = make_noise_map(124, 16, 16);
  CHECK((a.data.data - b.data.data).abs().maxCoeff() == 0.0f);
  CHECK((a.data.data - c.data.data).abs().maxCoeff() > 0.0f);
}

TEST_CASE("synthetic renderer determinism and geometry sharing") {
  auto a = generate_synthetic_dataset(2, {0, 3}, 64, 42);
  auto b = generate_synthetic_dataset(2, {0, 3}, 64, 42);
  REQUIRE(a.size() == 4);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i].image.data - b[i].image.data).abs().maxCoeff() == 0.0f);
    CHECK(a[i].layout.classes == b[i].layout.classes);
  }

  // same identity, groups 0 vs 3: identical geometry, image diff confined to skin
  const auto& g0 = a[0];
  const auto& g3 = a[1];
  CHECK(g0.spec.identity_id == g3.spec.identity_id);
  CHECK(g0.layout.classes == g3.layout.classes);
  const int64_t hw = 64 * 64;
  int diff_px = 0;
  for (int64_t i = 0; i < hw; ++i) {
    bool differs = false;
    for (int ch = 0; ch < 3; ++ch)
      if (g0.image.data[ch * hw + i] != g3.image.data[ch * hw + i]) differs = true;
    if (differs) {
      ++diff_px;
      CHECK(g0.layout.classes[static_cast<size_t>(i)] == kSkin);
    }
  }
  CHECK(diff_px > 0);
}

TEST_CASE("renderer and stripe oracle agree on every sample") {
  for (int h : {32, 64}) {
    int checked = 0;
    for (int id = 0; id < 25; ++id)
      for (int g = 0; g < kNumGroups; ++g) {
        auto s = render_face(make_face_spec(id, g, 7), h);
        CHECK(s.spec.wrinkle_count == g);
        INFO("identity ", id, " group ", g, " H ", h);
        CHECK(synthetic_age_oracle(s.image, s.layout) == g);
        ++checked;
      }
    CHECK(checked == 100);
  }
}

TEST_CASE("oracle degenerate inputs") {
  auto s = render_face(make_face_spec(0, 0, 1), 32);
  SUBCASE("uniform gray image has no stripes") {
    Tensor<float> gray = Tensor<float>::full({3, 32, 32}, 0.0f);
    CHECK(synthetic_age_oracle(gray, s.layout) == 0);
  }
  SUBCASE("zero-stripe face scores 0") { CHECK(synthetic_age_oracle(s.image, s.layout) == 0); }
}

TEST_CASE("pair batches") {
  auto ds = dataset_from_synthetic(generate_synthetic_dataset(10, {0, 1, 2, 3}, 32, 3));
  REQUIRE(ds.size() == 40);

  SUBCASE("pairs always have young.group < old.group and cover every sample") {
    auto batches = make_pair_batches(ds, 4, Rng(5));
    std::set<int> seen;
    int pair_count = 0;
    for (const auto& b : batches)
      for (auto [y, o] : b.pairs) {
        CHECK(ds.samples[y].group < ds.samples[o].group);
        seen.insert(y);
        seen.insert(o);
        ++pair_count;
      }
    CHECK(pair_count == 40);
    CHECK(static_cast<int>(seen.size()) >= 40 / 2);
    // coverage: every sample appears in at least one pair of its epoch
    std::set<int> all;
    for (const auto& b : batches)
      for (auto [y, o] : b.pairs) {
        all.insert(y);
        all.insert(o);
      }
    for (int i = 0; i < 40; ++i) {
      INFO("sample ", i);
      CHECK(all.count(i) == 1);
    }
  }

  SUBCASE("deterministic given the rng seed") {
    auto b1 = make_pair_batches(ds, 4, Rng(5));
    auto b2 = make_pair_batches(ds, 4, Rng(5));
    REQUIRE(b1.size() == b2.size());
    for (size_t i = 0; i < b1.size(); ++i) CHECK(b1[i].pairs == b2[i].pairs);
    auto b3 = make_pair_batches(ds, 4, Rng(6));
    bool any_diff = false;
    for (size_t i = 0; i < std::min(b1.size(), b3.size()); ++i)
      if (b1[i].pairs != b3[i].pairs) any_diff = true;
    CHECK(any_diff);
  }

  SUBCASE("two-sample dataset yields exactly that pair") {
    Dataset two;
    auto r = generate_synthetic_dataset(1, {0, 3}, 32, 2);
    two = dataset_from_synthetic(std::move(r));
    auto batches = make_pair_batches(two, 1, Rng(1));
    CHECK(batches.size() == 2);
    for (const auto& b : batches) {
      REQUIRE(b.size() == 1);
      CHECK(two.samples[b.pairs[0].first].group == 0);
      CHECK(two.samples[b.pairs[0].second].group == 3);
    }
  }

  SUBCASE("single-group dataset cannot pair") {
    auto solo = dataset_from_synthetic(generate_synthetic_dataset(4, {2}, 32, 2));
    CHECK_THROWS_AS(make_pair_batches(solo, 2, Rng(1)), DataError);
  }
}

TEST_CASE("synthetic save and load round-trip") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "nsg_ds_roundtrip";
  fs::remove_all(root);
  auto rendered = generate_synthetic_dataset(3, {0, 1, 2, 3}, 32, 11);
  save_synthetic_dataset(rendered, root, 11);
  CHECK(fs::exists(root / "manifest.jsonl"));

  auto ds = load_dataset(root);
  REQUIRE(ds.size() == 12);
  CHECK(ds.height == 32);

  // order by (group, identity) from the directory walk; find one match
  int matches = 0;
  for (const auto& r : rendered)
    for (const auto& s : ds.samples) {
      if (s.group != r.spec.group || s.identity_id != r.spec.identity_id) continue;
      ++matches;
      CHECK(s.layout.classes == r.layout.classes);
      // images round-trip through 8-bit quantization
      CHECK((s.image.data - r.image.data).abs().maxCoeff() <= 1.0f / 127.5f + 1e-6f);
      CHECK(synthetic_age_oracle(s.image, s.layout) == r.spec.group);
    }
  CHECK(matches == 12);
  fs::remove_all(root);
}

TEST_CASE("load_dataset error cases") {
  namespace fs = std::filesystem;
  CHECK_THROWS_AS(load_dataset("/nonexistent/nsg"), DataError);

  const fs::path root = fs::temp_directory_path() / "nsg_ds_missing_seg";
  fs::remove_all(root);
  fs::create_directories(root / "0");
  auto s = render_face(make_face_spec(0, 0, 1), 32);
  write_png(root / "0" / "0_0.png", tensor_to_image(s.image));
  CHECK_THROWS_AS(load_dataset(root), DataError);
  fs::remove_all(root);
}
