#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "nsg/eval/evaluator.hpp"
#include "nsg/train/trainer.hpp"

using namespace nsg;
namespace fs = std::filesystem;

namespace {

SampleRecord rec(int id, const char* pop, int src, int tgt, double age, double score) {
  SampleRecord r;
  r.subject_id = id;
  r.population = pop;
  r.source_group = src;
  r.target_group = tgt;
  r.estimated_age = age;
  r.identity_score = score;
  return r;
}

/// Two generic and two generated records per group; generic means match the
/// published per-group estimates, generated means sit `gap` above them.
std::vector<SampleRecord> published_fixture(double gap) {
  const std::array<double, kNumGroups> generic_means{27.80, 38.60, 47.74, 57.25};
  std::vector<SampleRecord> records;
  int id = 0;
  for (int g = 0; g < kNumGroups; ++g) {
    const double m = generic_means[static_cast<size_t>(g)];
    records.push_back(rec(id++, "generic", g, g, m - 0.5, 100.0));
    records.push_back(rec(id++, "generic", g, g, m + 0.5, 100.0));
    records.push_back(rec(id++, "generated", 0, g, m + gap - 0.25, 90.0));
    records.push_back(rec(id++, "generated", 0, g, m + gap + 0.25, 90.0));
  }
  return records;
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "nsg_evaluator_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("reports reproduce recorded group means exactly") {
  const auto records = published_fixture(1.5);
  const EvalReport rep = build_report(records);
  const std::array<double, kNumGroups> want{27.80, 38.60, 47.74, 57.25};
  for (int g = 0; g < kNumGroups; ++g) {
    CHECK(rep.groups[static_cast<size_t>(g)].generic_mean ==
          doctest::Approx(want[static_cast<size_t>(g)]).epsilon(1e-9));
    CHECK(rep.groups[static_cast<size_t>(g)].generated_mean ==
          doctest::Approx(want[static_cast<size_t>(g)] + 1.5).epsilon(1e-9));
    CHECK(rep.groups[static_cast<size_t>(g)].abs_error == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(rep.groups[static_cast<size_t>(g)].generic_std == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(rep.groups[static_cast<size_t>(g)].generated_count == 2);
    CHECK(rep.groups[static_cast<size_t>(g)].generic_count == 2);
  }
  CHECK(rep.mean_abs_error == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(rep.identity_rate == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(rep.identity_mean == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(rep.generated_total == 8);
  CHECK(rep.generic_total == 8);

  SUBCASE("matching populations zero out the error") {
    std::vector<SampleRecord> flat;
    int id = 0;
    for (int g = 0; g < kNumGroups; ++g) {
      flat.push_back(rec(id++, "generated", 0, g, 40.0, 95.0));
      flat.push_back(rec(id++, "generated", 0, g, 50.0, 95.0));
      flat.push_back(rec(id++, "generic", g, g, 45.0, 100.0));
      flat.push_back(rec(id++, "generic", g, g, 45.0, 100.0));
    }
    const EvalReport r2 = build_report(flat);
    CHECK(r2.groups[0].generated_mean == doctest::Approx(45.0).epsilon(1e-12));
    CHECK(r2.groups[0].abs_error == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r2.mean_abs_error == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("records survive the JSONL round trip byte for byte") {
  const auto records = published_fixture(0.75);
  const fs::path dir = fresh_dir("roundtrip");
  const fs::path path = dir / "records.jsonl";
  write_records(path, records);
  const auto loaded = read_records(path);
  REQUIRE(loaded.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].subject_id == records[i].subject_id);
    CHECK(loaded[i].population == records[i].population);
    CHECK(loaded[i].source_group == records[i].source_group);
    CHECK(loaded[i].target_group == records[i].target_group);
    CHECK(loaded[i].estimated_age == records[i].estimated_age);
    CHECK(loaded[i].identity_score == records[i].identity_score);
  }

  const EvalReport before = build_report(records);
  const EvalReport after = build_report(loaded);
  for (int g = 0; g < kNumGroups; ++g) {
    CHECK(std::abs(after.groups[static_cast<size_t>(g)].generated_mean -
                   before.groups[static_cast<size_t>(g)].generated_mean) <= 1e-9);
    CHECK(std::abs(after.groups[static_cast<size_t>(g)].generic_std -
                   before.groups[static_cast<size_t>(g)].generic_std) <= 1e-9);
  }
  CHECK(std::abs(after.mean_abs_error - before.mean_abs_error) <= 1e-9);
  CHECK(std::abs(after.identity_rate - before.identity_rate) <= 1e-9);

  SUBCASE("malformed lines carry their location") {
    const fs::path bad = dir / "bad.jsonl";
    std::ofstream out(bad);
    out << R"({"subject_id": 1, "population": "generic"})" << "\n";
    out.close();
    CHECK_THROWS_WITH_AS(read_records(bad), doctest::Contains("bad.jsonl:1"), DataError);
    CHECK_THROWS_AS(read_records(dir / "missing.jsonl"), DataError);
  }
}

TEST_CASE("reports refuse incomplete or mislabeled records") {
  auto records = published_fixture(1.0);

  SUBCASE("an age group without generated samples") {
    std::vector<SampleRecord> partial;
    for (const auto& r : records)
      if (!(r.population == "generated" && r.target_group == 2)) partial.push_back(r);
    CHECK_THROWS_WITH_AS(build_report(partial), doctest::Contains("41-50"), DataError);
  }
  SUBCASE("an age group without generic samples") {
    std::vector<SampleRecord> partial;
    for (const auto& r : records)
      if (!(r.population == "generic" && r.target_group == 0)) partial.push_back(r);
    CHECK_THROWS_WITH_AS(build_report(partial), doctest::Contains("30-"), DataError);
  }
  SUBCASE("unknown population labels") {
    records[0].population = "synthetic";
    CHECK_THROWS_AS(build_report(records), DataError);
  }
  SUBCASE("out-of-range target groups") {
    records[0].target_group = 7;
    CHECK_THROWS_AS(build_report(records), DataError);
  }
}

TEST_CASE("identity verification summarizes scores against the threshold") {
  CHECK(identity_stats({80.0, 70.0}, kIdentityThreshold).first == doctest::Approx(50.0));
  CHECK(identity_stats({80.0, 70.0}, kIdentityThreshold).second == doctest::Approx(75.0));
  CHECK(format_rate_mean(50.0, 75.0) == "50.00 (75.00)");
  const auto at = identity_stats({73.975, 73.975}, 73.975);
  CHECK(at.first == doctest::Approx(100.0));
  CHECK_THROWS_AS(identity_stats({}, 50.0), DataError);

  SUBCASE("the rate never rises as the threshold climbs") {
    const std::vector<double> scores{10.0, 35.5, 60.0, 73.975, 74.0, 88.0, 99.5};
    double prev = 100.0;
    for (double t = 0.0; t <= 100.0; t += 5.0) {
      const double rate = identity_stats(scores, t).first;
      CHECK(rate <= prev + 1e-12);
      prev = rate;
    }
  }

  SUBCASE("paired scoring plumbs through a custom scorer") {
    const auto face = render_face(make_face_spec(0, 1, 7), 32);
    std::vector<Tensor<float>> ins{face.image, face.image};
    std::vector<Tensor<float>> outs{face.image, face.image};
    int calls = 0;
    const auto result = identity_preservation(
        ins, outs,
        [&](const Tensor<float>&, const Tensor<float>&) { return 70.0 + 10.0 * calls++; },
        kIdentityThreshold);
    CHECK(result.first == doctest::Approx(50.0));
    CHECK(result.second == doctest::Approx(75.0));
    outs.pop_back();
    CHECK_THROWS_AS(identity_preservation(ins, outs,
                                          [](const Tensor<float>&, const Tensor<float>&) {
                                            return 100.0;
                                          },
                                          kIdentityThreshold),
                    DataError);
  }

  SUBCASE("a face verifies perfectly against itself") {
    const auto face = render_face(make_face_spec(3, 2, 9), 32);
    CHECK(identity_ncc_score(face.image, face.image, face.layout) ==
          doctest::Approx(100.0).epsilon(1e-7));
  }
}

TEST_CASE("rendered reports carry the table and the threshold verbatim") {
  const EvalReport rep = build_report(published_fixture(1.0));
  const std::string text = report_to_text(rep);
  CHECK(text.find("30-") != std::string::npos);
  CHECK(text.find("31-40") != std::string::npos);
  CHECK(text.find("41-50") != std::string::npos);
  CHECK(text.find("51+") != std::string::npos);
  CHECK(text.find("Generic") != std::string::npos);
  CHECK(text.find("Generated") != std::string::npos);
  CHECK(text.find("Absolute Error") != std::string::npos);
  CHECK(text.find("73.975") != std::string::npos);
  CHECK(text.find("27.80") != std::string::npos);

  const auto j = report_to_json(rep);
  CHECK(j["groups"].size() == kNumGroups);
  CHECK(j["identity"]["threshold"].get<double>() == kIdentityThreshold);
  CHECK(j["counts"]["generated"].get<int>() == 8);

  const fs::path dir = fresh_dir("report");
  write_report(dir, rep);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "report.txt"));
}

TEST_CASE("grid rows compose cells on a white canvas with a marked input") {
  const auto face = render_face(make_face_spec(4, 1, 11), 32);
  Tensor<float> cell = face.image;
  std::vector<const Tensor<float>*> cells{&cell, &cell, &cell, &cell, &cell};
  const ImageU8 img = render_grid_row(cells, 0);

  CHECK(img.channels == 3);
  CHECK(img.width == 5 * 32 + 6 * 2);
  CHECK(img.height == 32 + 2 * 2);

  auto px = [&](int y, int x, int c) {
    return img.pixels[static_cast<size_t>((y * img.width + x) * 3 + c)];
  };
  CHECK(px(0, 0, 0) == 255);
  CHECK(px(0, 0, 1) == 255);
  CHECK(px(0, 0, 2) == 255);

  CHECK(px(2, 2, 0) == 255);
  CHECK(px(2, 2, 1) == 0);
  CHECK(px(2, 2, 2) == 0);
  CHECK(px(2 + 31, 2 + 31, 0) == 255);
  CHECK(px(2 + 31, 2 + 31, 1) == 0);

  const int second_cell_x = 2 + 32 + 2;
  CHECK((px(2, second_cell_x, 0) != 255 || px(2, second_cell_x, 1) != 0 ||
         px(2, second_cell_x, 2) != 0));

  SUBCASE("degenerate cell lists are rejected") {
    CHECK_THROWS_AS(render_grid_row({}, 0), ShapeError);
    Tensor<float> odd({3, 16, 16});
    std::vector<const Tensor<float>*> mixed{&cell, &odd};
    CHECK_THROWS_AS(render_grid_row(mixed, 0), ShapeError);
  }

  SUBCASE("subject grids land on disk with the right size") {
    const fs::path dir = fresh_dir("grids");
    std::array<Tensor<float>, kNumGroups> faces{cell, cell, cell, cell};
    write_subject_grid(dir / "nested" / "subject_0.png", cell, faces);
    const ImageU8 back = read_png(dir / "nested" / "subject_0.png");
    CHECK(back.width == 5 * 32 + 6 * 2);
    CHECK(back.height == 32 + 2 * 2);
  }
}

TEST_CASE("translation picks the direction from the group pair") {
  GeneratorConfig gc;
  gc.base_channels = 4;
  gc.n_resblocks = 1;
  gc.injection_channels = 4;
  gc.frm_enabled = false;
  gc.constraint_enabled = false;
  auto g_p = Generator<float>::make(gc);
  g_p.init(Rng(31));
  auto g_r = Generator<float>::make(gc);

  const auto face = render_face(make_face_spec(5, 0, 13), 32);
  auto nonzero = [&](int src, int tgt) {
    const Tensor<float> out = translate_face(g_p, g_r, face.image, face.layout, src, tgt, 3);
    return out.data.abs().maxCoeff() > 0.0f;
  };

  CHECK(nonzero(0, 3));
  CHECK(nonzero(1, 2));
  CHECK(!nonzero(3, 0));
  CHECK(!nonzero(2, 1));
  CHECK(nonzero(0, 0));
  CHECK(nonzero(1, 1));
  CHECK(!nonzero(2, 2));
  CHECK(!nonzero(3, 3));
  CHECK_THROWS_AS(translate_face(g_p, g_r, face.image, face.layout, 0, 9, 3), ConfigError);
  CHECK_THROWS_AS(translate_face(g_p, g_r, face.image, face.layout, 0, -1, 3), ConfigError);
}

TEST_CASE("the stripe oracle reads ages straight off synthetic faces") {
  const Dataset ds = dataset_from_synthetic(generate_synthetic_dataset(2, {0, 1, 2, 3}, 32, 17));
  for (const auto& s : ds.samples)
    CHECK(synthetic_age_oracle(s.image, s.layout) == doctest::Approx(s.group).epsilon(1e-9));
}

TEST_CASE("the synthetic evaluation pass emits both populations") {
  const Dataset ds = dataset_from_synthetic(generate_synthetic_dataset(2, {0, 1, 2, 3}, 32, 19));
  GeneratorConfig gc;
  gc.base_channels = 4;
  gc.n_resblocks = 1;
  gc.injection_channels = 4;
  auto g_p = Generator<float>::make(gc);
  g_p.init(Rng(41));
  auto g_r = Generator<float>::make(gc);
  g_r.init(Rng(42));

  EvalOptions opt;
  opt.max_subjects = 3;
  opt.grids = true;
  const fs::path dir = fresh_dir("synthetic_pass");
  const auto records = synthetic_eval_records(g_p, g_r, ds, opt, dir);

  int generic = 0, generated = 0;
  for (const auto& r : records) {
    if (r.population == "generic") {
      ++generic;
      CHECK(r.identity_score == doctest::Approx(100.0).epsilon(1e-7));
      CHECK(r.source_group == r.target_group);
    } else {
      ++generated;
    }
  }
  CHECK(generic == ds.size());
  CHECK(generated == 3 * kNumGroups);

  int grids = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") ++grids;
  CHECK(grids == 3);

  SUBCASE("the subject cap keeps sources balanced") {
    std::array<int, kNumGroups> seen{};
    for (const auto& r : records)
      if (r.population == "generated") seen[static_cast<size_t>(r.source_group)]++;
    int nonzero_groups = 0;
    for (int n : seen) nonzero_groups += (n > 0);
    CHECK(nonzero_groups == 3);
  }

  SUBCASE("the pass is deterministic in the seed") {
    const auto again = synthetic_eval_records(g_p, g_r, ds, opt);
    REQUIRE(again.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i)
      CHECK(again[i].estimated_age == records[i].estimated_age);
  }
}

TEST_CASE("the oracle match rate counts translations that landed") {
  std::vector<SampleRecord> records;
  records.push_back(rec(0, "generated", 0, 2, 2.1, 90.0));
  records.push_back(rec(1, "generated", 0, 3, 2.4, 90.0));
  records.push_back(rec(2, "generated", 1, 0, 0.4, 90.0));
  records.push_back(rec(3, "generic", 1, 1, 1.0, 100.0));
  CHECK(oracle_target_match_rate(records) == doctest::Approx(100.0 * 2.0 / 3.0));
  CHECK_THROWS_AS(oracle_target_match_rate({records[3]}), DataError);
}

TEST_CASE("estimator-driven accuracy aggregates labeled image lists") {
  const auto face = render_face(make_face_spec(6, 0, 23), 32);
  std::vector<Tensor<float>> images;
  images.reserve(2 * kNumGroups);
  for (int g = 0; g < kNumGroups; ++g) {
    for (int k = 0; k < 2; ++k) {
      Tensor<float> t = face.image;
      t.data[0] = static_cast<float>(g) + (k == 0 ? 0.25f : 0.75f);
      images.push_back(std::move(t));
    }
  }
  std::vector<LabeledImage> generated, generic;
  for (int g = 0; g < kNumGroups; ++g) {
    generated.push_back({&images[static_cast<size_t>(2 * g)], &face.layout, g});
    generic.push_back({&images[static_cast<size_t>(2 * g + 1)], &face.layout, g});
  }
  const auto groups = age_translation_accuracy(
      generated, generic,
      [](const Tensor<float>& img, const SemanticLayout&) {
        return static_cast<double>(img.data[0]);
      });
  for (int g = 0; g < kNumGroups; ++g) {
    CHECK(groups[static_cast<size_t>(g)].generated_mean ==
          doctest::Approx(g + 0.25).epsilon(1e-6));
    CHECK(groups[static_cast<size_t>(g)].generic_mean ==
          doctest::Approx(g + 0.75).epsilon(1e-6));
    CHECK(groups[static_cast<size_t>(g)].abs_error == doctest::Approx(0.5).epsilon(1e-6));
  }
}
