#include <doctest.h>

#include <string>
#include <vector>

#include "nsg/model/discriminator.hpp"

using namespace nsg;

namespace {

DiscriminatorConfig small_config() {
  DiscriminatorConfig dc;
  dc.base_channels = 8;
  return dc;
}

}  // namespace

TEST_CASE("critic emits a patch map and a single age estimate") {
  auto d = Discriminator<float>::make(small_config());
  d.init(Rng(71));
  Tape<float> tape;
  Binder<float> binder(tape, false);
  auto placed = place(binder, "d", d);

  Rng rng(72);
  Tensor<float> img({3, 64, 64});
  rng.fill_normal(img, 0.5f);
  auto out = placed(tape.constant(img));
  CHECK(out.realism.val().rank() == 3);
  CHECK(out.realism.val().dim(0) == 1);
  CHECK(out.realism.val().dim(1) == 6);
  CHECK(out.realism.val().dim(2) == 6);
  CHECK(out.age.val().rank() == 1);
  CHECK(out.age.val().dim(0) == 1);

  SUBCASE("the patch map grows with the input") {
    Tensor<float> big({3, 128, 128});
    rng.fill_normal(big, 0.5f);
    auto o2 = placed(tape.constant(big));
    CHECK(o2.realism.val().dim(1) == 14);
    CHECK(o2.realism.val().dim(2) == 14);
    CHECK(o2.age.val().dim(0) == 1);
  }

  SUBCASE("different inputs score differently") {
    Tensor<float> other({3, 64, 64});
    rng.fill_normal(other, 0.5f);
    auto o3 = placed(tape.constant(other));
    CHECK((out.realism.val().data - o3.realism.val().data).abs().maxCoeff() > 0.0f);
    CHECK(out.age.val().data[0] != o3.age.val().data[0]);
  }

  SUBCASE("inputs the trunk cannot reduce are rejected") {
    Tensor<float> tiny({3, 16, 16});
    CHECK_THROWS_AS(placed(tape.constant(tiny)), ShapeError);
    Tensor<float> flat({64, 64});
    CHECK_THROWS_AS(placed(tape.constant(flat)), ShapeError);
    Tensor<float> gray({1, 64, 64});
    CHECK_THROWS_AS(placed(tape.constant(gray)), ShapeError);
  }
}

TEST_CASE("layer shapes follow the channel schedule") {
  auto d = Discriminator<float>::make(small_config());
  CHECK(d.c1.w.dim(0) == 8);
  CHECK(d.c1.w.dim(1) == 3);
  CHECK(d.c1.w.dim(2) == 4);
  CHECK(d.c1.w.dim(3) == 4);
  CHECK(d.c2.w.dim(0) == 16);
  CHECK(d.c3.w.dim(0) == 32);
  CHECK(d.c4.w.dim(0) == 64);
  CHECK(d.patch.w.dim(0) == 1);
  CHECK(d.patch.w.dim(1) == 64);
  CHECK(d.age_fc.w.dim(0) == 1);
  CHECK(d.age_fc.w.dim(1) == 64);

  auto twin = Discriminator<float>::make(small_config());
  CHECK(d.param_count() == twin.param_count());

  std::vector<std::string> names;
  d.visit("d", [&](const std::string& n, Tensor<float>&) { names.push_back(n); });
  CHECK(names.size() == 12);
  CHECK(names.front() == "d.c1.w");
  CHECK(names.back() == "d.age_fc.b");
}

TEST_CASE("zero-weight critic scores everything zero") {
  auto d = Discriminator<float>::make(small_config());
  Tape<float> tape;
  Binder<float> binder(tape, false);
  auto placed = place(binder, "d", d);
  Rng rng(73);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor<float> img({3, 32, 32});
    rng.fill_normal(img);
    auto out = placed(tape.constant(img));
    CHECK(out.realism.val().data.abs().maxCoeff() == 0.0f);
    CHECK(out.age.val().data[0] == 0.0f);
  }
}

TEST_CASE("config validation rejects bad channel counts") {
  DiscriminatorConfig dc;
  dc.base_channels = 0;
  CHECK_THROWS_AS(Discriminator<float>::make(dc), ConfigError);
  dc.base_channels = 6;
  CHECK_THROWS_AS(Discriminator<float>::make(dc), ConfigError);
  dc.base_channels = -4;
  CHECK_THROWS_AS(Discriminator<float>::make(dc), ConfigError);
}
