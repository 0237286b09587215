#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nsg/model/discriminator.hpp"
#include "nsg/model/generator.hpp"
#include "nsg/nn/adam.hpp"
#include "nsg/nn/init.hpp"
#include "nsg/nn/module.hpp"

using namespace nsg;

TEST_CASE("placement binds exactly the visited parameters, in order") {
  GeneratorConfig gc;
  gc.base_channels = 8;
  gc.n_resblocks = 2;
  gc.injection_channels = 4;
  auto g = Generator<float>::make(gc);
  g.init(Rng(3));

  std::vector<std::string> visited;
  g.visit("g", [&](const std::string& name, Tensor<float>&) { visited.push_back(name); });

  Tape<float> tape;
  Binder<float> binder(tape, true);
  auto placed = place(binder, "g", g);
  (void)placed;

  REQUIRE(binder.params().size() == visited.size());
  for (size_t i = 0; i < visited.size(); ++i) {
    CHECK(binder.params()[i].name == visited[i]);
    CHECK(binder.params()[i].master != nullptr);
  }

  SUBCASE("bound masters are the container tensors themselves") {
    bool found = false;
    g.visit("g", [&](const std::string& name, Tensor<float>& t) {
      if (name == "g.enc1.w") {
        for (const auto& p : binder.params())
          if (p.name == name) found = (p.master == &t);
      }
    });
    CHECK(found);
  }

  SUBCASE("discriminator placement matches its visit too") {
    DiscriminatorConfig dc;
    dc.base_channels = 8;
    auto d = Discriminator<float>::make(dc);
    std::vector<std::string> dnames;
    d.visit("d", [&](const std::string& name, Tensor<float>&) { dnames.push_back(name); });
    Tape<float> t2;
    Binder<float> b2(t2, false);
    place(b2, "d", d);
    REQUIRE(b2.params().size() == dnames.size());
    for (size_t i = 0; i < dnames.size(); ++i) CHECK(b2.params()[i].name == dnames[i]);
  }
}

TEST_CASE("placed layers reproduce the raw ops") {
  Rng rng(11);
  auto conv = Conv2d<float>::make(2, 3, 3, 1, 1);
  init_conv(conv, rng);
  Tensor<float> x({2, 5, 5});
  rng.fill_normal(x);

  Tape<float> tape;
  Binder<float> binder(tape, false);
  auto pc = place(binder, "c", conv);
  auto direct = conv2d(tape.constant(x), tape.constant(conv.w), tape.constant(conv.b), 1, 1);
  auto viaplaced = pc(tape.constant(x));
  CHECK((viaplaced.val().data - direct.val().data).abs().maxCoeff() == 0.0f);
}

TEST_CASE("adam follows the hand-computed update") {
  Tensor<double> w = Tensor<double>::full({2}, 1.0);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.beta1 = 0.5;
  cfg.beta2 = 0.9;
  cfg.eps = 1e-8;
  Adam<double> opt(cfg);

  auto one_step = [&] {
    Tape<double> tape;
    Binder<double> binder(tape, true);
    auto v = binder.bind("w", w);
    auto loss = sum_all(scale(v, 0.5));
    tape.backward(loss);
    opt.step(binder.params(), tape);
  };

  // g = 0.5 each step; m_t and v_t then follow the textbook recurrences.
  double m = 0.0, v = 0.0, expect = 1.0;
  for (int t = 1; t <= 3; ++t) {
    one_step();
    const double g = 0.5;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mhat = m / (1 - std::pow(cfg.beta1, t));
    const double vhat = v / (1 - std::pow(cfg.beta2, t));
    expect -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    CHECK(w.data[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(w.data[1] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(opt.steps() == 3);
}

TEST_CASE("adam clips by global norm across parameters") {
  Tensor<double> a = Tensor<double>::full({1}, 0.0);
  Tensor<double> b = Tensor<double>::full({1}, 0.0);
  AdamConfig cfg;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  cfg.clip_norm = 1.0;
  Adam<double> opt(cfg);

  Tape<double> tape;
  Binder<double> binder(tape, true);
  auto va = binder.bind("a", a);
  auto vb = binder.bind("b", b);
  auto loss = sum_all(scale(va, 3.0)) + sum_all(scale(vb, 4.0));
  tape.backward(loss);
  opt.step(binder.params(), tape);

  // Raw grads (3, 4) have norm 5; clipping rescales them to (0.6, 0.8).
  CHECK(opt.slots()["a"].m.data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(opt.slots()["b"].m.data[0] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("adam skips parameters whose gradient was never touched") {
  Tensor<double> used = Tensor<double>::full({1}, 1.0);
  Tensor<double> idle = Tensor<double>::full({1}, 1.0);
  Adam<double> opt(AdamConfig{});

  Tape<double> tape;
  Binder<double> binder(tape, true);
  auto vu = binder.bind("used", used);
  binder.bind("idle", idle);
  tape.backward(sum_all(square(vu)));
  opt.step(binder.params(), tape);

  CHECK(used.data[0] != 1.0);
  CHECK(idle.data[0] == 1.0);
  CHECK(opt.slots().count("idle") == 0);
}

TEST_CASE("adam names the parameter with a non-finite gradient") {
  Tensor<float> w = Tensor<float>::full({1}, 1.0f);
  Adam<float> opt(AdamConfig{});
  Tape<float> tape;
  Binder<float> binder(tape, true);
  auto v = binder.bind("g.block0.conv1.w", w);
  auto loss = sum_all(scale(v, std::numeric_limits<float>::infinity()));
  tape.backward(loss);
  CHECK_THROWS_WITH_AS(opt.step(binder.params(), tape),
                       doctest::Contains("g.block0.conv1.w"), NumericError);
}

TEST_CASE("kaiming init matches the fan-in formula") {
  auto conv = Conv2d<float>::make(64, 64, 3, 1, 1);
  Rng rng(5);
  init_conv(conv, rng);
  const double fan_in = 64 * 3 * 3;
  const double want = std::sqrt(2.0 / ((1.0 + 0.04) * fan_in));
  const auto n = static_cast<double>(conv.w.numel());
  const double mean = conv.w.data.template cast<double>().mean();
  const double var = (conv.w.data.template cast<double>() - mean).square().sum() / n;
  CHECK(std::abs(mean) < 0.002);
  CHECK(std::sqrt(var) == doctest::Approx(want).epsilon(0.05));
  CHECK(conv.b.data.abs().maxCoeff() == 0.0f);

  SUBCASE("constant-output init zeroes weights and pins biases") {
    init_constant_output(conv, 1.0f);
    CHECK(conv.w.data.abs().maxCoeff() == 0.0f);
    CHECK(conv.b.data.minCoeff() == 1.0f);
    CHECK(conv.b.data.maxCoeff() == 1.0f);
  }
}
