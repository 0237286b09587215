#ifndef NSG_MODEL_DISCRIMINATOR_HPP
#define NSG_MODEL_DISCRIMINATOR_HPP

#include <string>

#include "nsg/nn/init.hpp"
#include "nsg/nn/module.hpp"

namespace nsg {

struct DiscriminatorConfig {
  int base_channels = 64;

  void validate() const {
    if (base_channels < 4 || base_channels % 4 != 0)
      throw ConfigError("discriminator base_channels must be a positive multiple of 4");
  }
};

/// Patch critic with an auxiliary age regressor. Three stride-2 and one
/// stride-1 convolution form the shared trunk; the realism head is a final
/// stride-1 convolution with no output nonlinearity (least-squares
/// objective), the age head is a linear layer over globally pooled trunk
/// features emitting one normalized age.
template <typename S>
struct Discriminator {
  DiscriminatorConfig cfg;
  Conv2d<S> c1, c2, c3, c4, patch;
  Linear<S> age_fc;

  static Discriminator make(const DiscriminatorConfig& cfg) {
    cfg.validate();
    Discriminator d;
    d.cfg = cfg;
    const int b = cfg.base_channels;
    d.c1 = Conv2d<S>::make(3, b, 4, 2, 1);
    d.c2 = Conv2d<S>::make(b, 2 * b, 4, 2, 1);
    d.c3 = Conv2d<S>::make(2 * b, 4 * b, 4, 2, 1);
    d.c4 = Conv2d<S>::make(4 * b, 8 * b, 4, 1, 1);
    d.patch = Conv2d<S>::make(8 * b, 1, 4, 1, 1);
    d.age_fc = Linear<S>::make(8 * b, 1);
    return d;
  }

  void init(Rng rng) {
    init_conv(c1, rng);
    init_conv(c2, rng);
    init_conv(c3, rng);
    init_conv(c4, rng);
    init_conv(patch, rng);
    init_linear(age_fc, rng);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    c1.visit(prefix + ".c1", f);
    c2.visit(prefix + ".c2", f);
    c3.visit(prefix + ".c3", f);
    c4.visit(prefix + ".c4", f);
    patch.visit(prefix + ".patch", f);
    age_fc.visit(prefix + ".age_fc", f);
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    visit("", [&](const std::string&, Tensor<S>& t) { n += t.numel(); });
    return n;
  }
};

template <typename S>
struct CriticOutput {
  Var<S> realism;  // [1, h', w'] patch scores
  Var<S> age;      // [1] normalized age estimate
};

template <typename S>
struct PlacedDiscriminator {
  PlacedConv<S> c1, c2, c3, c4, patch;
  PlacedLinear<S> age_fc;

  CriticOutput<S> operator()(Var<S> x) const {
    auto h = leaky_relu(c1(x));
    h = leaky_relu(instance_norm(c2(h)));
    h = leaky_relu(instance_norm(c3(h)));
    h = leaky_relu(instance_norm(c4(h)));
    return CriticOutput<S>{patch(h), age_fc(global_avg_pool(h))};
  }
};

template <typename S>
PlacedDiscriminator<S> place(Binder<S>& b, const std::string& prefix, Discriminator<S>& d) {
  return PlacedDiscriminator<S>{place(b, prefix + ".c1", d.c1),   place(b, prefix + ".c2", d.c2),
                                place(b, prefix + ".c3", d.c3),   place(b, prefix + ".c4", d.c4),
                                place(b, prefix + ".patch", d.patch),
                                place(b, prefix + ".age_fc", d.age_fc)};
}

}  // namespace nsg

#endif
