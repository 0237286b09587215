#ifndef NSG_MODEL_PROJECTION_HPP
#define NSG_MODEL_PROJECTION_HPP

#include <algorithm>
#include <string>

#include "nsg/nn/init.hpp"
#include "nsg/nn/module.hpp"

namespace nsg {

/// Four convolution stages mapping the conditional noisy-semantic stack
/// [in_channels, H, W] to the soft latent map [out_channels, H/4, W/4].
/// The final stage is linear so the map is unbounded.
template <typename S>
struct ProjectionNet {
  Conv2d<S> c1, c2, c3, c4;

  static ProjectionNet make(int in_channels, int out_channels) {
    const int mid = std::max(4, out_channels / 2);
    ProjectionNet p;
    p.c1 = Conv2d<S>::make(in_channels, mid, 3, 2, 1);
    p.c2 = Conv2d<S>::make(mid, mid, 3, 2, 1);
    p.c3 = Conv2d<S>::make(mid, out_channels, 3, 1, 1);
    p.c4 = Conv2d<S>::make(out_channels, out_channels, 3, 1, 1);
    return p;
  }

  void init(Rng rng) {
    init_conv(c1, rng);
    init_conv(c2, rng);
    init_conv(c3, rng);
    init_conv(c4, rng);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    c1.visit(prefix + ".c1", f);
    c2.visit(prefix + ".c2", f);
    c3.visit(prefix + ".c3", f);
    c4.visit(prefix + ".c4", f);
  }
};

template <typename S>
struct PlacedProjection {
  PlacedConv<S> c1, c2, c3, c4;

  Var<S> operator()(Var<S> x) const {
    auto h = leaky_relu(c1(x));
    h = leaky_relu(c2(h));
    h = leaky_relu(c3(h));
    return c4(h);
  }
};

template <typename S>
PlacedProjection<S> place(Binder<S>& b, const std::string& prefix, ProjectionNet<S>& m) {
  return PlacedProjection<S>{place(b, prefix + ".c1", m.c1), place(b, prefix + ".c2", m.c2),
                             place(b, prefix + ".c3", m.c3), place(b, prefix + ".c4", m.c4)};
}

}  // namespace nsg

#endif
