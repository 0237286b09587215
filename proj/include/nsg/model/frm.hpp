#ifndef NSG_MODEL_FRM_HPP
#define NSG_MODEL_FRM_HPP

#include <algorithm>
#include <string>

#include "nsg/nn/init.hpp"
#include "nsg/nn/module.hpp"

namespace nsg {

/// Channel self-attention with an identity shortcut. Attention between
/// channels i and j is the softmax (over i) of their inner product; each
/// output channel is the attention-weighted sum of all channels, added back
/// onto the input. Parameter-free.
template <typename S>
Var<S> channel_mixer(Var<S> f) {
  if (f.val().rank() != 3) throw ShapeError("channel_mixer: rank-3 tensor required");
  const int c = f.val().dim(0);
  const int h = f.val().dim(1);
  const int w = f.val().dim(2);
  auto flat = reshape(f, {c, h * w});
  auto att = softmax_cols(matmul(flat, flat, false, true));
  auto mixed = matmul(att, flat, true, false);
  return reshape(mixed, {c, h, w}) + f;
}

/// Attention grid of channel_mixer, exposed for verification against the
/// brute-force definition.
template <typename S>
Var<S> channel_attention(Var<S> f) {
  const int c = f.val().dim(0);
  const int n = f.val().dim(1) * f.val().dim(2);
  auto flat = reshape(f, {c, n});
  return softmax_cols(matmul(flat, flat, false, true));
}

/// Predicts a spatial blend mask from the generated/source pair and mixes
/// the two images with it.
template <typename S>
struct FusionNet {
  Conv2d<S> f1, f2;

  static FusionNet make(int hidden) {
    FusionNet n;
    n.f1 = Conv2d<S>::make(6, hidden, 3, 1, 1);
    n.f2 = Conv2d<S>::make(hidden, 1, 3, 1, 1);
    return n;
  }

  void init(Rng rng) {
    init_conv(f1, rng);
    init_conv(f2, rng);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f1.visit(prefix + ".f1", f);
    f2.visit(prefix + ".f2", f);
  }
};

template <typename S>
struct PlacedFusion {
  PlacedConv<S> f1, f2;

  Var<S> mask(Var<S> generated, Var<S> source) const {
    auto h = leaky_relu(f1(concat_ch<S>({generated, source})));
    return sigmoid(f2(h));
  }

  Var<S> operator()(Var<S> generated, Var<S> source) const {
    auto a = mask(generated, source);
    auto blended = mul_mask(generated, a) + mul_mask(source, one_minus(a));
    return clamp(blended, S(-1), S(1));
  }
};

template <typename S>
PlacedFusion<S> place(Binder<S>& b, const std::string& prefix, FusionNet<S>& m) {
  return PlacedFusion<S>{place(b, prefix + ".f1", m.f1), place(b, prefix + ".f2", m.f2)};
}

}  // namespace nsg

#endif
