#ifndef NSG_NN_INIT_HPP
#define NSG_NN_INIT_HPP

#include <cmath>

#include "nsg/core/rng.hpp"
#include "nsg/nn/module.hpp"

namespace nsg {

/// Kaiming-normal fan-in initialization with the leaky-rectifier gain.
template <typename S>
void init_conv(Conv2d<S>& c, Rng& rng, double slope = 0.2) {
  const int fan_in = c.w.dim(1) * c.w.dim(2) * c.w.dim(3);
  const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
  rng.fill_normal(c.w, stddev);
  c.b.data.setZero();
}

template <typename S>
void init_linear(Linear<S>& l, Rng& rng, double slope = 0.2) {
  const int fan_in = l.w.dim(1);
  const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
  rng.fill_normal(l.w, stddev);
  l.b.data.setZero();
}

/// Zeroes the weights and sets every bias to one constant, so the layer's
/// output is that constant everywhere regardless of input.
template <typename S>
void init_constant_output(Conv2d<S>& c, S value) {
  c.w.data.setZero();
  c.b.data.setConstant(value);
}

}  // namespace nsg

#endif
