#ifndef NSG_DATA_NOISE_HPP
#define NSG_DATA_NOISE_HPP

#include <cstdint>
#include <set>

#include "nsg/core/rng.hpp"
#include "nsg/core/tensor.hpp"
#include "nsg/data/semantic.hpp"

namespace nsg {

/// Standard-Gaussian noise map shared across the 12 semantic channels.
struct NoiseMap {
  Tensor<float> data;  // [1, H, W]
  std::uint64_t seed = 0;
};

inline NoiseMap make_noise_map(std::uint64_t seed, int h, int w) {
  NoiseMap n;
  n.seed = seed;
  n.data = Tensor<float>({1, h, w});
  Rng rng(seed);
  rng.fill_normal(n.data);
  return n;
}

/// Default dropped classes: eyes, lips, inner mouth.
inline const std::set<int>& default_drop_classes() {
  static const std::set<int> s = {kEyes, kLips, kInnerMouth};
  return s;
}

/// Multiplies each one-hot channel by the shared noise map; dropped classes
/// come out all-zero.
inline Tensor<float> apply_noise(const SemanticLayout& layout, const NoiseMap& noise,
                                 const std::set<int>& drop_classes) {
  if (noise.data.dim(1) != layout.height || noise.data.dim(2) != layout.width)
    throw ShapeError("apply_noise: noise " + shape_str(noise.data.shape) + " vs layout " +
                     std::to_string(layout.height) + "x" + std::to_string(layout.width));
  Tensor<float> out({kNumClasses, layout.height, layout.width});
  const int64_t hw = static_cast<int64_t>(layout.height) * layout.width;
  for (int c = 0; c < kNumClasses; ++c) {
    if (drop_classes.count(c)) continue;
    out.data.segment(c * hw, hw) = layout.onehot.data.segment(c * hw, hw) * noise.data.data;
  }
  return out;
}

}  // namespace nsg

#endif
