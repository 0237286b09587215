#ifndef NSG_EVAL_ORACLE_HPP
#define NSG_EVAL_ORACLE_HPP

#include <algorithm>
#include <vector>

#include "nsg/core/tensor.hpp"
#include "nsg/data/semantic.hpp"

namespace nsg {

/// Counts dark horizontal stripe runs inside the skin region and returns
/// min(count, 3); this is the desk-scale age estimate on synthetic-geometry
/// faces (stripe count encodes the age group).
inline int synthetic_age_oracle(const Tensor<float>& image, const SemanticLayout& layout) {
  if (image.rank() != 3 || image.dim(1) != layout.height || image.dim(2) != layout.width)
    throw ShapeError("synthetic_age_oracle: image/layout size mismatch");
  const int h = layout.height, w = layout.width;

  auto lum = [&](int y, int x) {
    // [-1,1] rgb -> [0,1] luminance
    const float v = (image.at(0, y, x) + image.at(1, y, x) + image.at(2, y, x)) / 3.0f;
    return (v + 1.0f) * 0.5f;
  };

  std::vector<float> skin_lums;
  skin_lums.reserve(static_cast<size_t>(h) * w / 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (layout.class_at(y, x) == kSkin) skin_lums.push_back(lum(y, x));
  if (skin_lums.empty()) return 0;

  auto mid = skin_lums.begin() + skin_lums.size() / 2;
  std::nth_element(skin_lums.begin(), mid, skin_lums.end());
  const float dark_cut = *mid - 0.25f;

  int runs = 0;
  bool in_run = false;
  for (int y = 0; y < h; ++y) {
    int skin_px = 0, dark_px = 0;
    for (int x = 0; x < w; ++x) {
      if (layout.class_at(y, x) != kSkin) continue;
      ++skin_px;
      if (lum(y, x) < dark_cut) ++dark_px;
    }
    const bool dark_row = skin_px >= 4 && 2 * dark_px >= skin_px;
    if (dark_row && !in_run) ++runs;
    in_run = dark_row;
  }
  return std::min(runs, 3);
}

}  // namespace nsg

#endif
