#ifndef NSG_DATA_SEMANTIC_HPP
#define NSG_DATA_SEMANTIC_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nsg/core/tensor.hpp"

namespace nsg {

inline constexpr int kNumClasses = 12;

// Fixed class order shared by layouts, the renderer, and the injection path.
enum SemanticClass : int {
  kBackground = 0,
  kSkin = 1,
  kEyebrows = 2,
  kEyes = 3,
  kEars = 4,
  kGlasses = 5,
  kNose = 6,
  kLips = 7,
  kInnerMouth = 8,
  kHair = 9,
  kNeck = 10,
  kCloth = 11,
};

/// Per-pixel facial-region class map plus its one-hot expansion.
struct SemanticLayout {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> classes;  // [H*W], values 0..11
  Tensor<float> onehot;               // [12, H, W]

  std::uint8_t class_at(int y, int x) const { return classes[static_cast<size_t>(y) * width + x]; }
};

/// Builds a layout from a class-id grid, validating the value range.
inline SemanticLayout layout_from_classes(std::vector<std::uint8_t> classes, int h, int w) {
  if (static_cast<size_t>(h) * w != classes.size())
    throw ShapeError("layout_from_classes: class grid size mismatch");
  SemanticLayout out;
  out.height = h;
  out.width = w;
  out.classes = std::move(classes);
  out.onehot = Tensor<float>({kNumClasses, h, w});
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < hw; ++i) {
    const int c = out.classes[i];
    if (c >= kNumClasses) throw DataError("class id " + std::to_string(c) + " out of range");
    out.onehot.data[c * hw + i] = 1.0f;
  }
  return out;
}

/// Remaps a raw parsing label grid into the 12-class layout. Every raw value
/// must appear in the mapping and map into {0..11}.
inline SemanticLayout merge_parsing(const std::vector<int>& raw, int h, int w,
                                    const std::map<int, int>& mapping) {
  if (static_cast<size_t>(h) * w != raw.size())
    throw ShapeError("merge_parsing: label grid size mismatch");
  std::vector<std::uint8_t> classes(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    auto it = mapping.find(raw[i]);
    if (it == mapping.end())
      throw DataError("merge_parsing: unknown raw label " + std::to_string(raw[i]));
    if (it->second < 0 || it->second >= kNumClasses)
      throw DataError("merge_parsing: mapping target " + std::to_string(it->second) +
                      " outside 0..11");
    classes[i] = static_cast<std::uint8_t>(it->second);
  }
  return layout_from_classes(std::move(classes), h, w);
}

/// Identity mapping for label files already in the 12-class convention.
inline std::map<int, int> identity_class_mapping() {
  std::map<int, int> m;
  for (int i = 0; i < kNumClasses; ++i) m[i] = i;
  return m;
}

}  // namespace nsg

#endif
