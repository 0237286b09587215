#ifndef NSG_DATA_CONDITION_HPP
#define NSG_DATA_CONDITION_HPP

#include <array>
#include <string>

#include "nsg/core/tensor.hpp"

namespace nsg {

inline constexpr int kNumGroups = 4;

inline constexpr std::array<const char*, kNumGroups> kGroupLabels = {"30-", "31-40", "41-50",
                                                                     "51+"};

/// Midpoints of the four age bins (16-30, 31-40, 41-50, 51-77) in years.
inline constexpr std::array<double, kNumGroups> kGroupMidAges = {23.0, 35.5, 45.5, 64.0};

/// Oldest age in the annotation range; ages are regressed on age/77 in [0,1].
inline constexpr double kMaxAge = 77.0;

inline double normalized_age_of_group(int group) {
  if (group < 0 || group >= kNumGroups)
    throw ConfigError("age group " + std::to_string(group) + " out of range 0..3");
  return kGroupMidAges[static_cast<size_t>(group)] / kMaxAge;
}

/// Age-group condition: index, spatially constant one-hot maps (the 0-1-0-0
/// pattern), and the normalized scalar age.
struct AgeCondition {
  int group = 0;
  Tensor<float> onehot_maps;  // [4, H, W]
  float normalized_age = 0.0f;
};

inline AgeCondition make_condition(int group, int h, int w) {
  if (group < 0 || group >= kNumGroups)
    throw ConfigError("age group " + std::to_string(group) + " out of range 0..3");
  AgeCondition c;
  c.group = group;
  c.onehot_maps = Tensor<float>({kNumGroups, h, w});
  const int64_t hw = static_cast<int64_t>(h) * w;
  c.onehot_maps.data.segment(group * hw, hw).setConstant(1.0f);
  c.normalized_age = static_cast<float>(normalized_age_of_group(group));
  return c;
}

}  // namespace nsg

#endif
