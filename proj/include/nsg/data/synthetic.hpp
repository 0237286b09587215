#ifndef NSG_DATA_SYNTHETIC_HPP
#define NSG_DATA_SYNTHETIC_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nsg/core/rng.hpp"
#include "nsg/core/tensor.hpp"
#include "nsg/data/condition.hpp"
#include "nsg/data/semantic.hpp"

namespace nsg {

/// Procedural face description. Geometry depends only on (seed, identity_id);
/// the age group controls nothing but the wrinkle-stripe count.
struct SyntheticFaceSpec {
  int identity_id = 0;
  int group = 0;
  int wrinkle_count = 0;  // equals group

  // fractions of the canvas size
  double cx = 0.5, cy = 0.48;  // face center
  double rx = 0.30, ry = 0.38; // face semi-axes
  double skin_tint = 1.0;
  double hair_tint = 1.0;
  double cloth_gray = 0.4;
};

/// Stripe rows at these fractions of ry from the face center; group g paints
/// the first g entries. Chosen to clear the eyebrow/eye/nose/lip bands at
/// every supported resolution.
inline constexpr std::array<double, 3> kStripeFracs = {-0.62, 0.10, 0.38};

inline SyntheticFaceSpec make_face_spec(int identity_id, int group, std::uint64_t seed) {
  if (group < 0 || group >= kNumGroups) throw ConfigError("make_face_spec: bad group");
  Rng rng = Rng(seed).derive(0x1D5EC, static_cast<std::uint64_t>(identity_id));
  SyntheticFaceSpec s;
  s.identity_id = identity_id;
  s.group = group;
  s.wrinkle_count = group;
  s.cx = 0.50 + rng.uniform(-0.03, 0.03);
  s.cy = 0.48 + rng.uniform(-0.02, 0.02);
  s.rx = 0.30 + rng.uniform(-0.03, 0.03);
  s.ry = 0.38 + rng.uniform(-0.03, 0.03);
  s.skin_tint = rng.uniform(0.92, 1.05);
  s.hair_tint = rng.uniform(0.7, 1.4);
  s.cloth_gray = rng.uniform(0.25, 0.6);
  return s;
}

struct SyntheticSample {
  Tensor<float> image;  // [3, H, W] in [-1, 1]
  SemanticLayout layout;
  AgeCondition condition;
  SyntheticFaceSpec spec;
};

namespace detail {

inline bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

}  // namespace detail

/// Renders the face image and its exact layout. Every painted region carries
/// its own class id; wrinkle stripes darken skin pixels without changing
/// their class.
inline SyntheticSample render_face(const SyntheticFaceSpec& s, int h) {
  if (h < 32 || (h & (h - 1)) != 0) throw ConfigError("render_face: H must be a power of two >= 32");
  const int w = h;
  const double cx = s.cx * w, cy = s.cy * h;
  const double rx = s.rx * w, ry = s.ry * h;

  const double skin[3] = {0.85 * s.skin_tint, 0.70 * s.skin_tint, 0.58 * s.skin_tint};
  const double hair[3] = {0.15 * s.hair_tint, 0.11 * s.hair_tint, 0.08 * s.hair_tint};
  const double colors[kNumClasses][3] = {
      {0.16, 0.18, 0.22},                                // background
      {skin[0], skin[1], skin[2]},                       // skin
      {hair[0] * 0.9, hair[1] * 0.9, hair[2] * 0.9},     // eyebrows
      {0.95, 0.95, 0.97},                                // eyes
      {skin[0] * 0.95, skin[1] * 0.95, skin[2] * 0.95},  // ears
      {0.0, 0.0, 0.0},                                   // glasses (never rendered)
      {skin[0] * 0.88, skin[1] * 0.88, skin[2] * 0.88},  // nose
      {0.70, 0.35, 0.33},                                // lips
      {0.30, 0.10, 0.10},                                // inner mouth
      {hair[0], hair[1], hair[2]},                       // hair
      {skin[0] * 0.97, skin[1] * 0.97, skin[2] * 0.97},  // neck
      {s.cloth_gray, s.cloth_gray * 0.9, s.cloth_gray * 1.1},  // cloth
  };

  std::vector<std::uint8_t> classes(static_cast<size_t>(h) * w, kBackground);
  auto classify = [&](double x, double y) -> int {
    using detail::in_ellipse;
    const double ex_l = cx - 0.45 * rx, ex_r = cx + 0.45 * rx, ey = cy - 0.28 * ry;
    if (in_ellipse(x, y, cx, cy + 0.55 * ry, 0.18 * rx, 0.030 * ry)) return kInnerMouth;
    if (in_ellipse(x, y, cx, cy + 0.55 * ry, 0.30 * rx, 0.090 * ry)) return kLips;
    if (in_ellipse(x, y, ex_l, ey, 0.16 * rx, 0.10 * ry)) return kEyes;
    if (in_ellipse(x, y, ex_r, ey, 0.16 * rx, 0.10 * ry)) return kEyes;
    const double by = cy - 0.45 * ry;
    if (std::abs(y - by) <= 0.035 * ry &&
        (std::abs(x - ex_l) <= 0.22 * rx || std::abs(x - ex_r) <= 0.22 * rx))
      return kEyebrows;
    if (in_ellipse(x, y, cx, cy + 0.10 * ry, 0.10 * rx, 0.14 * ry)) return kNose;
    if (in_ellipse(x, y, cx - 1.02 * rx, cy - 0.05 * ry, 0.13 * rx, 0.22 * ry)) return kEars;
    if (in_ellipse(x, y, cx + 1.02 * rx, cy - 0.05 * ry, 0.13 * rx, 0.22 * ry)) return kEars;
    if (in_ellipse(x, y, cx, cy, rx, ry)) return kSkin;
    if (y < cy && in_ellipse(x, y, cx, cy, 1.12 * rx, 1.08 * ry)) return kHair;
    if (std::abs(x - cx) <= 0.30 * rx && y >= cy + 0.92 * ry && y <= cy + 1.25 * ry) return kNeck;
    if (y > cy + 1.25 * ry) return kCloth;
    return kBackground;
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      classes[static_cast<size_t>(y) * w + x] =
          static_cast<std::uint8_t>(classify(x + 0.5, y + 0.5));

  SyntheticSample out;
  out.spec = s;
  out.layout = layout_from_classes(std::move(classes), h, w);
  out.condition = make_condition(s.group, h, w);
  out.image = Tensor<float>({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int c = out.layout.class_at(y, x);
      for (int ch = 0; ch < 3; ++ch)
        out.image.at(ch, y, x) = static_cast<float>(colors[c][ch] * 2.0 - 1.0);
    }

  // wrinkle stripes: darkened skin rows, class unchanged
  const int thickness = std::max(2, h / 32);
  for (int k = 0; k < s.wrinkle_count; ++k) {
    const double fy = cy + kStripeFracs[static_cast<size_t>(k)] * ry;
    const int y0 = static_cast<int>(std::lround(fy));
    for (int y = y0; y < y0 + thickness && y < h; ++y) {
      if (y < 0) continue;
      for (int x = 0; x < w; ++x) {
        if (out.layout.class_at(y, x) != kSkin) continue;
        if (!detail::in_ellipse(x + 0.5, y + 0.5, cx, cy, 0.88 * rx, 0.88 * ry)) continue;
        for (int ch = 0; ch < 3; ++ch) {
          const double base = colors[kSkin][ch] * 0.35;
          out.image.at(ch, y, x) = static_cast<float>(base * 2.0 - 1.0);
        }
      }
    }
  }
  return out;
}

/// Deterministic synthetic dataset: `groups_per_identity` assigns each
/// identity its rendered group list.
inline std::vector<SyntheticSample> generate_synthetic_dataset(
    int n_identities, const std::vector<int>& groups_per_identity, int h, std::uint64_t seed) {
  if (n_identities < 1) throw ConfigError("generate_synthetic_dataset: n_identities >= 1");
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<size_t>(n_identities) * groups_per_identity.size());
  for (int id = 0; id < n_identities; ++id)
    for (int g : groups_per_identity) out.push_back(render_face(make_face_spec(id, g, seed), h));
  return out;
}

}  // namespace nsg

#endif
