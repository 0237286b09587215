#ifndef NSG_EVAL_IDENTITY_HPP
#define NSG_EVAL_IDENTITY_HPP

#include <cmath>
#include <cstdint>
#include <set>

#include "nsg/autodiff/ops.hpp"
#include "nsg/core/rng.hpp"
#include "nsg/data/semantic.hpp"

namespace nsg {

inline constexpr int kIdentityEmbedDim = 64;
inline constexpr int kIdentityPoolSize = 8;
inline constexpr std::uint64_t kIdentityEmbedSeed = 0x1D5EED;

/// Identity feature extractor: pools the face to a fixed 8x8 patch grid and
/// applies a fixed seeded random projection. A stand-in for a pretrained
/// face-recognition embedder; the projection is frozen and shared by every
/// model, so identity distances are comparable across runs.
template <typename S>
struct IdentityEmbedder {
  Tensor<S> proj;  // [kIdentityEmbedDim, 3 * 8 * 8]

  static IdentityEmbedder make(std::uint64_t seed = kIdentityEmbedSeed) {
    const int in_dim = 3 * kIdentityPoolSize * kIdentityPoolSize;
    IdentityEmbedder e;
    e.proj = Tensor<S>({kIdentityEmbedDim, in_dim});
    Rng rng(seed);
    rng.fill_normal(e.proj, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    return e;
  }

  Var<S> operator()(Var<S> image) const {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != 3) throw ShapeError("identity embed: input must be [3, H, W]");
    if (s[1] % kIdentityPoolSize != 0 || s[2] % kIdentityPoolSize != 0)
      throw ShapeError("identity embed: image size must be a multiple of 8");
    Tape<S>& tape = *image.tape;
    const int in_dim = 3 * kIdentityPoolSize * kIdentityPoolSize;
    auto pooled = avg_pool(image, s[1] / kIdentityPoolSize);
    auto flat = reshape(pooled, {in_dim, 1});
    auto w = tape.constant(proj);
    return reshape(matmul(w, flat), {kIdentityEmbedDim});
  }

  Tensor<S> embed(const Tensor<S>& image) const {
    Tape<S> tape;
    auto v = (*this)(tape.constant(image));
    return v.val();
  }
};

/// Geometry classes carrying identity cues in the synthetic faces: all the
/// stable facial features, skin and background excluded so the score ignores
/// the age stripes.
inline const std::set<int>& identity_geometry_classes() {
  static const std::set<int> s = {kEyebrows, kEyes, kEars, kGlasses, kNose,
                                  kLips,     kInnerMouth, kHair};
  return s;
}

/// Normalized cross-correlation of luminance over the identity-geometry
/// region, mapped to a 0-100 verification score.
inline double identity_ncc_score(const Tensor<float>& a, const Tensor<float>& b,
                                 const SemanticLayout& layout) {
  if (a.shape != b.shape) throw ShapeError("identity score: image shapes differ");
  if (a.dim(1) != layout.height || a.dim(2) != layout.width)
    throw ShapeError("identity score: layout does not match the images");
  const int h = layout.height, w = layout.width;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const auto& geom = identity_geometry_classes();
  std::vector<double> va, vb;
  va.reserve(static_cast<size_t>(hw) / 4);
  vb.reserve(static_cast<size_t>(hw) / 4);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!geom.count(layout.class_at(y, x))) continue;
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      va.push_back((a.data[i] + a.data[hw + i] + a.data[2 * hw + i]) / 3.0);
      vb.push_back((b.data[i] + b.data[hw + i] + b.data[2 * hw + i]) / 3.0);
    }
  }
  if (va.empty()) return 0.0;
  const auto n = static_cast<double>(va.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < va.size(); ++i) {
    ma += va[i];
    mb += vb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, sa = 0, sb = 0, max_gap = 0;
  for (size_t i = 0; i < va.size(); ++i) {
    const double da = va[i] - ma, db = vb[i] - mb;
    cov += da * db;
    sa += da * da;
    sb += db * db;
    max_gap = std::max(max_gap, std::abs(va[i] - vb[i]));
  }
  if (sa == 0.0 || sb == 0.0) return max_gap < 1e-9 ? 100.0 : 0.0;
  const double ncc = cov / std::sqrt(sa * sb);
  return 100.0 * std::max(0.0, ncc);
}

}  // namespace nsg

#endif
