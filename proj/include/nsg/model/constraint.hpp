#ifndef NSG_MODEL_CONSTRAINT_HPP
#define NSG_MODEL_CONSTRAINT_HPP

#include <algorithm>
#include <optional>
#include <string>

#include "nsg/nn/init.hpp"
#include "nsg/nn/module.hpp"

namespace nsg {

/// How ConstraintNet turns the output face into the training constraint.
/// kSimpleMapping regresses the latent map against plain features, without
/// the attention split. The two disentangle variants split features into an
/// age-related and an age-unrelated group through a sigmoid mask; they
/// differ in how the unrelated group is supervised (identity embedding
/// versus the negated age term).
enum class ConstraintType { kSimpleMapping, kDisentangleId, kDisentangleDelta };

inline const char* constraint_type_name(ConstraintType t) {
  switch (t) {
    case ConstraintType::kSimpleMapping: return "simple_mapping";
    case ConstraintType::kDisentangleId: return "disentangle_id";
    case ConstraintType::kDisentangleDelta: return "disentangle_delta";
  }
  return "?";
}

inline ConstraintType constraint_type_from(const std::string& s) {
  if (s == "simple_mapping") return ConstraintType::kSimpleMapping;
  if (s == "disentangle_id") return ConstraintType::kDisentangleId;
  if (s == "disentangle_delta") return ConstraintType::kDisentangleDelta;
  throw ConfigError("unknown constraint type \"" + s + "\"");
}

/// Side network over the (downsampled) output face: a shared trunk feeding a
/// feature head F, and for the disentangling variants a mask head M plus a
/// small age regressor E applied to masked features.
template <typename S>
struct ConstraintNet {
  ConstraintType type = ConstraintType::kDisentangleDelta;
  Conv2d<S> t1, t2, f_head;
  std::optional<Conv2d<S>> m_head;
  std::optional<Conv2d<S>> e_conv;
  std::optional<Linear<S>> e_fc;
  std::optional<Linear<S>> id_fc;

  bool has_mask() const { return type != ConstraintType::kSimpleMapping; }

  static ConstraintNet make(int feature_channels, ConstraintType type, int identity_dim) {
    const int mid = std::max(4, feature_channels / 2);
    ConstraintNet c;
    c.type = type;
    c.t1 = Conv2d<S>::make(3, mid, 3, 1, 1);
    c.t2 = Conv2d<S>::make(mid, feature_channels, 3, 1, 1);
    c.f_head = Conv2d<S>::make(feature_channels, feature_channels, 3, 1, 1);
    if (c.has_mask()) {
      c.m_head = Conv2d<S>::make(feature_channels, 1, 3, 1, 1);
      c.e_conv = Conv2d<S>::make(feature_channels, feature_channels, 3, 2, 1);
      c.e_fc = Linear<S>::make(feature_channels, 1);
    }
    if (type == ConstraintType::kDisentangleId) c.id_fc = Linear<S>::make(feature_channels, identity_dim);
    return c;
  }

  void init(Rng rng) {
    init_conv(t1, rng);
    init_conv(t2, rng);
    init_conv(f_head, rng);
    if (m_head) init_conv(*m_head, rng);
    if (e_conv) init_conv(*e_conv, rng);
    if (e_fc) init_linear(*e_fc, rng);
    if (id_fc) init_linear(*id_fc, rng);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    t1.visit(prefix + ".t1", f);
    t2.visit(prefix + ".t2", f);
    f_head.visit(prefix + ".f_head", f);
    if (m_head) m_head->visit(prefix + ".m_head", f);
    if (e_conv) e_conv->visit(prefix + ".e_conv", f);
    if (e_fc) e_fc->visit(prefix + ".e_fc", f);
    if (id_fc) id_fc->visit(prefix + ".id_fc", f);
  }
};

template <typename S>
struct DisentangledVars {
  Var<S> F;
  Var<S> M;     // invalid when the net runs in simple-mapping mode
  Var<S> F_re;  // equals F in simple-mapping mode
  Var<S> F_un;  // invalid in simple-mapping mode
  bool has_mask = false;
};

template <typename S>
struct PlacedConstraint {
  ConstraintType type = ConstraintType::kDisentangleDelta;
  PlacedConv<S> t1, t2, f_head;
  std::optional<PlacedConv<S>> m_head;
  std::optional<PlacedConv<S>> e_conv;
  std::optional<PlacedLinear<S>> e_fc;
  std::optional<PlacedLinear<S>> id_fc;

  /// face is expected at full resolution; features come out at 1/4.
  DisentangledVars<S> operator()(Var<S> face) const {
    auto x = avg_pool(face, 4);
    auto h = leaky_relu(t1(x));
    h = leaky_relu(t2(h));
    DisentangledVars<S> out;
    out.F = f_head(h);
    if (!m_head) {
      out.F_re = out.F;
      return out;
    }
    out.has_mask = true;
    out.M = sigmoid((*m_head)(h));
    out.F_re = mul_mask(out.F, out.M);
    out.F_un = mul_mask(out.F, one_minus(out.M));
    return out;
  }

  /// Age regressor E over a masked feature group.
  Var<S> age_estimate(Var<S> features) const {
    if (!e_conv) throw ConfigError("age estimate requested but the constraint net has no age head");
    auto h = leaky_relu((*e_conv)(features));
    return (*e_fc)(global_avg_pool(h));
  }

  /// Identity embedding of the age-unrelated feature group.
  Var<S> identity_embed(Var<S> features) const {
    if (!id_fc)
      throw ConfigError("identity embedding requested but the constraint net has no identity head");
    return (*id_fc)(global_avg_pool(features));
  }
};

template <typename S>
PlacedConstraint<S> place(Binder<S>& b, const std::string& prefix, ConstraintNet<S>& m) {
  PlacedConstraint<S> p;
  p.type = m.type;
  p.t1 = place(b, prefix + ".t1", m.t1);
  p.t2 = place(b, prefix + ".t2", m.t2);
  p.f_head = place(b, prefix + ".f_head", m.f_head);
  if (m.m_head) p.m_head = place(b, prefix + ".m_head", *m.m_head);
  if (m.e_conv) p.e_conv = place(b, prefix + ".e_conv", *m.e_conv);
  if (m.e_fc) p.e_fc = place(b, prefix + ".e_fc", *m.e_fc);
  if (m.id_fc) p.id_fc = place(b, prefix + ".id_fc", *m.id_fc);
  return p;
}

}  // namespace nsg

#endif
