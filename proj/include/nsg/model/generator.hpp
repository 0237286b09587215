#ifndef NSG_MODEL_GENERATOR_HPP
#define NSG_MODEL_GENERATOR_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nsg/data/condition.hpp"
#include "nsg/data/noise.hpp"
#include "nsg/data/semantic.hpp"
#include "nsg/model/constraint.hpp"
#include "nsg/model/frm.hpp"
#include "nsg/model/projection.hpp"
#include "nsg/nn/init.hpp"
#include "nsg/nn/module.hpp"

namespace nsg {

struct GeneratorConfig {
  int base_channels = 64;
  int n_resblocks = 6;
  int injection_channels = 128;
  std::set<int> drop_classes = default_drop_classes();
  bool decoder_noise_enabled = true;
  bool projection_noise_enabled = true;
  bool frm_enabled = true;
  bool constraint_enabled = true;
  bool injection_enabled = true;
  bool condition_in_projection = true;
  ConstraintType constraint_type = ConstraintType::kDisentangleDelta;
  int identity_dim = 64;

  /// The target-age maps always reach the generator somewhere: through the
  /// projection input when latent-map injection carries them, otherwise
  /// concatenated onto the encoder input.
  bool condition_in_encoder() const { return !injection_enabled || !condition_in_projection; }

  void validate() const {
    if (n_resblocks < 1) throw ConfigError("generator needs at least one resblock");
    if (base_channels < 4 || base_channels % 4 != 0)
      throw ConfigError("generator base_channels must be a positive multiple of 4");
    if (injection_channels < 2 || injection_channels % 2 != 0)
      throw ConfigError("generator injection_channels must be a positive multiple of 2");
    for (int c : drop_classes)
      if (c < 0 || c >= kNumClasses)
        throw ConfigError("drop class " + std::to_string(c) + " outside 0.." +
                          std::to_string(kNumClasses - 1));
  }
};

/// One latent-map injection site: scale and shift branches of two cascaded
/// convolutions each, modulating a normalized activation as
/// r * scale(m) + shift(m).
template <typename S>
struct InjectionSite {
  Conv2d<S> scale1, scale2, shift1, shift2;

  static InjectionSite make(int map_channels, int feature_channels) {
    InjectionSite s;
    s.scale1 = Conv2d<S>::make(map_channels, map_channels, 3, 1, 1);
    s.scale2 = Conv2d<S>::make(map_channels, feature_channels, 3, 1, 1);
    s.shift1 = Conv2d<S>::make(map_channels, map_channels, 3, 1, 1);
    s.shift2 = Conv2d<S>::make(map_channels, feature_channels, 3, 1, 1);
    return s;
  }

  /// Final branch convolutions start at scale 1 / shift 0, so a fresh site
  /// modulates nothing.
  void init(Rng rng) {
    init_conv(scale1, rng);
    init_conv(shift1, rng);
    init_constant_output(scale2, S(1));
    init_constant_output(shift2, S(0));
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    scale1.visit(prefix + ".scale1", f);
    scale2.visit(prefix + ".scale2", f);
    shift1.visit(prefix + ".shift1", f);
    shift2.visit(prefix + ".shift2", f);
  }
};

template <typename S>
struct PlacedInjection {
  PlacedConv<S> scale1, scale2, shift1, shift2;

  Var<S> operator()(Var<S> r, Var<S> m) const {
    auto sc = scale2(leaky_relu(scale1(m)));
    auto sh = shift2(leaky_relu(shift1(m)));
    return r * sc + sh;
  }
};

template <typename S>
PlacedInjection<S> place(Binder<S>& b, const std::string& prefix, InjectionSite<S>& m) {
  return PlacedInjection<S>{place(b, prefix + ".scale1", m.scale1),
                            place(b, prefix + ".scale2", m.scale2),
                            place(b, prefix + ".shift1", m.shift1),
                            place(b, prefix + ".shift2", m.shift2)};
}

/// Residual block with two normalize-modulate-activate-convolve units. The
/// injections are optional so the plain encoder-decoder baseline shares the
/// implementation.
template <typename S>
struct SemanticResblock {
  Conv2d<S> conv1, conv2;
  std::optional<InjectionSite<S>> inj1, inj2;

  static SemanticResblock make(int channels, bool with_injection, int map_channels) {
    SemanticResblock r;
    r.conv1 = Conv2d<S>::make(channels, channels, 3, 1, 1);
    r.conv2 = Conv2d<S>::make(channels, channels, 3, 1, 1);
    if (with_injection) {
      r.inj1 = InjectionSite<S>::make(map_channels, channels);
      r.inj2 = InjectionSite<S>::make(map_channels, channels);
    }
    return r;
  }

  void init(Rng rng) {
    init_conv(conv1, rng);
    init_conv(conv2, rng);
    if (inj1) inj1->init(rng.derive(1));
    if (inj2) inj2->init(rng.derive(2));
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    conv1.visit(prefix + ".conv1", f);
    conv2.visit(prefix + ".conv2", f);
    if (inj1) inj1->visit(prefix + ".inj1", f);
    if (inj2) inj2->visit(prefix + ".inj2", f);
  }
};

template <typename S>
struct PlacedResblock {
  PlacedConv<S> conv1, conv2;
  std::optional<PlacedInjection<S>> inj1, inj2;

  Var<S> operator()(Var<S> r, const Var<S>* m) const {
    auto h = instance_norm(r);
    if (inj1) h = (*inj1)(h, *m);
    h = conv1(leaky_relu(h));
    h = instance_norm(h);
    if (inj2) h = (*inj2)(h, *m);
    h = conv2(leaky_relu(h));
    return r + h;
  }
};

template <typename S>
PlacedResblock<S> place(Binder<S>& b, const std::string& prefix, SemanticResblock<S>& m) {
  PlacedResblock<S> p;
  p.conv1 = place(b, prefix + ".conv1", m.conv1);
  p.conv2 = place(b, prefix + ".conv2", m.conv2);
  if (m.inj1) p.inj1 = place(b, prefix + ".inj1", *m.inj1);
  if (m.inj2) p.inj2 = place(b, prefix + ".inj2", *m.inj2);
  return p;
}

/// Full generator: encoder, optional projection/injection machinery,
/// noise-modulated decoder, optional feature refinement and constraint side
/// network. One instance plays either the progression or regression role;
/// the two roles share structure, never parameters.
template <typename S>
struct Generator {
  GeneratorConfig cfg;
  Conv2d<S> enc1, enc2, enc3;
  std::optional<ProjectionNet<S>> projection;
  std::vector<SemanticResblock<S>> blocks;
  Conv2d<S> dec1, dec2, out_conv;
  std::optional<ChannelScale<S>> noise_scale1, noise_scale2;
  std::optional<FusionNet<S>> fusion;
  std::optional<ConstraintNet<S>> constraint;

  static Generator make(const GeneratorConfig& cfg) {
    cfg.validate();
    Generator g;
    g.cfg = cfg;
    const int b = cfg.base_channels;
    const int enc_in = 3 + (cfg.condition_in_encoder() ? kNumGroups : 0);
    g.enc1 = Conv2d<S>::make(enc_in, b, 7, 1, 3);
    g.enc2 = Conv2d<S>::make(b, 2 * b, 3, 2, 1);
    g.enc3 = Conv2d<S>::make(2 * b, 4 * b, 3, 2, 1);
    if (cfg.injection_enabled) {
      const int proj_in = kNumClasses + (cfg.condition_in_projection ? kNumGroups : 0);
      g.projection = ProjectionNet<S>::make(proj_in, cfg.injection_channels);
    }
    for (int i = 0; i < cfg.n_resblocks; ++i)
      g.blocks.push_back(
          SemanticResblock<S>::make(4 * b, cfg.injection_enabled, cfg.injection_channels));
    g.dec1 = Conv2d<S>::make(4 * b, 2 * b, 3, 1, 1);
    g.dec2 = Conv2d<S>::make(2 * b, b, 3, 1, 1);
    g.out_conv = Conv2d<S>::make(b, 3, 7, 1, 3);
    if (cfg.decoder_noise_enabled) {
      g.noise_scale1 = ChannelScale<S>::make(4 * b);
      g.noise_scale2 = ChannelScale<S>::make(2 * b);
    }
    if (cfg.frm_enabled) g.fusion = FusionNet<S>::make(std::max(4, b / 2));
    if (cfg.constraint_enabled)
      g.constraint =
          ConstraintNet<S>::make(cfg.injection_channels, cfg.constraint_type, cfg.identity_dim);
    return g;
  }

  void init(Rng rng) {
    init_conv(enc1, rng);
    init_conv(enc2, rng);
    init_conv(enc3, rng);
    if (projection) projection->init(rng.derive(101));
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i].init(rng.derive(200 + i));
    init_conv(dec1, rng);
    init_conv(dec2, rng);
    init_conv(out_conv, rng);
    if (noise_scale1) noise_scale1->s.data.setZero();
    if (noise_scale2) noise_scale2->s.data.setZero();
    if (fusion) fusion->init(rng.derive(301));
    if (constraint) constraint->init(rng.derive(401));
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    enc1.visit(prefix + ".enc1", f);
    enc2.visit(prefix + ".enc2", f);
    enc3.visit(prefix + ".enc3", f);
    if (projection) projection->visit(prefix + ".proj", f);
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit(prefix + ".block" + std::to_string(i), f);
    dec1.visit(prefix + ".dec1", f);
    dec2.visit(prefix + ".dec2", f);
    out_conv.visit(prefix + ".out_conv", f);
    if (noise_scale1) noise_scale1->visit(prefix + ".noise_scale1", f);
    if (noise_scale2) noise_scale2->visit(prefix + ".noise_scale2", f);
    if (fusion) fusion->visit(prefix + ".fusion", f);
    if (constraint) constraint->visit(prefix + ".constraint", f);
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    visit("", [&](const std::string&, Tensor<S>& t) { n += t.numel(); });
    return n;
  }
};

template <typename S>
struct GenerateResult {
  Var<S> face;      // final output, in [-1, 1]
  Var<S> raw_face;  // decoder output before feature refinement
  Var<S> m;         // soft latent map; invalid when injection is disabled
};

template <typename S>
struct PlacedGenerator {
  const GeneratorConfig* cfg = nullptr;
  PlacedConv<S> enc1, enc2, enc3;
  std::optional<PlacedProjection<S>> projection;
  std::vector<PlacedResblock<S>> blocks;
  PlacedConv<S> dec1, dec2, out_conv;
  std::optional<PlacedChannelScale<S>> noise_scale1, noise_scale2;
  std::optional<PlacedFusion<S>> fusion;
  std::optional<PlacedConstraint<S>> constraint;

  /// Projects the conditional noisy semantics of (layout, target, noise_seed)
  /// into the soft latent map.
  Var<S> project(Tape<S>& tape, const SemanticLayout& layout, const AgeCondition& target,
                 std::uint64_t noise_seed) const {
    if (!projection) throw ConfigError("projection requested but injection is disabled");
    Rng seeds(noise_seed);
    const std::uint64_t proj_seed = seeds.next_u64();
    Tensor<float> sem = cfg->projection_noise_enabled
                            ? apply_noise(layout, make_noise_map(proj_seed, layout.height, layout.width),
                                          cfg->drop_classes)
                            : layout.onehot;
    Var<S> in;
    if (cfg->condition_in_projection) {
      if (target.onehot_maps.dim(1) != layout.height || target.onehot_maps.dim(2) != layout.width)
        throw ShapeError("project: condition maps do not match the layout size");
      in = concat_ch<S>({tape.constant(sem.template cast<S>()),
                         tape.constant(target.onehot_maps.template cast<S>())});
    } else {
      in = tape.constant(sem.template cast<S>());
    }
    return (*projection)(in);
  }

  GenerateResult<S> generate(Var<S> x, const SemanticLayout& layout, const AgeCondition& target,
                             std::uint64_t noise_seed) const {
    Tape<S>& tape = *x.tape;
    const auto& xs = x.shape();
    if (xs.size() != 3 || xs[0] != 3) throw ShapeError("generate: input must be [3, H, W]");
    const int h = xs[1], w = xs[2];
    if (h % 4 != 0 || w % 4 != 0) throw ShapeError("generate: H and W must be multiples of 4");
    if (layout.height != h || layout.width != w)
      throw ShapeError("generate: layout size does not match the image");

    Rng seeds(noise_seed);
    const std::uint64_t proj_seed = seeds.next_u64();
    const std::uint64_t dec_seed1 = seeds.next_u64();
    const std::uint64_t dec_seed2 = seeds.next_u64();

    GenerateResult<S> out;
    if (projection) out.m = project(tape, layout, target, noise_seed);
    (void)proj_seed;

    Var<S> e = x;
    if (cfg->condition_in_encoder()) {
      if (target.onehot_maps.dim(1) != h || target.onehot_maps.dim(2) != w)
        throw ShapeError("generate: condition maps do not match the image size");
      e = concat_ch<S>({x, tape.constant(target.onehot_maps.template cast<S>())});
    }
    e = leaky_relu(instance_norm(enc1(e)));
    e = leaky_relu(instance_norm(enc2(e)));
    e = leaky_relu(instance_norm(enc3(e)));

    const Var<S>* m = projection ? &out.m : nullptr;
    for (const auto& blk : blocks) e = blk(e, m);

    auto d = upsample2(e);
    if (noise_scale1)
      d = add_scaled_noise(d, noise_scale1->s,
                           tape.constant(make_noise_map(dec_seed1, h / 2, w / 2).data.template cast<S>()));
    d = leaky_relu(instance_norm(dec1(d)));
    d = upsample2(d);
    if (noise_scale2)
      d = add_scaled_noise(d, noise_scale2->s,
                           tape.constant(make_noise_map(dec_seed2, h, w).data.template cast<S>()));
    d = leaky_relu(instance_norm(dec2(d)));
    out.raw_face = tanh_act(out_conv(d));

    out.face = fusion ? fuse(out.raw_face, x) : out.raw_face;
    return out;
  }

  /// Feature refinement tail: channel attention followed by mask-guided
  /// blending with the source image.
  Var<S> fuse(Var<S> generated, Var<S> source) const {
    if (!fusion) throw ConfigError("fusion requested but frm_enabled is false");
    return (*fusion)(channel_mixer(generated), source);
  }

  DisentangledVars<S> constrain(Var<S> face) const {
    if (!constraint) throw ConfigError("constrain requested but constraint_enabled is false");
    return (*constraint)(face);
  }
};

template <typename S>
PlacedGenerator<S> place(Binder<S>& b, const std::string& prefix, Generator<S>& g) {
  PlacedGenerator<S> p;
  p.cfg = &g.cfg;
  p.enc1 = place(b, prefix + ".enc1", g.enc1);
  p.enc2 = place(b, prefix + ".enc2", g.enc2);
  p.enc3 = place(b, prefix + ".enc3", g.enc3);
  if (g.projection) p.projection = place(b, prefix + ".proj", *g.projection);
  for (size_t i = 0; i < g.blocks.size(); ++i)
    p.blocks.push_back(place(b, prefix + ".block" + std::to_string(i), g.blocks[i]));
  p.dec1 = place(b, prefix + ".dec1", g.dec1);
  p.dec2 = place(b, prefix + ".dec2", g.dec2);
  p.out_conv = place(b, prefix + ".out_conv", g.out_conv);
  if (g.noise_scale1) p.noise_scale1 = place(b, prefix + ".noise_scale1", *g.noise_scale1);
  if (g.noise_scale2) p.noise_scale2 = place(b, prefix + ".noise_scale2", *g.noise_scale2);
  if (g.fusion) p.fusion = place(b, prefix + ".fusion", *g.fusion);
  if (g.constraint) p.constraint = place(b, prefix + ".constraint", *g.constraint);
  return p;
}

/// Frozen-weight convenience wrapper: runs one forward pass on a fresh tape
/// and returns plain tensors (output face and latent map when present).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> run_generator(Generator<S>& g, const Tensor<float>& image,
                                              const SemanticLayout& layout,
                                              const AgeCondition& target,
                                              std::uint64_t noise_seed) {
  Tape<S> tape;
  Binder<S> binder(tape, false);
  auto placed = place(binder, "g", g);
  auto x = tape.constant(image.template cast<S>());
  auto out = placed.generate(x, layout, target, noise_seed);
  Tensor<S> face = out.face.val();
  Tensor<S> m = placed.projection ? out.m.val() : Tensor<S>{};
  return {std::move(face), std::move(m)};
}

}  // namespace nsg

#endif
