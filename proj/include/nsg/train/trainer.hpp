#ifndef NSG_TRAIN_TRAINER_HPP
#define NSG_TRAIN_TRAINER_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsg/core/config.hpp"
#include "nsg/data/dataset.hpp"
#include "nsg/eval/identity.hpp"
#include "nsg/model/checkpoint.hpp"
#include "nsg/model/discriminator.hpp"
#include "nsg/model/generator.hpp"
#include "nsg/nn/adam.hpp"
#include "nsg/train/losses.hpp"

namespace nsg {

enum class Strategy { kSelfOnly, kConditionOnly, kJoint };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kSelfOnly: return "self_only";
    case Strategy::kConditionOnly: return "condition_only";
    case Strategy::kJoint: return "joint";
  }
  return "?";
}

inline Strategy strategy_from(const std::string& s) {
  if (s == "self_only") return Strategy::kSelfOnly;
  if (s == "condition_only") return Strategy::kConditionOnly;
  if (s == "joint") return Strategy::kJoint;
  throw ConfigError("unknown strategy \"" + s + "\"");
}

// Seed-derivation purpose tags; every random stream is a pure function of
// (master seed, tag, indices).
inline constexpr std::uint64_t kInitTag = 0xA110;
inline constexpr std::uint64_t kEpochTag = 0xE90C;
inline constexpr std::uint64_t kNoiseTag = 0x9015E;

struct TrainConfig {
  int epochs = 40;
  double learning_rate = 1e-4;
  int batch_size = 4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 1;
  Strategy strategy = Strategy::kJoint;
  int checkpoint_interval = 500;
  double clip_norm = 0.0;
  bool log_walltime = true;
  std::int64_t max_steps = 0;  // 0 = no cap beyond epochs
  std::string scalar = "f32";
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  LossWeights weights;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be at least 1");
    if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
    if (scalar != "f32" && scalar != "f64")
      throw ConfigError("train.scalar must be f32 or f64, got \"" + scalar + "\"");
    if (gen.constraint_enabled && !gen.injection_enabled)
      throw ConfigError("the constraint network needs injection enabled (it targets the latent map)");
    gen.validate();
    disc.validate();
    weights.validate();
  }
};

/// Every configuration key the tools understand, with desk-scale defaults.
inline Config default_desk_config() {
  Config c;
  c.set("train.epochs", "40");
  c.set("train.learning_rate", "1e-4");
  c.set("train.batch_size", "4");
  c.set("train.beta1", "0.5");
  c.set("train.beta2", "0.999");
  c.set("train.seed", "1");
  c.set("train.strategy", "joint");
  c.set("train.checkpoint_interval", "500");
  c.set("train.clip_norm", "0");
  c.set("train.log_walltime", "true");
  c.set("train.max_steps", "0");
  c.set("train.scalar", "f32");
  c.set("gen.base_channels", "8");
  c.set("gen.n_resblocks", "6");
  c.set("gen.injection_channels", "16");
  c.set("gen.drop_classes", "3,7,8");
  c.set("gen.decoder_noise", "true");
  c.set("gen.projection_noise", "true");
  c.set("gen.frm", "true");
  c.set("gen.constraint", "true");
  c.set("gen.injection", "true");
  c.set("gen.condition_in_projection", "true");
  c.set("gen.constraint_type", "disentangle_delta");
  c.set("disc.base_channels", "16");
  c.set("loss.id", "10");
  c.set("loss.pix", "1");
  c.set("loss.cyc", "1");
  c.set("loss.self", "10");
  c.set("loss.age_reg", "800");
  c.set("loss.age_est", "10");
  c.set("loss.constraint", "1");
  c.set("loss.delta", "0.5");
  c.set("loss.age_est_cap", "1");
  c.set("eval.threshold", "73.975");
  c.set("eval.max_subjects", "0");
  return c;
}

inline TrainConfig train_config_from(const Config& c) {
  const Config defaults = default_desk_config();
  c.require_known(defaults.keys());
  TrainConfig t;
  t.epochs = c.get_int("train.epochs", 40);
  t.learning_rate = c.get_double("train.learning_rate", 1e-4);
  t.batch_size = c.get_int("train.batch_size", 4);
  t.beta1 = c.get_double("train.beta1", 0.5);
  t.beta2 = c.get_double("train.beta2", 0.999);
  t.seed = c.get_u64("train.seed", 1);
  t.strategy = strategy_from(c.get_str("train.strategy", "joint"));
  t.checkpoint_interval = c.get_int("train.checkpoint_interval", 500);
  t.clip_norm = c.get_double("train.clip_norm", 0.0);
  t.log_walltime = c.get_bool("train.log_walltime", true);
  t.max_steps = c.get_int("train.max_steps", 0);
  t.scalar = c.get_str("train.scalar", "f32");
  t.gen.base_channels = c.get_int("gen.base_channels", 8);
  t.gen.n_resblocks = c.get_int("gen.n_resblocks", 6);
  t.gen.injection_channels = c.get_int("gen.injection_channels", 16);
  t.gen.drop_classes.clear();
  for (int v : c.get_int_list("gen.drop_classes", {3, 7, 8})) t.gen.drop_classes.insert(v);
  t.gen.decoder_noise_enabled = c.get_bool("gen.decoder_noise", true);
  t.gen.projection_noise_enabled = c.get_bool("gen.projection_noise", true);
  t.gen.frm_enabled = c.get_bool("gen.frm", true);
  t.gen.constraint_enabled = c.get_bool("gen.constraint", true);
  t.gen.injection_enabled = c.get_bool("gen.injection", true);
  t.gen.condition_in_projection = c.get_bool("gen.condition_in_projection", true);
  t.gen.constraint_type = constraint_type_from(c.get_str("gen.constraint_type", "disentangle_delta"));
  t.disc.base_channels = c.get_int("disc.base_channels", 16);
  t.weights.id = c.get_double("loss.id", 10.0);
  t.weights.pix = c.get_double("loss.pix", 1.0);
  t.weights.cyc = c.get_double("loss.cyc", 1.0);
  t.weights.self = c.get_double("loss.self", 10.0);
  t.weights.age_reg = c.get_double("loss.age_reg", 800.0);
  t.weights.age_est = c.get_double("loss.age_est", 10.0);
  t.weights.constraint = c.get_double("loss.constraint", 1.0);
  t.weights.delta = c.get_double("loss.delta", 0.5);
  t.weights.age_est_cap = c.get_double("loss.age_est_cap", 1.0);
  t.validate();
  return t;
}

template <typename S>
struct Models {
  Generator<S> g_p, g_r;
  Discriminator<S> d_p, d_r;
  IdentityEmbedder<S> embedder;

  template <typename F>
  void visit(F&& f) {
    g_p.visit("g_p", f);
    g_r.visit("g_r", f);
    d_p.visit("d_p", f);
    d_r.visit("d_r", f);
  }
};

/// Progression and regression roles share a structure, never parameters;
/// each network draws from its own derived stream.
template <typename S>
Models<S> init_models(const TrainConfig& tc) {
  Models<S> m{Generator<S>::make(tc.gen), Generator<S>::make(tc.gen),
              Discriminator<S>::make(tc.disc), Discriminator<S>::make(tc.disc),
              IdentityEmbedder<S>::make()};
  Rng root = Rng(tc.seed).derive(kInitTag);
  m.g_p.init(root.derive(1));
  m.g_r.init(root.derive(2));
  m.d_p.init(root.derive(3));
  m.d_r.init(root.derive(4));
  return m;
}

namespace detail {

inline void ensure_finite(double v, const char* component) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + component + " loss");
}

template <typename S>
void accumulate(Var<S>& acc, Var<S> v) {
  acc = acc.valid() ? acc + v : v;
}

template <typename S>
double value_or_zero(const Var<S>& v) {
  return v.valid() ? static_cast<double>(v.item()) : 0.0;
}

}  // namespace detail

/// One optimization step over a batch of young/old pairs. Three phases on a
/// single tape: all generator forwards, then the critic update on detached
/// fakes, then the generator update against the refreshed critics.
template <typename S>
LossReport train_step(Models<S>& models, const Dataset& ds, const FacePairBatch& batch,
                      const TrainConfig& tc, Adam<S>& opt_g, Adam<S>& opt_d, std::int64_t epoch,
                      std::int64_t step_in_epoch) {
  using detail::accumulate;
  using detail::value_or_zero;
  const int n = static_cast<int>(batch.pairs.size());
  if (n == 0) throw DataError("train_step: empty batch");
  const bool cond_branch = tc.strategy != Strategy::kSelfOnly;
  const bool self_branch = tc.strategy != Strategy::kConditionOnly;
  const bool with_constraint = cond_branch && tc.gen.constraint_enabled;
  const auto& w = tc.weights;
  const S inv_n = S(1) / static_cast<S>(n);

  struct PairWork {
    Var<S> x_y, x_o;
    GenerateResult<S> yo, oy;
    double t_y = 0.0, t_o = 0.0;
  };

  Tape<S> tape;
  Binder<S> bg(tape, true);
  auto g_p = place(bg, "g_p", models.g_p);
  auto g_r = place(bg, "g_r", models.g_r);

  Rng noise_rng = Rng(tc.seed).derive(kNoiseTag, static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(step_in_epoch));

  std::vector<PairWork> work(static_cast<size_t>(n));
  Var<S> sum_id, sum_pix, sum_cyc, sum_self, sum_age_est, sum_constraint;
  for (int i = 0; i < n; ++i) {
    PairWork& pw = work[static_cast<size_t>(i)];
    const Sample& sy = ds.samples[static_cast<size_t>(batch.pairs[static_cast<size_t>(i)].first)];
    const Sample& so = ds.samples[static_cast<size_t>(batch.pairs[static_cast<size_t>(i)].second)];
    pw.x_y = tape.constant(sy.image.template cast<S>());
    pw.x_o = tape.constant(so.image.template cast<S>());
    pw.t_y = normalized_age_of_group(sy.group);
    pw.t_o = normalized_age_of_group(so.group);
    std::uint64_t seeds[6];
    for (auto& s : seeds) s = noise_rng.next_u64();

    if (cond_branch) {
      pw.yo = g_p.generate(pw.x_y, sy.layout, so.condition, seeds[0]);
      auto cyc_y = g_r.generate(pw.yo.face, sy.layout, sy.condition, seeds[1]).face;
      pw.oy = g_r.generate(pw.x_o, so.layout, sy.condition, seeds[2]);
      auto cyc_o = g_p.generate(pw.oy.face, so.layout, so.condition, seeds[3]).face;

      accumulate(sum_id, id_term(models.embedder(pw.yo.face), models.embedder(pw.x_y)) +
                             id_term(models.embedder(pw.oy.face), models.embedder(pw.x_o)));
      accumulate(sum_pix, pixel_term(pw.yo.face, pw.x_y) + pixel_term(pw.oy.face, pw.x_o));
      accumulate(sum_cyc, cycle_term(cyc_y, pw.x_y) + cycle_term(cyc_o, pw.x_o));

      if (with_constraint) {
        auto con_yo = g_p.constrain(detach(pw.yo.raw_face));
        auto con_oy = g_r.constrain(detach(pw.oy.raw_face));
        accumulate(sum_constraint,
                   constraint_term(con_yo.F_re, pw.yo.m) + constraint_term(con_oy.F_re, pw.oy.m));
        if (tc.gen.constraint_type == ConstraintType::kDisentangleDelta) {
          accumulate(sum_age_est,
                     age_est_term(g_p.constraint->age_estimate(con_yo.F_re),
                                  g_p.constraint->age_estimate(con_yo.F_un), pw.t_o, w.delta,
                                  w.age_est_cap) +
                         age_est_term(g_r.constraint->age_estimate(con_oy.F_re),
                                      g_r.constraint->age_estimate(con_oy.F_un), pw.t_y, w.delta,
                                      w.age_est_cap));
        } else if (tc.gen.constraint_type == ConstraintType::kDisentangleId) {
          auto un_id_term = [&](const PlacedGenerator<S>& g, const DisentangledVars<S>& con,
                                Var<S> src) {
            return mean_all(
                square(g.constraint->identity_embed(con.F_un) - models.embedder(src)));
          };
          accumulate(sum_age_est,
                     age_sq_term(g_p.constraint->age_estimate(con_yo.F_re), pw.t_o) +
                         un_id_term(g_p, con_yo, pw.x_y) +
                         age_sq_term(g_r.constraint->age_estimate(con_oy.F_re), pw.t_y) +
                         un_id_term(g_r, con_oy, pw.x_o));
        }
      }
    }
    if (self_branch) {
      auto self_y = g_p.generate(pw.x_y, sy.layout, sy.condition, seeds[4]).face;
      auto self_o = g_r.generate(pw.x_o, so.layout, so.condition, seeds[5]).face;
      accumulate(sum_self, self_term(self_y, pw.x_y) + self_term(self_o, pw.x_o));
    }
  }
  auto mean_of = [&](Var<S>& v) {
    if (v.valid()) v = scale(v, inv_n);
  };
  mean_of(sum_id);
  mean_of(sum_pix);
  mean_of(sum_cyc);
  mean_of(sum_self);
  mean_of(sum_age_est);
  mean_of(sum_constraint);

  LossReport report;
  report.id = value_or_zero(sum_id);
  report.pix = value_or_zero(sum_pix);
  report.cyc = value_or_zero(sum_cyc);
  report.self = value_or_zero(sum_self);
  report.age_est = value_or_zero(sum_age_est);
  report.constraint = value_or_zero(sum_constraint);
  detail::ensure_finite(report.id, "id");
  detail::ensure_finite(report.pix, "pix");
  detail::ensure_finite(report.cyc, "cyc");
  detail::ensure_finite(report.self, "self");
  detail::ensure_finite(report.age_est, "age_est");
  detail::ensure_finite(report.constraint, "constraint");

  // Critic update: reals plus detached fakes. The age head always learns
  // from real faces; patch realism only participates when condition-driven
  // fakes exist.
  Binder<S> bd(tape, true);
  auto d_p = place(bd, "d_p", models.d_p);
  auto d_r = place(bd, "d_r", models.d_r);
  Var<S> adv_d, age_reg_real;
  for (int i = 0; i < n; ++i) {
    PairWork& pw = work[static_cast<size_t>(i)];
    auto dp_real = d_p(pw.x_o);
    auto dr_real = d_r(pw.x_y);
    accumulate(age_reg_real,
               age_sq_term(dp_real.age, pw.t_o) + age_sq_term(dr_real.age, pw.t_y));
    if (cond_branch) {
      auto dp_fake = d_p(detach(pw.yo.face));
      auto dr_fake = d_r(detach(pw.oy.face));
      accumulate(adv_d, adv_d_term(dp_real.realism, dp_fake.realism) +
                            adv_d_term(dr_real.realism, dr_fake.realism));
    }
  }
  mean_of(adv_d);
  mean_of(age_reg_real);
  const double adv_d_value = value_or_zero(adv_d);
  double age_reg_value = value_or_zero(age_reg_real);

  Var<S> loss_d = age_reg_real.valid() ? scale(age_reg_real, static_cast<S>(w.age_reg)) : Var<S>{};
  if (adv_d.valid()) accumulate(loss_d, adv_d);
  detail::ensure_finite(value_or_zero(loss_d), "discriminator");
  if (loss_d.valid()) {
    tape.backward(loss_d);
    opt_d.step(bd.params(), tape);
    tape.zero_grads();
  }

  // Generator update against the refreshed critics.
  Binder<S> bf(tape, false);
  auto d_p2 = place(bf, "d_p", models.d_p);
  auto d_r2 = place(bf, "d_r", models.d_r);
  Var<S> adv_g, age_reg_fake;
  if (cond_branch) {
    for (int i = 0; i < n; ++i) {
      PairWork& pw = work[static_cast<size_t>(i)];
      auto dp_fake = d_p2(pw.yo.face);
      auto dr_fake = d_r2(pw.oy.face);
      accumulate(adv_g, adv_g_term(dp_fake.realism) + adv_g_term(dr_fake.realism));
      accumulate(age_reg_fake,
                 age_sq_term(dp_fake.age, pw.t_o) + age_sq_term(dr_fake.age, pw.t_y));
    }
    mean_of(adv_g);
    mean_of(age_reg_fake);
  }
  const double adv_g_value = value_or_zero(adv_g);
  age_reg_value += value_or_zero(age_reg_fake);
  report.adv = adv_d_value + adv_g_value;
  report.age_reg = age_reg_value;
  detail::ensure_finite(report.adv, "adv");
  detail::ensure_finite(report.age_reg, "age_reg");

  Var<S> loss_g;
  auto add_weighted = [&](Var<S>& term, double lambda) {
    if (term.valid() && lambda != 0.0) accumulate(loss_g, scale(term, static_cast<S>(lambda)));
  };
  if (adv_g.valid()) accumulate(loss_g, adv_g);
  add_weighted(age_reg_fake, w.age_reg);
  add_weighted(sum_id, w.id);
  add_weighted(sum_pix, w.pix);
  add_weighted(sum_cyc, w.cyc);
  add_weighted(sum_self, w.self);
  add_weighted(sum_age_est, w.age_est);
  add_weighted(sum_constraint, w.constraint);
  detail::ensure_finite(value_or_zero(loss_g), "generator");
  if (loss_g.valid()) {
    tape.backward(loss_g);
    opt_g.step(bg.params(), tape);
  }

  return finalize_report(report, w);
}

template <typename S>
void save_training_checkpoint(const std::filesystem::path& path, Models<S>& models, Adam<S>& opt_g,
                              Adam<S>& opt_d, const Config& snapshot, int epoch,
                              std::int64_t step_in_epoch, std::int64_t global_step) {
  std::vector<std::pair<std::string, const Tensor<S>*>> tensors;
  models.visit([&](const std::string& name, Tensor<S>& t) { tensors.emplace_back(name, &t); });
  auto add_slots = [&](Adam<S>& opt) {
    for (auto& [name, slot] : opt.slots()) {
      tensors.emplace_back("opt." + name + ".m", &slot.m);
      tensors.emplace_back("opt." + name + ".v", &slot.v);
    }
  };
  add_slots(opt_g);
  add_slots(opt_d);
  nlohmann::json meta;
  meta["kind"] = "training_checkpoint";
  meta["epoch"] = epoch;
  meta["step_in_epoch"] = step_in_epoch;
  meta["global_step"] = global_step;
  meta["opt_g_steps"] = opt_g.steps();
  meta["opt_d_steps"] = opt_d.steps();
  meta["config_text"] = snapshot.to_text();
  save_archive<S>(path, std::move(tensors), meta);
}

inline nlohmann::json read_archive_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kArchiveMagic))
    throw DataError(path.string() + " is not a parameter archive");
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError(path.string() + ": truncated header");
  return nlohmann::json::parse(header_text).value("meta", nlohmann::json::object());
}

template <typename S>
struct RestoredState {
  int epoch = 0;
  std::int64_t step_in_epoch = 0;
  std::int64_t global_step = 0;
};

template <typename S>
RestoredState<S> restore_training_checkpoint(const std::filesystem::path& path, Models<S>& models,
                                             Adam<S>& opt_g, Adam<S>& opt_d) {
  Archive<S> a = load_archive<S>(path);
  models.visit([&](const std::string& name, Tensor<S>& t) {
    auto it = a.tensors.find(name);
    if (it == a.tensors.end()) throw DataError(path.string() + ": missing parameter " + name);
    if (it->second.shape != t.shape)
      throw DataError(path.string() + ": shape mismatch for " + name);
    t = it->second;
  });
  for (auto& [name, t] : a.tensors) {
    if (name.rfind("opt.", 0) != 0) continue;
    const bool is_m = name.size() > 2 && name.compare(name.size() - 2, 2, ".m") == 0;
    const bool is_v = name.size() > 2 && name.compare(name.size() - 2, 2, ".v") == 0;
    if (!is_m && !is_v) throw DataError(path.string() + ": unrecognized optimizer entry " + name);
    const std::string param = name.substr(4, name.size() - 6);
    Adam<S>& opt = (param.rfind("d_", 0) == 0) ? opt_d : opt_g;
    auto& slot = opt.slots()[param];
    (is_m ? slot.m : slot.v) = t;
  }
  const auto meta = a.meta;
  RestoredState<S> st;
  st.epoch = meta.value("epoch", 0);
  st.step_in_epoch = meta.value("step_in_epoch", std::int64_t{0});
  st.global_step = meta.value("global_step", std::int64_t{0});
  opt_g.set_steps(meta.value("opt_g_steps", std::int64_t{0}));
  opt_d.set_steps(meta.value("opt_d_steps", std::int64_t{0}));
  return st;
}

/// Weights plus the resolved configuration a checkpoint was trained under;
/// what translation and evaluation need, with no optimizer state.
template <typename S>
struct LoadedCheckpoint {
  TrainConfig tc;
  Config config;
  Models<S> models;
  nlohmann::json meta;
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint_models(const std::filesystem::path& path) {
  Archive<S> a = load_archive<S>(path);
  const std::string text = a.meta.value("config_text", std::string{});
  if (text.empty()) throw DataError(path.string() + ": checkpoint carries no configuration");
  Config c = Config::from_text(text);
  const TrainConfig tc = train_config_from(c);
  LoadedCheckpoint<S> out{tc, std::move(c), init_models<S>(tc), a.meta};
  out.models.visit([&](const std::string& name, Tensor<S>& t) {
    auto it = a.tensors.find(name);
    if (it == a.tensors.end()) throw DataError(path.string() + ": missing parameter " + name);
    if (it->second.shape != t.shape)
      throw DataError(path.string() + ": shape mismatch for " + name);
    t = it->second;
  });
  return out;
}

struct TrainRunResult {
  std::int64_t global_step = 0;
  int epochs_completed = 0;
  LossReport first, last;
  std::filesystem::path final_checkpoint;
};

/// Full training loop: per epoch, derive the pairing shuffle from the seed,
/// run train_step over the batches, log one JSON line per step, checkpoint
/// on the configured interval and once more at the end.
template <typename S>
TrainRunResult train(const Dataset& ds, const TrainConfig& tc, const Config& snapshot,
                     const std::filesystem::path& out_dir,
                     const std::filesystem::path& resume_from = {}) {
  tc.validate();
  std::filesystem::create_directories(out_dir);
  Models<S> models = init_models<S>(tc);
  AdamConfig acfg{tc.learning_rate, tc.beta1, tc.beta2, 1e-8, tc.clip_norm};
  Adam<S> opt_g(acfg), opt_d(acfg);

  int start_epoch = 0;
  std::int64_t start_step = 0, global_step = 0;
  const bool resuming = !resume_from.empty();
  if (resuming) {
    auto st = restore_training_checkpoint<S>(resume_from, models, opt_g, opt_d);
    start_epoch = st.epoch;
    start_step = st.step_in_epoch;
    global_step = st.global_step;
  }

  const std::filesystem::path log_path = out_dir / "loss_log.jsonl";
  std::ofstream log(log_path, resuming ? (std::ios::out | std::ios::app)
                                       : (std::ios::out | std::ios::trunc));
  if (!log) throw DataError("cannot open " + log_path.string() + " for writing");

  TrainRunResult result;
  bool have_first = false;
  bool stop = false;
  // Position a resumed run would continue from; (epoch, step) where step
  // counts completed batches within the epoch.
  int done_epoch = start_epoch;
  std::int64_t done_step = start_step;
  for (int epoch = start_epoch; epoch < tc.epochs && !stop; ++epoch) {
    auto batches =
        make_pair_batches(ds, tc.batch_size, Rng(tc.seed).derive(kEpochTag, static_cast<std::uint64_t>(epoch)));
    std::int64_t step_in_epoch = (epoch == start_epoch) ? start_step : 0;
    for (; step_in_epoch < static_cast<std::int64_t>(batches.size()); ++step_in_epoch) {
      if (tc.max_steps > 0 && global_step >= tc.max_steps) {
        stop = true;
        break;
      }
      const auto t0 = std::chrono::steady_clock::now();
      LossReport r = train_step(models, ds, batches[static_cast<size_t>(step_in_epoch)], tc, opt_g,
                                opt_d, epoch, step_in_epoch);
      ++global_step;
      nlohmann::json rec;
      rec["epoch"] = epoch;
      rec["step"] = global_step;
      rec["adv"] = r.adv;
      rec["age_reg"] = r.age_reg;
      rec["id"] = r.id;
      rec["pix"] = r.pix;
      rec["cyc"] = r.cyc;
      rec["self"] = r.self;
      rec["age_est"] = r.age_est;
      rec["constraint"] = r.constraint;
      rec["total"] = r.total;
      if (tc.log_walltime)
        rec["walltime_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
      log << rec.dump() << "\n";
      log.flush();
      if (!log) throw DataError("write failed for " + log_path.string());
      if (!have_first) {
        result.first = r;
        have_first = true;
      }
      result.last = r;
      done_epoch = epoch;
      done_step = step_in_epoch + 1;
      if (global_step % tc.checkpoint_interval == 0) {
        save_training_checkpoint(out_dir / ("ckpt_step" + std::to_string(global_step) + ".nsg"),
                                 models, opt_g, opt_d, snapshot, done_epoch, done_step,
                                 global_step);
      }
    }
    if (!stop) {
      done_epoch = epoch + 1;
      done_step = 0;
    }
  }
  result.global_step = global_step;
  result.epochs_completed = done_epoch;
  result.final_checkpoint = out_dir / "ckpt_final.nsg";
  save_training_checkpoint(result.final_checkpoint, models, opt_g, opt_d, snapshot, done_epoch,
                           done_step, global_step);
  return result;
}

}  // namespace nsg

#endif
