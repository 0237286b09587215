#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nsg/core/config.hpp"
#include "nsg/data/dataset.hpp"
#include "nsg/data/synthetic.hpp"
#include "nsg/eval/evaluator.hpp"
#include "nsg/train/ablate.hpp"
#include "nsg/train/trainer.hpp"

namespace fs = std::filesystem;

namespace {

fs::path default_out(const std::string& subcommand) {
  const char* root = std::getenv("NSG_OUT_ROOT");
  return fs::path(root && *root ? root : "runs") / subcommand;
}

void write_snapshot(const fs::path& dir, const nsg::Config& c) {
  fs::create_directories(dir);
  const fs::path path = dir / "resolved_config.txt";
  std::ofstream out(path);
  if (!out) throw nsg::DataError("cannot write " + path.string());
  out << c.to_text();
  if (!out) throw nsg::DataError("write failed for " + path.string());
}

/// Layered resolution: desk defaults, then an optional base text (a
/// checkpoint's embedded config), then a config file, then --set overrides.
/// Unknown keys are rejected against the default key set.
nsg::Config resolve_config(const std::string& base_text, const std::string& config_path,
                           const std::vector<std::string>& sets) {
  nsg::Config c = nsg::default_desk_config();
  if (!base_text.empty()) c.merge_text(base_text, "<checkpoint config>");
  if (!config_path.empty()) c.merge_file(config_path);
  for (const auto& s : sets) c.set_assignment(s);
  c.require_known(nsg::default_desk_config().keys());
  return c;
}

std::string checkpoint_config_text(const fs::path& ckpt) {
  const auto meta = nsg::read_archive_meta(ckpt);
  const std::string text = meta.value("config_text", std::string{});
  if (text.empty())
    throw nsg::DataError(ckpt.string() + ": checkpoint carries no configuration");
  return text;
}

template <typename F>
void dispatch_scalar(const std::string& scalar, F&& f) {
  if (scalar == "f64")
    f(double{});
  else if (scalar == "f32")
    f(float{});
  else
    throw nsg::ConfigError("train.scalar must be f32 or f64, got \"" + scalar + "\"");
}

struct MakeSyntheticArgs {
  std::string out;
  int identities = 100;
  std::vector<int> groups = {0, 1, 2, 3};
  int size = 64;
  std::uint64_t seed = 1;
};

void run_make_synthetic(const MakeSyntheticArgs& a) {
  const fs::path out = a.out.empty() ? default_out("synthetic") : fs::path(a.out);
  const auto rendered = nsg::generate_synthetic_dataset(a.identities, a.groups, a.size, a.seed);
  nsg::save_synthetic_dataset(rendered, out, a.seed);
  nsg::Config snap;
  snap.set("data.identities", std::to_string(a.identities));
  std::string groups;
  for (size_t i = 0; i < a.groups.size(); ++i)
    groups += (i ? "," : "") + std::to_string(a.groups[i]);
  snap.set("data.groups", groups);
  snap.set("data.size", std::to_string(a.size));
  snap.set("data.seed", std::to_string(a.seed));
  write_snapshot(out, snap);
  std::cout << "wrote " << rendered.size() << " images under " << out.string() << '\n';
}

struct TrainArgs {
  std::string data, out, config, resume;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  const fs::path out = a.out.empty() ? default_out("train") : fs::path(a.out);
  std::string base_text;
  if (!a.resume.empty()) base_text = checkpoint_config_text(a.resume);
  nsg::Config c = resolve_config(base_text, a.config, a.sets);
  if (a.seed) c.set("train.seed", std::to_string(*a.seed));
  const nsg::TrainConfig tc = nsg::train_config_from(c);
  const nsg::Dataset ds = nsg::load_dataset(a.data);
  write_snapshot(out, c);
  dispatch_scalar(tc.scalar, [&](auto tag) {
    using S = decltype(tag);
    const auto result = nsg::train<S>(ds, tc, c, out, a.resume);
    std::cout << "trained " << result.global_step << " steps ("
              << result.epochs_completed << " epochs); final total loss "
              << result.last.total << '\n';
    std::cout << "checkpoint: " << result.final_checkpoint.string() << '\n';
  });
}

struct TranslateArgs {
  std::string checkpoint, data, out;
  int subjects = 0;
  std::vector<int> targets = {0, 1, 2, 3};
  std::uint64_t seed = 1;
  bool no_grids = false;
};

void run_translate(const TranslateArgs& a) {
  const fs::path out = a.out.empty() ? default_out("translate") : fs::path(a.out);
  for (int t : a.targets)
    if (t < 0 || t >= nsg::kNumGroups)
      throw nsg::ConfigError("target group must be in [0, " +
                             std::to_string(nsg::kNumGroups) + "), got " + std::to_string(t));
  const std::string text = checkpoint_config_text(a.checkpoint);
  const nsg::Config cc = nsg::Config::from_text(text);
  const nsg::Dataset ds = nsg::load_dataset(a.data);
  write_snapshot(out, cc);
  dispatch_scalar(cc.get_str("train.scalar", "f32"), [&](auto tag) {
    using S = decltype(tag);
    auto loaded = nsg::load_checkpoint_models<S>(a.checkpoint);
    const int n = a.subjects > 0 ? std::min(a.subjects, ds.size()) : ds.size();
    const nsg::Rng base(a.seed);
    int written = 0;
    for (int i = 0; i < n; ++i) {
      const nsg::Sample& s = ds.samples[static_cast<size_t>(i)];
      std::array<nsg::Tensor<float>, nsg::kNumGroups> faces;
      std::vector<bool> have(nsg::kNumGroups, false);
      for (int t : a.targets) {
        const std::uint64_t noise_seed =
            base.derive(nsg::kEvalNoiseTag, static_cast<std::uint64_t>(i),
                        static_cast<std::uint64_t>(t))
                .next_u64();
        faces[static_cast<size_t>(t)] =
            nsg::translate_face(loaded.models.g_p, loaded.models.g_r, s.image, s.layout,
                                s.group, t, noise_seed);
        have[static_cast<size_t>(t)] = true;
        const fs::path img_path =
            out / ("subject_" + std::to_string(i) + "_to_" + std::to_string(t) + ".png");
        nsg::write_png(img_path, nsg::tensor_to_image(faces[static_cast<size_t>(t)]));
        ++written;
      }
      const bool all = std::all_of(have.begin(), have.end(), [](bool b) { return b; });
      if (!a.no_grids && all)
        nsg::write_subject_grid(out / ("grid_subject_" + std::to_string(i) + ".png"), s.image,
                                faces);
    }
    std::cout << "wrote " << written << " translations for " << n << " subjects under "
              << out.string() << '\n';
  });
}

struct EvaluateArgs {
  std::string checkpoint, data, out, records;
  int max_subjects = 0;
  double threshold = nsg::kIdentityThreshold;
  std::uint64_t seed = 1;
  bool grids = false;
};

void run_evaluate(const EvaluateArgs& a) {
  const fs::path out = a.out.empty() ? default_out("evaluate") : fs::path(a.out);
  std::vector<nsg::SampleRecord> records;
  if (!a.records.empty()) {
    records = nsg::read_records(a.records);
    fs::create_directories(out);
  } else {
    if (a.checkpoint.empty())
      throw nsg::ConfigError("evaluate needs --checkpoint (or --records to re-aggregate)");
    const std::string text = checkpoint_config_text(a.checkpoint);
    const nsg::Config cc = nsg::Config::from_text(text);
    const nsg::Dataset ds = nsg::load_dataset(a.data);
    write_snapshot(out, cc);
    dispatch_scalar(cc.get_str("train.scalar", "f32"), [&](auto tag) {
      using S = decltype(tag);
      auto loaded = nsg::load_checkpoint_models<S>(a.checkpoint);
      nsg::EvalOptions opt;
      opt.threshold = a.threshold;
      opt.max_subjects = a.max_subjects;
      opt.grids = a.grids;
      opt.seed = a.seed;
      records = nsg::synthetic_eval_records(loaded.models.g_p, loaded.models.g_r, ds, opt,
                                            out / "grids");
    });
    nsg::write_records(out / "records.jsonl", records);
  }
  const nsg::EvalReport report = nsg::build_report(records, a.threshold);
  nsg::write_report(out, report);
  std::cout << nsg::report_to_text(report);
  std::cout << "Target group match rate: " << std::fixed << std::setprecision(2)
            << nsg::oracle_target_match_rate(records) << "%\n";
  std::cout << "report: " << (out / "report.json").string() << '\n';
}

struct AblateArgs {
  std::string axis, data, out, config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  int steps = 300;
  int max_subjects = 40;
  double threshold = nsg::kIdentityThreshold;
  bool dry_run = false;
};

void run_ablate_cmd(const AblateArgs& a) {
  const fs::path out = a.out.empty() ? default_out("ablate") : fs::path(a.out);
  const nsg::AblateAxis axis = nsg::ablate_axis_from(a.axis);
  nsg::Config base = resolve_config("", a.config, a.sets);
  if (a.seed) base.set("train.seed", std::to_string(*a.seed));
  nsg::AblateOptions opt;
  opt.steps = a.steps;
  opt.dry_run = a.dry_run;
  opt.max_subjects = a.max_subjects;
  opt.threshold = a.threshold;
  nsg::Dataset ds;
  if (!a.dry_run) {
    if (a.data.empty()) throw nsg::ConfigError("ablate needs --data unless --dry-run is set");
    ds = nsg::load_dataset(a.data);
  }
  write_snapshot(out, base);
  dispatch_scalar(base.get_str("train.scalar", "f32"), [&](auto tag) {
    using S = decltype(tag);
    const nsg::AblateReport report = nsg::run_ablate<S>(ds, base, axis, out, opt);
    nsg::write_ablate_report(out, report);
    std::cout << nsg::ablate_report_to_text(report);
    std::cout << "report: " << (out / "ablate_report.json").string() << '\n';
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Biphasic facial age translation at desk scale"};
  app.require_subcommand(1);

  MakeSyntheticArgs ms;
  auto* c_ms = app.add_subcommand("make-synthetic", "Render a deterministic synthetic face set");
  c_ms->add_option("--out", ms.out, "Output dataset directory");
  c_ms->add_option("--identities", ms.identities, "Number of synthetic identities")
      ->check(CLI::PositiveNumber);
  c_ms->add_option("--groups", ms.groups, "Age groups rendered per identity");
  c_ms->add_option("--size", ms.size, "Image height and width")->check(CLI::PositiveNumber);
  c_ms->add_option("--seed", ms.seed, "Render seed");
  c_ms->callback([&] { run_make_synthetic(ms); });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the translator pair on a dataset");
  c_tr->add_option("--data", tr.data, "Dataset root directory")->required();
  c_tr->add_option("--out", tr.out, "Run output directory");
  c_tr->add_option("--config", tr.config, "Config file (key = value lines)");
  c_tr->add_option("--set", tr.sets, "Override as key=value (repeatable)");
  c_tr->add_option("--seed", tr.seed, "Override train.seed");
  c_tr->add_option("--resume", tr.resume, "Checkpoint to continue from");
  c_tr->callback([&] { run_train(tr); });

  TranslateArgs tl;
  auto* c_tl = app.add_subcommand("translate", "Translate faces into target age groups");
  c_tl->add_option("--checkpoint", tl.checkpoint, "Trained checkpoint")->required();
  c_tl->add_option("--data", tl.data, "Dataset root directory")->required();
  c_tl->add_option("--out", tl.out, "Output directory");
  c_tl->add_option("--subjects", tl.subjects, "Max source images (0 = all)");
  c_tl->add_option("--targets", tl.targets, "Target age groups");
  c_tl->add_option("--seed", tl.seed, "Noise seed");
  c_tl->add_flag("--no-grids", tl.no_grids, "Skip per-subject comparison strips");
  c_tl->callback([&] { run_translate(tl); });

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint");
  c_ev->add_option("--data", ev.data, "Dataset root directory");
  c_ev->add_option("--out", ev.out, "Output directory");
  c_ev->add_option("--records", ev.records, "Re-aggregate an existing records.jsonl");
  c_ev->add_option("--max-subjects", ev.max_subjects, "Max translated subjects (0 = all)");
  c_ev->add_option("--threshold", ev.threshold, "Identity verification threshold");
  c_ev->add_option("--seed", ev.seed, "Noise seed");
  c_ev->add_flag("--grids", ev.grids, "Write per-subject comparison strips");
  c_ev->callback([&] { run_evaluate(ev); });

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Run a comparison sweep over one design axis");
  c_ab->add_option("--axis", ab.axis,
                   "modules | injection_type | noise_position | constraint_type | strategy")
      ->required();
  c_ab->add_option("--data", ab.data, "Dataset root directory");
  c_ab->add_option("--out", ab.out, "Output directory");
  c_ab->add_option("--config", ab.config, "Config file (key = value lines)");
  c_ab->add_option("--set", ab.sets, "Override as key=value (repeatable)");
  c_ab->add_option("--seed", ab.seed, "Override train.seed");
  c_ab->add_option("--steps", ab.steps, "Training steps per row");
  c_ab->add_option("--max-subjects", ab.max_subjects, "Max translated subjects per row");
  c_ab->add_option("--threshold", ab.threshold, "Identity verification threshold");
  c_ab->add_flag("--dry-run", ab.dry_run, "Emit the row structure without training");
  c_ab->callback([&] { run_ablate_cmd(ab); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const nsg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nsg::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const nsg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
