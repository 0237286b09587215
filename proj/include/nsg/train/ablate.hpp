#ifndef NSG_TRAIN_ABLATE_HPP
#define NSG_TRAIN_ABLATE_HPP

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nsg/core/config.hpp"
#include "nsg/data/dataset.hpp"
#include "nsg/eval/evaluator.hpp"
#include "nsg/train/trainer.hpp"

namespace nsg {

/// The five comparison sweeps, one per analysis table: module build-up,
/// semantic injection type, noise integration position, constraint network
/// type, and training strategy.
enum class AblateAxis { kModules, kInjectionType, kNoisePosition, kConstraintType, kStrategy };

inline const char* ablate_axis_name(AblateAxis a) {
  switch (a) {
    case AblateAxis::kModules: return "modules";
    case AblateAxis::kInjectionType: return "injection_type";
    case AblateAxis::kNoisePosition: return "noise_position";
    case AblateAxis::kConstraintType: return "constraint_type";
    case AblateAxis::kStrategy: return "strategy";
  }
  return "?";
}

inline AblateAxis ablate_axis_from(const std::string& s) {
  if (s == "modules") return AblateAxis::kModules;
  if (s == "injection_type") return AblateAxis::kInjectionType;
  if (s == "noise_position") return AblateAxis::kNoisePosition;
  if (s == "constraint_type") return AblateAxis::kConstraintType;
  if (s == "strategy") return AblateAxis::kStrategy;
  throw ConfigError("unknown ablation axis \"" + s +
                    "\" (expected modules, injection_type, noise_position, constraint_type, or "
                    "strategy)");
}

/// One sweep row: the configuration overrides applied on top of the base
/// config, plus its presentation (label, and for checkmark-grid tables which
/// of the axis columns are active).
struct AblateRow {
  std::string label;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<bool> checks;
};

struct AblateAxisSpec {
  AblateAxis axis = AblateAxis::kModules;
  std::string title;
  std::string label_header;
  std::vector<std::string> check_columns;
  std::vector<std::string> metric_columns;
  std::vector<AblateRow> rows;
};

inline AblateAxisSpec ablate_axis_spec(AblateAxis axis) {
  AblateAxisSpec spec;
  spec.axis = axis;
  const std::string identity_col = "Identity Verification Rate";
  const std::string age_col = "Age Translation Accuracy";
  spec.metric_columns = {identity_col, age_col};
  switch (axis) {
    case AblateAxis::kModules: {
      spec.title = "Module build-up";
      spec.check_columns = {"Encoder-decoder (Baseline)", "ProjectionNet", "ConstraintNet",
                            "Feature Refinement Module"};
      const std::vector<std::pair<std::string, std::string>> off_all = {
          {"gen.injection", "false"},     {"gen.constraint", "false"},
          {"gen.frm", "false"},           {"gen.projection_noise", "false"},
          {"gen.decoder_noise", "false"}};
      spec.rows = {
          {"Encoder-decoder (Baseline)", off_all, {true, false, false, false}},
          {"Encoder-decoder (Baseline) + ProjectionNet",
           {{"gen.constraint", "false"}, {"gen.frm", "false"}},
           {true, true, false, false}},
          {"Encoder-decoder (Baseline) + ProjectionNet + ConstraintNet",
           {{"gen.frm", "false"}},
           {true, true, true, false}},
          {"Encoder-decoder (Baseline) + ProjectionNet + ConstraintNet + Feature Refinement "
           "Module",
           {},
           {true, true, true, true}},
      };
      break;
    }
    case AblateAxis::kInjectionType: {
      spec.title = "Semantic injection types";
      spec.label_header = "Semantic Injection Types";
      spec.rows = {
          {"Semantic Only",
           {{"gen.projection_noise", "false"},
            {"gen.condition_in_projection", "false"},
            {"gen.drop_classes", ""}},
           {}},
          {"Conditional Semantic",
           {{"gen.projection_noise", "false"}, {"gen.drop_classes", ""}},
           {}},
          {"Conditional Noisy Semantic", {{"gen.drop_classes", ""}}, {}},
          {"Conditional Noisy Semantic (No eyes and lips)", {}, {}},
      };
      break;
    }
    case AblateAxis::kNoisePosition: {
      spec.title = "Noise integration positions";
      spec.check_columns = {"ProjectionNet", "Decoder"};
      spec.rows = {
          {"No Noise",
           {{"gen.projection_noise", "false"}, {"gen.decoder_noise", "false"}},
           {false, false}},
          {"Add Noise in ProjectionNet", {{"gen.decoder_noise", "false"}}, {true, false}},
          {"Add Noise in ProjectionNet and Decoder", {}, {true, true}},
      };
      break;
    }
    case AblateAxis::kConstraintType: {
      spec.title = "Constraint network types";
      spec.label_header = "ConstraintNet Types";
      spec.rows = {
          {"Simple Mapping", {{"gen.constraint_type", "simple_mapping"}}, {}},
          {"Feature Disentanglement (With Identity Loss)",
           {{"gen.constraint_type", "disentangle_id"}},
           {}},
          {"Feature Disentanglement (With -Δ Age Loss)",
           {{"gen.constraint_type", "disentangle_delta"}},
           {}},
      };
      break;
    }
    case AblateAxis::kStrategy: {
      spec.title = "Training strategies";
      spec.label_header = "Training Strategy";
      spec.metric_columns = {age_col};
      spec.rows = {
          {"Self-Driven Only", {{"train.strategy", "self_only"}}, {}},
          {"Condition-Driven Only", {{"train.strategy", "condition_only"}}, {}},
          {"Jointly Strategy", {{"train.strategy", "joint"}}, {}},
      };
      break;
    }
  }
  return spec;
}

struct AblateRowResult {
  std::string label;
  std::vector<bool> checks;
  bool trained = false;
  double age_abs_error = 0.0;
  double age_std = 0.0;
  double identity_rate = 0.0;
  double identity_mean = 0.0;
  std::string run_dir;
};

struct AblateReport {
  AblateAxisSpec spec;
  std::vector<AblateRowResult> rows;
};

struct AblateOptions {
  int steps = 300;
  bool dry_run = false;
  int max_subjects = 40;
  double threshold = kIdentityThreshold;
};

/// Applies one row's overrides to the base config; exposed separately so the
/// sweep structure can be inspected without training anything.
inline Config ablate_row_config(const Config& base, const AblateRow& row, int steps) {
  Config c = base;
  for (const auto& [k, v] : row.overrides) c.set(k, v);
  if (steps > 0) c.set("train.max_steps", std::to_string(steps));
  return c;
}

/// Runs the sweep: per row, train the override configuration at desk scale,
/// evaluate it on the dataset, and collect comparative metrics. With dry_run
/// the report carries the row structure only.
template <typename S>
AblateReport run_ablate(const Dataset& ds, const Config& base, AblateAxis axis,
                        const std::filesystem::path& out_dir, const AblateOptions& opt) {
  AblateReport report;
  report.spec = ablate_axis_spec(axis);
  std::filesystem::create_directories(out_dir);
  for (size_t i = 0; i < report.spec.rows.size(); ++i) {
    const AblateRow& row = report.spec.rows[i];
    AblateRowResult res;
    res.label = row.label;
    res.checks = row.checks;
    const std::filesystem::path row_dir = out_dir / ("row" + std::to_string(i + 1));
    res.run_dir = row_dir.string();
    if (!opt.dry_run) {
      const Config cfg = ablate_row_config(base, row, opt.steps);
      const TrainConfig tc = train_config_from(cfg);
      train<S>(ds, tc, cfg, row_dir);
      auto loaded = load_checkpoint_models<S>(row_dir / "ckpt_final.nsg");
      EvalOptions ev;
      ev.threshold = opt.threshold;
      ev.max_subjects = opt.max_subjects;
      ev.seed = tc.seed;
      const auto records =
          synthetic_eval_records(loaded.models.g_p, loaded.models.g_r, ds, ev);
      write_records(row_dir / "records.jsonl", records);
      const EvalReport er = build_report(records, opt.threshold);
      write_report(row_dir, er);
      res.trained = true;
      res.age_abs_error = er.mean_abs_error;
      double std_sum = 0.0;
      for (const auto& g : er.groups) std_sum += g.generated_std;
      res.age_std = std_sum / kNumGroups;
      res.identity_rate = er.identity_rate;
      res.identity_mean = er.identity_mean;
    }
    report.rows.push_back(std::move(res));
  }
  return report;
}

inline nlohmann::json ablate_report_to_json(const AblateReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row{{"label", r.label}, {"trained", r.trained}, {"run_dir", r.run_dir}};
    if (!r.checks.empty()) row["checks"] = r.checks;
    if (r.trained) {
      row["age_abs_error"] = r.age_abs_error;
      row["age_std"] = r.age_std;
      row["identity_rate"] = r.identity_rate;
      row["identity_mean"] = r.identity_mean;
    }
    rows.push_back(std::move(row));
  }
  return nlohmann::json{{"axis", ablate_axis_name(report.spec.axis)},
                        {"title", report.spec.title},
                        {"label_header", report.spec.label_header},
                        {"check_columns", report.spec.check_columns},
                        {"metric_columns", report.spec.metric_columns},
                        {"rows", rows}};
}

inline std::string ablate_report_to_text(const AblateReport& report) {
  const auto& spec = report.spec;
  std::ostringstream out;
  out << spec.title << " (" << ablate_axis_name(spec.axis) << ")\n";

  std::vector<std::string> headers;
  if (!spec.check_columns.empty())
    headers.insert(headers.end(), spec.check_columns.begin(), spec.check_columns.end());
  else
    headers.push_back(spec.label_header);
  headers.insert(headers.end(), spec.metric_columns.begin(), spec.metric_columns.end());

  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    std::vector<std::string> line;
    if (!spec.check_columns.empty()) {
      for (bool c : r.checks) line.push_back(c ? "✓" : "");
    } else {
      line.push_back(r.label);
    }
    if (r.trained) {
      std::ostringstream id_cell, age_cell;
      id_cell << std::fixed << std::setprecision(2) << r.identity_rate << " ("
              << r.identity_mean << ")";
      age_cell << std::fixed << std::setprecision(2) << r.age_abs_error << " ± "
               << r.age_std;
      if (spec.metric_columns.size() == 2) line.push_back(id_cell.str());
      line.push_back(age_cell.str());
    } else {
      for (size_t k = 0; k < spec.metric_columns.size(); ++k) line.push_back("-");
    }
    cells.push_back(std::move(line));
  }

  // Unicode checkmarks and plus-minus signs are 3 bytes but single columns;
  // pad on display width so the table stays aligned.
  auto display_width = [](const std::string& s) {
    size_t w = 0;
    for (char ch : s)
      if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++w;
    return w;
  };
  std::vector<size_t> widths(headers.size());
  for (size_t c = 0; c < headers.size(); ++c) widths[c] = display_width(headers[c]);
  for (const auto& line : cells)
    for (size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], display_width(line[c]));

  auto emit = [&](const std::vector<std::string>& line) {
    for (size_t c = 0; c < line.size(); ++c) {
      out << line[c];
      if (c + 1 < line.size())
        out << std::string(widths[c] - display_width(line[c]) + 2, ' ');
    }
    out << '\n';
  };
  emit(headers);
  for (const auto& line : cells) emit(line);
  return out.str();
}

inline void write_ablate_report(const std::filesystem::path& dir, const AblateReport& report) {
  std::filesystem::create_directories(dir);
  const auto json_path = dir / "ablate_report.json";
  std::ofstream jout(json_path);
  if (!jout) throw DataError("cannot write " + json_path.string());
  jout << ablate_report_to_json(report).dump(2) << '\n';
  const auto text_path = dir / "ablate_report.txt";
  std::ofstream tout(text_path);
  if (!tout) throw DataError("cannot write " + text_path.string());
  tout << ablate_report_to_text(report);
  if (!jout || !tout) throw DataError("write failed under " + dir.string());
}

}  // namespace nsg

#endif
