#ifndef NSG_EVAL_EVALUATOR_HPP
#define NSG_EVAL_EVALUATOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nsg/core/rng.hpp"
#include "nsg/core/tensor.hpp"
#include "nsg/data/condition.hpp"
#include "nsg/data/dataset.hpp"
#include "nsg/data/semantic.hpp"
#include "nsg/eval/grid.hpp"
#include "nsg/eval/identity.hpp"
#include "nsg/eval/oracle.hpp"
#include "nsg/model/generator.hpp"

namespace nsg {

/// Verification threshold on the 0-100 identity-score scale.
inline constexpr double kIdentityThreshold = 73.975;

inline constexpr std::uint64_t kEvalNoiseTag = 0xE7A7;

/// One evaluated image. `population` is "generated" (translator output,
/// estimated against its target group) or "generic" (dataset image, estimated
/// against its annotated group). These records are the ground truth every
/// report is aggregated from.
struct SampleRecord {
  int subject_id = 0;
  std::string population;
  int source_group = 0;
  int target_group = 0;
  double estimated_age = 0.0;
  double identity_score = 0.0;
};

inline void write_records(const std::filesystem::path& path,
                          const std::vector<SampleRecord>& records) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::json j{{"subject_id", r.subject_id},     {"population", r.population},
                     {"source_group", r.source_group}, {"target_group", r.target_group},
                     {"estimated_age", r.estimated_age}, {"identity_score", r.identity_score}};
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

inline std::vector<SampleRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<SampleRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      SampleRecord r;
      r.subject_id = j.at("subject_id").get<int>();
      r.population = j.at("population").get<std::string>();
      r.source_group = j.at("source_group").get<int>();
      r.target_group = j.at("target_group").get<int>();
      r.estimated_age = j.at("estimated_age").get<double>();
      r.identity_score = j.at("identity_score").get<double>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

/// Per-target-group comparison of estimated ages between the generated and
/// generic populations.
struct GroupStat {
  double generated_mean = 0.0, generated_std = 0.0;
  double generic_mean = 0.0, generic_std = 0.0;
  double abs_error = 0.0;
  int generated_count = 0, generic_count = 0;
};

struct EvalReport {
  std::array<GroupStat, kNumGroups> groups{};
  double mean_abs_error = 0.0;
  double identity_rate = 0.0;
  double identity_mean = 0.0;
  double identity_threshold = kIdentityThreshold;
  int generated_total = 0, generic_total = 0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace detail

/// Verification rate (% of scores at or above the threshold) and mean score.
inline std::pair<double, double> identity_stats(const std::vector<double>& scores,
                                                double threshold) {
  if (scores.empty()) throw DataError("identity stats: no scores");
  int passed = 0;
  double mean = 0.0;
  for (double s : scores) {
    if (s >= threshold) ++passed;
    mean += s;
  }
  const auto n = static_cast<double>(scores.size());
  return {100.0 * passed / n, mean / n};
}

/// Scores aligned (input, output) pairs and reduces to (rate %, mean score).
template <typename Scorer>
std::pair<double, double> identity_preservation(const std::vector<Tensor<float>>& inputs,
                                                const std::vector<Tensor<float>>& outputs,
                                                Scorer&& scorer, double threshold) {
  if (inputs.size() != outputs.size())
    throw DataError("identity_preservation: input/output lists differ in length");
  std::vector<double> scores;
  scores.reserve(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) scores.push_back(scorer(inputs[i], outputs[i]));
  return identity_stats(scores, threshold);
}

inline std::string format_rate_mean(double rate, double mean) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << rate << " (" << mean << ")";
  return out.str();
}

/// Aggregates raw records into the report. Pure: the same records always
/// produce the same report. Throws DataError when either population is
/// missing from any group.
inline EvalReport build_report(const std::vector<SampleRecord>& records,
                               double threshold = kIdentityThreshold) {
  std::array<std::vector<double>, kNumGroups> gen_ages, generic_ages;
  std::vector<double> gen_scores;
  for (const auto& r : records) {
    if (r.target_group < 0 || r.target_group >= kNumGroups)
      throw DataError("record has target group " + std::to_string(r.target_group) +
                      " outside [0, " + std::to_string(kNumGroups) + ")");
    if (r.population == "generated") {
      gen_ages[static_cast<size_t>(r.target_group)].push_back(r.estimated_age);
      gen_scores.push_back(r.identity_score);
    } else if (r.population == "generic") {
      generic_ages[static_cast<size_t>(r.target_group)].push_back(r.estimated_age);
    } else {
      throw DataError("record has unknown population \"" + r.population + "\"");
    }
  }

  EvalReport rep;
  rep.identity_threshold = threshold;
  for (int g = 0; g < kNumGroups; ++g) {
    const auto& gen = gen_ages[static_cast<size_t>(g)];
    const auto& gnr = generic_ages[static_cast<size_t>(g)];
    if (gen.empty())
      throw DataError(std::string("no generated samples for group ") + kGroupLabels[g]);
    if (gnr.empty())
      throw DataError(std::string("no generic samples for group ") + kGroupLabels[g]);
    GroupStat& s = rep.groups[static_cast<size_t>(g)];
    std::tie(s.generated_mean, s.generated_std) = detail::mean_std(gen);
    std::tie(s.generic_mean, s.generic_std) = detail::mean_std(gnr);
    s.abs_error = std::abs(s.generated_mean - s.generic_mean);
    s.generated_count = static_cast<int>(gen.size());
    s.generic_count = static_cast<int>(gnr.size());
    rep.mean_abs_error += s.abs_error / kNumGroups;
    rep.generated_total += s.generated_count;
    rep.generic_total += s.generic_count;
  }
  std::tie(rep.identity_rate, rep.identity_mean) = identity_stats(gen_scores, threshold);
  return rep;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json groups = nlohmann::json::array();
  for (int g = 0; g < kNumGroups; ++g) {
    const GroupStat& s = rep.groups[static_cast<size_t>(g)];
    groups.push_back({{"group", kGroupLabels[g]},
                      {"generic_mean", s.generic_mean},
                      {"generic_std", s.generic_std},
                      {"generated_mean", s.generated_mean},
                      {"generated_std", s.generated_std},
                      {"abs_error", s.abs_error},
                      {"generated_count", s.generated_count},
                      {"generic_count", s.generic_count}});
  }
  return nlohmann::json{
      {"groups", groups},
      {"mean_abs_error", rep.mean_abs_error},
      {"identity", {{"rate", rep.identity_rate},
                    {"mean_score", rep.identity_mean},
                    {"threshold", rep.identity_threshold},
                    {"formatted", format_rate_mean(rep.identity_rate, rep.identity_mean)}}},
      {"counts", {{"generated", rep.generated_total}, {"generic", rep.generic_total}}}};
}

inline std::string report_to_text(const EvalReport& rep) {
  auto num = [](double v) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(2) << v;
    return c.str();
  };
  auto cell = [&](double mean, double std) { return num(mean) + " ± " + num(std); };

  std::vector<std::vector<std::string>> table;
  table.push_back({""});
  for (int g = 0; g < kNumGroups; ++g) table.back().push_back(kGroupLabels[g]);
  table.push_back({"Generic"});
  for (const auto& s : rep.groups) table.back().push_back(cell(s.generic_mean, s.generic_std));
  table.push_back({"Generated"});
  for (const auto& s : rep.groups) table.back().push_back(cell(s.generated_mean, s.generated_std));
  table.push_back({"Absolute Error"});
  for (const auto& s : rep.groups) table.back().push_back(num(s.abs_error));
  table.push_back({"Samples"});
  for (const auto& s : rep.groups)
    table.back().push_back(std::to_string(s.generated_count) + "/" +
                           std::to_string(s.generic_count));

  // Cells hold multi-byte glyphs; pad on display columns, not bytes.
  auto display_width = [](const std::string& s) {
    size_t w = 0;
    for (char ch : s)
      if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++w;
    return w;
  };
  std::vector<size_t> widths(1 + kNumGroups, 0);
  for (const auto& row : table)
    for (size_t c = 0; c < row.size(); ++c)
      widths[c] = std::max(widths[c], display_width(row[c]));

  std::ostringstream out;
  out << "Age translation accuracy (estimated age per target group)\n";
  for (const auto& row : table) {
    for (size_t c = 0; c < row.size(); ++c) {
      out << row[c];
      if (c + 1 < row.size()) out << std::string(widths[c] - display_width(row[c]) + 2, ' ');
    }
    out << '\n';
  }
  std::ostringstream thr;
  thr << rep.identity_threshold;
  out << "Identity preservation: " << format_rate_mean(rep.identity_rate, rep.identity_mean)
      << " at threshold " << thr.str() << '\n';
  return out.str();
}

inline void write_report(const std::filesystem::path& dir, const EvalReport& rep) {
  std::filesystem::create_directories(dir);
  const auto json_path = dir / "report.json";
  std::ofstream jout(json_path);
  if (!jout) throw DataError("cannot write " + json_path.string());
  jout << report_to_json(rep).dump(2) << '\n';
  const auto text_path = dir / "report.txt";
  std::ofstream tout(text_path);
  if (!tout) throw DataError("cannot write " + text_path.string());
  tout << report_to_text(rep);
  if (!jout || !tout) throw DataError("write failed under " + dir.string());
}

/// Routes one face through the proper translator: progression for older
/// targets, regression for younger ones, and a self-reconstruction (the
/// progressor for the two younger source groups, the regressor otherwise)
/// when the target equals the source.
template <typename S>
Tensor<float> translate_face(Generator<S>& g_p, Generator<S>& g_r, const Tensor<float>& image,
                             const SemanticLayout& layout, int source_group, int target_group,
                             std::uint64_t noise_seed) {
  if (target_group < 0 || target_group >= kNumGroups)
    throw ConfigError("target group must be in [0, " + std::to_string(kNumGroups) + "), got " +
                      std::to_string(target_group));
  Generator<S>& g = target_group > source_group   ? g_p
                    : target_group < source_group ? g_r
                    : (source_group <= 1 ? g_p : g_r);
  const AgeCondition cond = make_condition(target_group, layout.height, layout.width);
  auto [face, m] = run_generator(g, image, layout, cond, noise_seed);
  return face.template cast<float>();
}

/// Estimates ages for both image populations and reduces them per group.
/// `group` on a generated image is its translation target; on a generic image
/// its annotation.
struct LabeledImage {
  const Tensor<float>* image = nullptr;
  const SemanticLayout* layout = nullptr;
  int group = 0;
};

using AgeEstimator = std::function<double(const Tensor<float>&, const SemanticLayout&)>;

inline std::array<GroupStat, kNumGroups> age_translation_accuracy(
    const std::vector<LabeledImage>& generated, const std::vector<LabeledImage>& generic,
    const AgeEstimator& estimate) {
  std::vector<SampleRecord> records;
  records.reserve(generated.size() + generic.size());
  int id = 0;
  auto add = [&](const LabeledImage& li, const char* population) {
    SampleRecord r;
    r.subject_id = id++;
    r.population = population;
    r.source_group = r.target_group = li.group;
    r.estimated_age = estimate(*li.image, *li.layout);
    r.identity_score = 100.0;
    records.push_back(std::move(r));
  };
  for (const auto& li : generated) add(li, "generated");
  for (const auto& li : generic) add(li, "generic");
  return build_report(records).groups;
}

struct EvalOptions {
  double threshold = kIdentityThreshold;
  int max_subjects = 0;
  bool grids = false;
  std::uint64_t seed = 1;
};

/// Full synthetic-set evaluation pass: the generic population is every
/// dataset image scored by the stripe oracle; the generated population is
/// each chosen source image translated into all four groups, age-estimated by
/// the oracle and identity-scored against its source. Subjects are drawn
/// round-robin across source groups so caps keep the sources balanced.
template <typename S>
std::vector<SampleRecord> synthetic_eval_records(Generator<S>& g_p, Generator<S>& g_r,
                                                 const Dataset& ds, const EvalOptions& opt,
                                                 const std::filesystem::path& grid_dir = {}) {
  std::vector<SampleRecord> records;
  for (int i = 0; i < ds.size(); ++i) {
    const Sample& s = ds.samples[static_cast<size_t>(i)];
    SampleRecord r;
    r.subject_id = i;
    r.population = "generic";
    r.source_group = r.target_group = s.group;
    r.estimated_age = synthetic_age_oracle(s.image, s.layout);
    r.identity_score = identity_ncc_score(s.image, s.image, s.layout);
    records.push_back(std::move(r));
  }

  std::vector<int> subjects;
  for (size_t k = 0; subjects.size() < static_cast<size_t>(ds.size()); ++k) {
    bool any = false;
    for (const auto& bucket : ds.by_group) {
      if (k < bucket.size()) {
        subjects.push_back(bucket[k]);
        any = true;
      }
    }
    if (!any) break;
  }
  if (opt.max_subjects > 0 && static_cast<int>(subjects.size()) > opt.max_subjects)
    subjects.resize(static_cast<size_t>(opt.max_subjects));

  const Rng base(opt.seed);
  for (int i : subjects) {
    const Sample& s = ds.samples[static_cast<size_t>(i)];
    std::array<Tensor<float>, kNumGroups> faces;
    for (int t = 0; t < kNumGroups; ++t) {
      const std::uint64_t noise_seed =
          base.derive(kEvalNoiseTag, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t))
              .next_u64();
      faces[static_cast<size_t>(t)] =
          translate_face(g_p, g_r, s.image, s.layout, s.group, t, noise_seed);
      SampleRecord r;
      r.subject_id = i;
      r.population = "generated";
      r.source_group = s.group;
      r.target_group = t;
      r.estimated_age = synthetic_age_oracle(faces[static_cast<size_t>(t)], s.layout);
      r.identity_score = identity_ncc_score(s.image, faces[static_cast<size_t>(t)], s.layout);
      records.push_back(std::move(r));
    }
    if (opt.grids && !grid_dir.empty())
      write_subject_grid(grid_dir / ("subject_" + std::to_string(i) + ".png"), s.image, faces);
  }
  return records;
}

/// Share of generated records whose oracle estimate rounds to the requested
/// target group; the stripe-translation success rate on the synthetic set.
inline double oracle_target_match_rate(const std::vector<SampleRecord>& records) {
  int total = 0, matched = 0;
  for (const auto& r : records) {
    if (r.population != "generated") continue;
    ++total;
    if (static_cast<int>(std::lround(r.estimated_age)) == r.target_group) ++matched;
  }
  if (total == 0) throw DataError("no generated records");
  return 100.0 * matched / total;
}

}  // namespace nsg

#endif
