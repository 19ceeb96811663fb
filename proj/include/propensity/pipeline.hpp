#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "propensity/classify.hpp"
#include "propensity/config.hpp"
#include "propensity/csv.hpp"
#include "propensity/data.hpp"
#include "propensity/errors.hpp"
#include "propensity/features.hpp"
#include "propensity/gbdt.hpp"
#include "propensity/io.hpp"
#include "propensity/kde.hpp"
#include "propensity/log.hpp"
#include "propensity/rng.hpp"
#include "propensity/stats.hpp"
#include "propensity/synthcity.hpp"
#include "propensity/version.hpp"

namespace propensity::pipeline {

struct StageContext {
  config::RunConfig cfg;
  std::string out_dir;
  std::string data_dir;  // where the dataset CSVs live (synth writes here)
  std::string config_hash;
};

inline StageContext make_context(const config::RunConfig& cfg,
                                 const std::string& out_dir) {
  StageContext ctx;
  ctx.cfg = cfg;
  ctx.out_dir = out_dir;
  ctx.data_dir = cfg.data_dir.value_or(out_dir);
  ctx.config_hash = cfg.hash();
  std::filesystem::create_directories(out_dir);
  return ctx;
}

namespace detail {

inline std::string join(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline std::optional<nlohmann::json> read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  return j;
}

inline std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path + " for hashing");
  std::uint64_t h = 14695981039346656037ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h = rng::fnv1a64(buf, (std::size_t)in.gcount(), h);
  return config::detail::hex64(h);
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline constexpr const char* kStageOrder[] = {"synth",   "ingest",  "train",
                                              "classify", "hotspot", "compare"};

// Upserts one stage record into manifest.json. The manifest carries the run
// identity (seed + config hash); a record written under a different identity
// resets the stage list so standalone commands compose cleanly.
inline void manifest_upsert(const StageContext& ctx, const std::string& name,
                            const std::string& status, double wall_ms,
                            const std::vector<std::string>& outputs,
                            const nlohmann::json& details = nlohmann::json(),
                            const nlohmann::json& inputs = nlohmann::json()) {
  const std::string path = join(ctx.out_dir, "manifest.json");
  nlohmann::json m;
  if (auto existing = read_json_file(path)) m = std::move(*existing);
  const std::string seed_str = std::to_string(ctx.cfg.seed);
  if (!m.is_object() || m.value("seed", "") != seed_str ||
      m.value("config_hash", "") != ctx.config_hash)
    m = nlohmann::json::object();
  m["version"] = kVersion;
  m["seed"] = seed_str;
  m["config_hash"] = ctx.config_hash;
  if (!m.contains("inputs")) m["inputs"] = nlohmann::json::object();
  if (inputs.is_object())
    for (auto it = inputs.begin(); it != inputs.end(); ++it)
      m["inputs"][it.key()] = it.value();

  nlohmann::json record = {{"name", name},
                           {"status", status},
                           {"wall_ms", wall_ms},
                           {"outputs", outputs}};
  if (!details.is_null()) record["details"] = details;

  std::map<std::string, nlohmann::json> by_name;
  if (m.contains("stages") && m["stages"].is_array())
    for (auto& s : m["stages"])
      if (s.is_object() && s.contains("name"))
        by_name[s["name"].get<std::string>()] = s;
  by_name[name] = std::move(record);

  nlohmann::json stages = nlohmann::json::array();
  for (const char* stage : kStageOrder) {
    auto it = by_name.find(stage);
    if (it != by_name.end()) stages.push_back(it->second);
  }
  m["stages"] = std::move(stages);
  write_json_file(path, m);
}

inline Matrix subset_rows(const Matrix& m,
                          std::span<const std::size_t> rows) {
  Matrix out;
  out.n_rows = rows.size();
  out.specs = m.specs;
  out.columns.assign(m.specs.size(), std::vector<double>(rows.size()));
  for (std::size_t c = 0; c < m.specs.size(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r)
      out.columns[c][r] = m.columns[c][rows[r]];
  return out;
}

template <typename T>
std::vector<T> gather(std::span<const T> values,
                      std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(values[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ingest: load the dataset CSVs, attach events, resolve the target season

struct Ingested {
  std::vector<BuildingRecord> buildings;
  std::vector<BlockGroupProfile> profiles;  // filled when requested
  io::AttachReport report;
  std::vector<HeatingSeason> seasons;  // observed, ascending
  HeatingSeason target{0};
  nlohmann::json input_hashes;  // file name -> content hash
};

inline Ingested ingest(const StageContext& ctx, bool need_profiles) {
  detail::Timer timer;
  Ingested in;
  const std::string b_path = detail::join(ctx.data_dir, "buildings.csv");
  const std::string c_path = detail::join(ctx.data_dir, "complaints.csv");
  const std::string v_path = detail::join(ctx.data_dir, "violations.csv");
  const std::string g_path = detail::join(ctx.data_dir, "blockgroups.csv");

  auto loaded = io::load_buildings(b_path);
  in.buildings = std::move(loaded.buildings);
  if (in.buildings.empty())
    throw DataError("ingest: no valid building rows in " + b_path);
  auto complaints = io::load_events(c_path);
  auto violations = io::load_events(v_path);
  in.report = io::attach_events(in.buildings, complaints.events,
                                violations.events);

  io::BlockGroupsLoadResult bg_loaded;
  if (need_profiles) {
    bg_loaded = io::load_blockgroups(g_path);
    in.profiles = std::move(bg_loaded.profiles);
  }

  for (const auto& [season, count] : in.buildings.front().complaint_count)
    in.seasons.push_back(season);
  if (in.seasons.empty())
    throw DataError("ingest: no heating-season events observed");
  if (ctx.cfg.target_season) {
    in.target = HeatingSeason{*ctx.cfg.target_season};
    if (std::find(in.seasons.begin(), in.seasons.end(), in.target) ==
        in.seasons.end())
      throw DataError("ingest: configured target season " + in.target.label() +
                      " has no observed events");
  } else {
    in.target = in.seasons.back();
  }

  in.input_hashes = nlohmann::json::object();
  in.input_hashes["buildings.csv"] = detail::file_hash_hex(b_path);
  in.input_hashes["complaints.csv"] = detail::file_hash_hex(c_path);
  in.input_hashes["violations.csv"] = detail::file_hash_hex(v_path);
  if (need_profiles)
    in.input_hashes["blockgroups.csv"] = detail::file_hash_hex(g_path);

  // Side artifacts: attach summary plus any rejection/unmatched diagnostics.
  std::vector<std::string> outputs = {"attach_report.json"};
  if (!loaded.report.rejections.empty()) {
    io::write_rejection_report(
        loaded.report,
        detail::join(ctx.out_dir, "rejections_buildings.csv"));
    outputs.push_back("rejections_buildings.csv");
  }
  if (!complaints.report.rejections.empty()) {
    io::write_rejection_report(
        complaints.report,
        detail::join(ctx.out_dir, "rejections_complaints.csv"));
    outputs.push_back("rejections_complaints.csv");
  }
  if (!violations.report.rejections.empty()) {
    io::write_rejection_report(
        violations.report,
        detail::join(ctx.out_dir, "rejections_violations.csv"));
    outputs.push_back("rejections_violations.csv");
  }
  if (!in.report.unmatched.empty()) {
    io::write_unmatched_events(
        in.report.unmatched, detail::join(ctx.out_dir, "unmatched_events.csv"));
    outputs.push_back("unmatched_events.csv");
  }

  nlohmann::json seasons = nlohmann::json::array();
  for (const auto& s : in.seasons) seasons.push_back(s.label());
  nlohmann::json report = {
      {"version", kVersion},
      {"seed", std::to_string(ctx.cfg.seed)},
      {"config_hash", ctx.config_hash},
      {"buildings_loaded", in.buildings.size()},
      {"buildings_rejected", loaded.report.rejections.size()},
      {"complaints_attached", in.report.complaints_attached},
      {"violations_attached", in.report.violations_attached},
      {"off_season_complaints", in.report.off_season_complaints},
      {"off_season_violations", in.report.off_season_violations},
      {"unmatched_events", in.report.unmatched.size()},
      {"seasons", seasons},
      {"target_season", in.target.label()}};
  if (need_profiles) {
    report["blockgroups_loaded"] = in.profiles.size();
    report["blockgroups_rejected"] = bg_loaded.report.rejections.size();
  }
  detail::write_json_file(detail::join(ctx.out_dir, "attach_report.json"),
                          report);
  detail::manifest_upsert(ctx, "ingest", "ok", timer.ms(), outputs,
                  nlohmann::json{{"target_season", in.target.label()}},
                  in.input_hashes);
  log::info("ingest: " + std::to_string(in.buildings.size()) +
            " buildings, target season " + in.target.label());
  return in;
}

// ---------------------------------------------------------------------------
// synth

inline void run_synth(const StageContext& ctx) {
  detail::Timer timer;
  synth::SynthConfig scfg = ctx.cfg.synth;
  scfg.seed = ctx.cfg.seed;
  synth::SynthResult result = synth::generate(scfg);
  result.truth["config_hash"] = ctx.config_hash;
  result.truth["version"] = kVersion;
  synth::write_dataset(result, ctx.data_dir);
  detail::manifest_upsert(
      ctx, "synth", "ok", timer.ms(),
      {"buildings.csv", "complaints.csv", "violations.csv", "blockgroups.csv",
       "truth.json"},
      nlohmann::json{
          {"n_buildings", scfg.n_buildings},
          {"n_block_groups", scfg.effective_block_groups()},
          {"calibrated_intercept", result.calibrated_intercept}});
  log::info("synth: wrote " + std::to_string(result.buildings.size()) +
            " buildings to " + ctx.data_dir);
}

// ---------------------------------------------------------------------------
// train

struct TrainOutput {
  gbdt::Model model;
  FeatureSchema schema;
  HeatingSeason target{0};
  nlohmann::json metrics;
};

inline nlohmann::json eval_to_json(const gbdt::EvalResult& r) {
  return {{"tp", r.cm.tp},
          {"fp", r.cm.fp},
          {"tn", r.cm.tn},
          {"fn", r.cm.fn},
          {"accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"tpr", r.tpr},
          {"fpr", r.fpr},
          {"balanced_accuracy", r.balanced_accuracy}};
}

inline TrainOutput run_train(const StageContext& ctx) {
  Ingested in = ingest(ctx, false);
  detail::Timer timer;
  const std::size_t n = in.buildings.size();

  // Labels: history (any violation in a season before the target) trains the
  // model; the target season itself is the temporally held-out evaluation.
  std::vector<char> train_label(n, 0), eval_label(n, 0);
  bool any_prior_season = false;
  for (const auto& s : in.seasons)
    if (s < in.target) any_prior_season = true;
  if (!any_prior_season)
    throw DataError(
        "train: no heating season precedes the target season " +
        in.target.label() + "; training needs at least one prior season");
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [season, flag] : in.buildings[i].violation_flag) {
      if (!flag) continue;
      if (season < in.target) train_label[i] = 1;
      if (season == in.target) eval_label[i] = 1;
    }
  }

  FeatureSchema schema = FeatureSchema::fit(in.buildings);
  Matrix features = schema.transform(in.buildings);

  // Stratified 80/20 fit/tune split on the training label.
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i)
    (train_label[i] ? pos : neg).push_back(i);
  rng::Stream split = rng::Stream::derive(ctx.cfg.seed, "train/split");
  split.shuffle(pos);
  split.shuffle(neg);
  std::vector<std::size_t> fit_idx, tune_idx;
  auto take = [&](const std::vector<std::size_t>& cls) {
    const std::size_t n_fit = 4 * cls.size() / 5;
    fit_idx.insert(fit_idx.end(), cls.begin(),
                   cls.begin() + (std::ptrdiff_t)n_fit);
    tune_idx.insert(tune_idx.end(), cls.begin() + (std::ptrdiff_t)n_fit,
                    cls.end());
  };
  take(pos);
  take(neg);
  std::sort(fit_idx.begin(), fit_idx.end());
  std::sort(tune_idx.begin(), tune_idx.end());

  gbdt::Params params = ctx.cfg.model;
  params.seed = rng::derive_seed(ctx.cfg.seed, "train");

  Matrix fit_features = detail::subset_rows(features, fit_idx);
  std::vector<char> fit_labels =
      detail::gather(std::span<const char>(train_label), fit_idx);
  gbdt::Model model = gbdt::fit(fit_features, fit_labels, params);

  // Tune the decision threshold on the held-out tune split; fall back to the
  // fit split when the tune split is degenerate (tiny datasets).
  std::vector<char> tune_labels =
      detail::gather(std::span<const char>(train_label), tune_idx);
  const bool tune_usable =
      std::count(tune_labels.begin(), tune_labels.end(), 1) > 0 &&
      std::count(tune_labels.begin(), tune_labels.end(), 0) > 0;
  if (tune_usable) {
    Matrix tune_features = detail::subset_rows(features, tune_idx);
    model.threshold = gbdt::tune_threshold(model, tune_features, tune_labels,
                                           ctx.cfg.threshold_objective);
  } else {
    model.threshold = gbdt::tune_threshold(model, fit_features, fit_labels,
                                           ctx.cfg.threshold_objective);
  }

  // Evaluate on the target season: natural class balance plus a balanced
  // subsample (all of the rarer class, equal count of the other).
  std::vector<double> scores = gbdt::predict_proba(model, features);
  gbdt::EvalResult natural =
      gbdt::evaluate_scores(scores, eval_label, model.threshold);
  std::vector<std::size_t> eval_pos, eval_neg;
  for (std::size_t i = 0; i < n; ++i)
    (eval_label[i] ? eval_pos : eval_neg).push_back(i);
  nlohmann::json balanced_json;
  if (!eval_pos.empty() && !eval_neg.empty()) {
    const bool pos_rare = eval_pos.size() <= eval_neg.size();
    const auto& rare = pos_rare ? eval_pos : eval_neg;
    const auto& common = pos_rare ? eval_neg : eval_pos;
    rng::Stream balance =
        rng::Stream::derive(ctx.cfg.seed, "train/eval_balance");
    std::vector<std::size_t> picked =
        balance.sample_without_replacement(common.size(), rare.size());
    std::vector<std::size_t> idx = rare;
    for (std::size_t p : picked) idx.push_back(common[p]);
    std::sort(idx.begin(), idx.end());
    std::vector<double> s2 = detail::gather(std::span<const double>(scores), idx);
    std::vector<char> y2 =
        detail::gather(std::span<const char>(eval_label), idx);
    balanced_json =
        eval_to_json(gbdt::evaluate_scores(s2, y2, model.threshold));
    balanced_json["n"] = idx.size();
  }

  nlohmann::json importance = nlohmann::json::array();
  for (const auto& [name, weight] : gbdt::feature_importance(model))
    importance.push_back({{"feature", name}, {"weight", weight}});

  nlohmann::json metrics = {
      {"version", kVersion},
      {"seed", std::to_string(ctx.cfg.seed)},
      {"config_hash", ctx.config_hash},
      {"target_season", in.target.start_year},
      {"target_season_label", in.target.label()},
      {"threshold", model.threshold},
      {"threshold_objective", gbdt::to_string(ctx.cfg.threshold_objective)},
      {"train",
       {{"n", n},
        {"n_fit", fit_idx.size()},
        {"n_tune", tune_idx.size()},
        {"n_positive", pos.size()},
        {"final_deviance", model.train_deviance.empty()
                               ? nlohmann::json()
                               : nlohmann::json(model.train_deviance.back())},
        {"deviance", model.train_deviance}}},
      {"eval_natural", eval_to_json(natural)},
      {"eval_balanced", balanced_json},
      {"feature_importance", importance}};

  nlohmann::json model_file = {{"format_version", 1},
                               {"version", kVersion},
                               {"seed", std::to_string(ctx.cfg.seed)},
                               {"config_hash", ctx.config_hash},
                               {"target_season", in.target.start_year},
                               {"model", gbdt::model_to_json(model)},
                               {"schema", schema.to_json()}};
  detail::write_json_file(detail::join(ctx.out_dir, "model.json"), model_file);
  detail::write_json_file(detail::join(ctx.out_dir, "metrics.json"), metrics);
  detail::manifest_upsert(ctx, "train", "ok", timer.ms(),
                  {"model.json", "metrics.json"},
                  nlohmann::json{
                      {"threshold", model.threshold},
                      {"balanced_accuracy_natural", natural.balanced_accuracy},
                      {"n_fit", fit_idx.size()}});
  log::info("train: threshold " + csv::fmt_double(model.threshold) +
            ", natural balanced accuracy " +
            csv::fmt_double(natural.balanced_accuracy));

  TrainOutput out;
  out.model = std::move(model);
  out.schema = schema;
  out.target = in.target;
  out.metrics = std::move(metrics);
  return out;
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyOutput {
  std::vector<classify::ClassifiedBuilding> classified;
  classify::ClassificationSummary summary;
};

inline ClassifyOutput run_classify(const StageContext& ctx) {
  Ingested in = ingest(ctx, true);
  detail::Timer timer;

  const std::string model_path = detail::join(ctx.out_dir, "model.json");
  auto model_json = detail::read_json_file(model_path);
  if (!model_json)
    throw DataError("classify: missing or unreadable " + model_path +
                    " (run train first)");
  gbdt::Model model;
  FeatureSchema schema;
  HeatingSeason model_target{0};
  try {
    model = gbdt::model_from_json(model_json->at("model"));
    schema = FeatureSchema::from_json(model_json->at("schema"));
    model_target =
        HeatingSeason{model_json->at("target_season").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("classify: malformed model file: " +
                    std::string(e.what()));
  }
  if (model_target != in.target)
    throw ConfigError("classify: model was trained for season " +
                      model_target.label() + " but the run targets " +
                      in.target.label());

  Matrix features = schema.transform(in.buildings);
  std::vector<double> scores = gbdt::predict_proba(model, features);

  ClassifyOutput out;
  out.classified.reserve(in.buildings.size());
  for (std::size_t i = 0; i < in.buildings.size(); ++i) {
    const auto& b = in.buildings[i];
    classify::ClassifiedBuilding c;
    c.bbl = b.bbl;
    c.predicted_probability = scores[i];
    c.predicted_violation = scores[i] >= model.threshold;
    c.complaint_count = b.complaints_in(in.target);
    c.complained = classify::binarize_complaints(c.complaint_count);
    c.type = classify::classify_building(c.predicted_violation, c.complained);
    out.classified.push_back(std::move(c));
  }
  out.summary =
      classify::summarize(out.classified, model.threshold, in.target);

  classify::write_classified(out.classified,
                             detail::join(ctx.out_dir, "classified.csv"));

  nlohmann::json summary = {
      {"version", kVersion},
      {"seed", std::to_string(ctx.cfg.seed)},
      {"config_hash", ctx.config_hash},
      {"season", in.target.start_year},
      {"season_label", in.target.label()},
      {"threshold", out.summary.threshold},
      {"total", out.summary.total},
      {"counts",
       {{"type1", out.summary.counts[0]},
        {"type2", out.summary.counts[1]},
        {"type3", out.summary.counts[2]},
        {"type4", out.summary.counts[3]}}},
      {"shares",
       {{"type1", out.summary.shares[0]},
        {"type2", out.summary.shares[1]},
        {"type3", out.summary.shares[2]},
        {"type4", out.summary.shares[3]}}},
      {"as_expected", out.summary.as_expected},
      {"mismatched", out.summary.mismatched}};

  // Per-capita complaint rates for the target season by block group.
  std::unordered_map<std::string, long long> complaints_by_bg;
  long long unresolved_buildings = 0;
  {
    std::unordered_map<std::string, bool> known;
    for (const auto& p : in.profiles) known.emplace(p.block_group_id, true);
    for (const auto& b : in.buildings) {
      if (known.count(b.block_group_id) == 0) {
        ++unresolved_buildings;
        continue;
      }
      complaints_by_bg[b.block_group_id] += b.complaints_in(in.target);
    }
  }
  {
    csv::Writer w(detail::join(ctx.out_dir, "rates.csv"));
    w.write_row(std::vector<std::string>{"block_group_id", "complaints",
                                         "population", "rate",
                                         "undefined_rate"});
    for (const auto& p : in.profiles) {
      auto it = complaints_by_bg.find(p.block_group_id);
      const long long complaints = it == complaints_by_bg.end() ? 0 : it->second;
      const bool undefined = p.population <= 0;
      w.write_row(std::vector<std::string>{
          p.block_group_id, csv::fmt_int(complaints),
          csv::fmt_int(p.population),
          undefined ? ""
                    : csv::fmt_double(per_capita_rate(complaints,
                                                      p.population)),
          undefined ? "true" : "false"});
    }
    w.close();
  }
  summary["rate_unresolved_buildings"] = unresolved_buildings;
  detail::write_json_file(detail::join(ctx.out_dir, "summary.json"), summary);

  detail::manifest_upsert(ctx, "classify", "ok", timer.ms(),
                  {"classified.csv", "summary.json", "rates.csv"},
                  nlohmann::json{{"type2", out.summary.counts[1]},
                                 {"type3", out.summary.counts[2]},
                                 {"total", out.summary.total}});
  log::info("classify: " + std::to_string(out.summary.total) +
            " buildings, Type2 " + std::to_string(out.summary.counts[1]) +
            ", Type3 " + std::to_string(out.summary.counts[2]));
  return out;
}

// ---------------------------------------------------------------------------
// hotspot

inline std::vector<classify::ClassifiedBuilding> load_classified(
    const StageContext& ctx) {
  const std::string path = detail::join(ctx.out_dir, "classified.csv");
  if (!std::filesystem::exists(path))
    throw DataError("missing " + path + " (run classify first)");
  return classify::read_classified(path);
}

inline void run_hotspot(const StageContext& ctx) {
  Ingested in = ingest(ctx, false);
  detail::Timer timer;
  auto classified = load_classified(ctx);

  std::unordered_map<std::string, const BuildingRecord*> by_bbl;
  by_bbl.reserve(in.buildings.size());
  for (const auto& b : in.buildings) by_bbl.emplace(b.bbl, &b);

  std::vector<std::string> outputs;
  nlohmann::json details;
  struct DirSpec {
    classify::BuildingType type;
    const char* key;        // "under" | "over"
    const char* direction;  // GeoJSON property
  };
  const DirSpec dirs[] = {
      {classify::BuildingType::type2, "under", "under_reporting"},
      {classify::BuildingType::type3, "over", "over_reporting"}};
  for (const auto& d : dirs) {
    std::vector<geo::Point> points;
    for (const auto& c : classified) {
      if (c.type != d.type) continue;
      auto it = by_bbl.find(c.bbl);
      if (it == by_bbl.end())
        throw DataError(
            "hotspot: classified bbl '" + c.bbl +
            "' not present in buildings.csv; dataset and classification "
            "disagree");
      points.push_back({it->second->x, it->second->y});
    }
    const std::string surface_name = std::string("surface_") + d.key + ".csv";
    const std::string geo_name =
        std::string("hotspots_") + d.key + ".geojson";
    if (points.empty() ||
        (points.size() < 2 && !ctx.cfg.kde.bandwidth.has_value())) {
      details[d.key] = {{"status", "skipped_empty"},
                        {"n_points", points.size()}};
      continue;
    }
    const double bandwidth = ctx.cfg.kde.bandwidth
                                 ? *ctx.cfg.kde.bandwidth
                                 : geo::silverman_bandwidth(points);
    // Cell edge capped at h/2 so the discretized surface keeps its mass.
    const double cell = std::min(ctx.cfg.kde.cell_size, bandwidth / 2.0);
    geo::GridSpec grid = geo::make_grid(points, bandwidth, cell,
                                        ctx.cfg.kde.pad_bandwidths);
    geo::DensitySurface surface =
        geo::kde(points, bandwidth, grid, ctx.cfg.kde.cutoff_bandwidths);
    geo::HotspotResult hs = geo::hotspots(surface, ctx.cfg.kde.quantile);
    geo::write_surface_csv(surface, detail::join(ctx.out_dir,
                                                 surface_name.c_str()));
    nlohmann::json gj = geo::to_geojson(hs, d.direction, bandwidth);
    gj["properties"] = {{"version", kVersion},
                        {"seed", std::to_string(ctx.cfg.seed)},
                        {"config_hash", ctx.config_hash},
                        {"direction", d.direction},
                        {"season", in.target.label()},
                        {"n_points", points.size()},
                        {"bandwidth", bandwidth},
                        {"cell_size", surface.cell_size},
                        {"quantile", hs.quantile},
                        {"threshold_density", hs.threshold_density},
                        {"mass", surface.mass()}};
    detail::write_json_file(detail::join(ctx.out_dir, geo_name.c_str()), gj);
    outputs.push_back(surface_name);
    outputs.push_back(geo_name);
    details[d.key] = {{"status", "ok"},
                      {"n_points", points.size()},
                      {"bandwidth", bandwidth},
                      {"polygons", hs.polygons.size()},
                      {"mass", surface.mass()}};
  }
  detail::manifest_upsert(ctx, "hotspot", "ok", timer.ms(), outputs, details);
  log::info("hotspot: " + details.dump());
}

// ---------------------------------------------------------------------------
// compare

inline stats::CompareResult run_compare(const StageContext& ctx) {
  Ingested in = ingest(ctx, true);
  detail::Timer timer;
  auto classified = load_classified(ctx);

  std::unordered_map<std::string, std::string> building_block_group;
  building_block_group.reserve(in.buildings.size());
  for (const auto& b : in.buildings)
    building_block_group.emplace(b.bbl, b.block_group_id);

  stats::CompareOptions opt;
  opt.level = ctx.cfg.stats_cfg.level;
  opt.pooled = ctx.cfg.stats_cfg.pooled;
  stats::CompareResult result =
      stats::compare_groups(classified, building_block_group, in.profiles,
                            opt);
  stats::write_ttests(result.tests, detail::join(ctx.out_dir, "ttests.csv"));
  detail::manifest_upsert(ctx, "compare", "ok", timer.ms(), {"ttests.csv"},
                  nlohmann::json{
                      {"level", stats::to_string(opt.level)},
                      {"pooled", opt.pooled},
                      {"n_under", result.n_under},
                      {"n_over", result.n_over},
                      {"excluded_unresolvable", result.excluded_unresolvable}});
  log::info("compare: n_under " + std::to_string(result.n_under) +
            ", n_over " + std::to_string(result.n_over));
  return result;
}

// ---------------------------------------------------------------------------
// pipeline: all stages in order, each reading the previous stage's files so
// a pipeline run and the five standalone commands produce identical bytes.

inline void run_pipeline(const StageContext& ctx) {
  run_synth(ctx);
  run_train(ctx);
  run_classify(ctx);
  run_hotspot(ctx);
  run_compare(ctx);
}

}  // namespace propensity::pipeline
