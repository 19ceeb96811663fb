#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "propensity/errors.hpp"
#include "propensity/gbdt.hpp"
#include "propensity/rng.hpp"
#include "propensity/stats.hpp"
#include "propensity/synthcity.hpp"

namespace propensity::config {

namespace detail {

inline void require_keys(const nlohmann::json& obj, const char* where,
                         std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(std::string("config: unknown key \"") + it.key() +
                        "\" in " + where);
  }
}

template <typename T>
void assign(const nlohmann::json& obj, const char* key, T& target) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for \"") + key +
                      "\": " + e.what());
  }
}

template <typename T>
void assign_optional(const nlohmann::json& obj, const char* key,
                     std::optional<T>& target) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T value{};
  assign(obj, key, value);
  target = value;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[(std::size_t)i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace detail

struct KdeConfig {
  double cell_size = 250.0;
  double quantile = 0.95;
  double cutoff_bandwidths = 6.5;
  double pad_bandwidths = 4.5;
  std::optional<double> bandwidth;  // null => Silverman's rule
};

struct StatsConfig {
  stats::TestLevel level = stats::TestLevel::building;
  bool pooled = false;
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::optional<std::string> data_dir;  // null => read inputs from the out dir
  std::optional<int> target_season;     // null => latest observed season
  gbdt::ThresholdObjective threshold_objective =
      gbdt::ThresholdObjective::youden;
  gbdt::Params model;
  KdeConfig kde;
  StatsConfig stats_cfg;
  synth::SynthConfig synth;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = std::to_string(seed);
    j["data_dir"] = data_dir ? nlohmann::json(*data_dir) : nlohmann::json();
    j["target_season"] =
        target_season ? nlohmann::json(*target_season) : nlohmann::json();
    j["threshold_objective"] = gbdt::to_string(threshold_objective);
    j["model"] = {{"n_trees", model.n_trees},
                  {"max_depth", model.max_depth},
                  {"learning_rate", model.learning_rate},
                  {"min_leaf", model.min_leaf},
                  {"undersample_ratio", model.undersample_ratio},
                  {"use_histogram", model.use_histogram},
                  {"histogram_bins", model.histogram_bins}};
    j["kde"] = {{"cell_size", kde.cell_size},
                {"quantile", kde.quantile},
                {"cutoff_bandwidths", kde.cutoff_bandwidths},
                {"pad_bandwidths", kde.pad_bandwidths},
                {"bandwidth", kde.bandwidth ? nlohmann::json(*kde.bandwidth)
                                            : nlohmann::json()}};
    j["stats"] = {{"level", stats::to_string(stats_cfg.level)},
                  {"pooled", stats_cfg.pooled}};
    j["synth"] = {{"n_buildings", synth.n_buildings},
                  {"n_block_groups", synth.n_block_groups},
                  {"violation_base_rate", synth.violation_base_rate},
                  {"false_complaint_rate", synth.false_complaint_rate},
                  {"offseason_event_rate", synth.offseason_event_rate},
                  {"demo_correlation", synth.demo_correlation},
                  {"noise_sd", synth.noise_sd},
                  {"propensity_intercept", synth.propensity_intercept},
                  {"risk_weights", synth.risk_weights},
                  {"propensity_weights", synth.propensity_weights},
                  {"train_season_years", synth.train_season_years},
                  {"eval_season_year", synth.eval_season_year}};
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    detail::require_keys(j, "top level",
                         {"seed", "data_dir", "target_season",
                          "threshold_objective", "model", "kde", "stats",
                          "synth"});
    RunConfig cfg;
    if (j.contains("seed") && !j.at("seed").is_null()) {
      const auto& s = j.at("seed");
      if (s.is_string()) {
        try {
          cfg.seed = std::stoull(s.get<std::string>());
        } catch (const std::exception&) {
          throw ConfigError("config: seed string is not an unsigned integer");
        }
      } else if (s.is_number_unsigned() || s.is_number_integer()) {
        const auto v = s.get<std::int64_t>();
        if (v < 0) throw ConfigError("config: seed must be non-negative");
        cfg.seed = (std::uint64_t)v;
      } else {
        throw ConfigError("config: seed must be an integer or decimal string");
      }
    }
    detail::assign_optional(j, "data_dir", cfg.data_dir);
    detail::assign_optional(j, "target_season", cfg.target_season);
    if (j.contains("threshold_objective") &&
        !j.at("threshold_objective").is_null())
      cfg.threshold_objective =
          gbdt::parse_objective(j.at("threshold_objective").get<std::string>());
    if (j.contains("model")) {
      const auto& m = j.at("model");
      detail::require_keys(m, "model",
                           {"n_trees", "max_depth", "learning_rate",
                            "min_leaf", "undersample_ratio", "use_histogram",
                            "histogram_bins"});
      detail::assign(m, "n_trees", cfg.model.n_trees);
      detail::assign(m, "max_depth", cfg.model.max_depth);
      detail::assign(m, "learning_rate", cfg.model.learning_rate);
      detail::assign(m, "min_leaf", cfg.model.min_leaf);
      detail::assign(m, "undersample_ratio", cfg.model.undersample_ratio);
      detail::assign(m, "use_histogram", cfg.model.use_histogram);
      detail::assign(m, "histogram_bins", cfg.model.histogram_bins);
    }
    if (j.contains("kde")) {
      const auto& k = j.at("kde");
      detail::require_keys(k, "kde",
                           {"cell_size", "quantile", "cutoff_bandwidths",
                            "pad_bandwidths", "bandwidth"});
      detail::assign(k, "cell_size", cfg.kde.cell_size);
      detail::assign(k, "quantile", cfg.kde.quantile);
      detail::assign(k, "cutoff_bandwidths", cfg.kde.cutoff_bandwidths);
      detail::assign(k, "pad_bandwidths", cfg.kde.pad_bandwidths);
      detail::assign_optional(k, "bandwidth", cfg.kde.bandwidth);
    }
    if (j.contains("stats")) {
      const auto& s = j.at("stats");
      detail::require_keys(s, "stats", {"level", "pooled"});
      if (s.contains("level") && !s.at("level").is_null())
        cfg.stats_cfg.level =
            stats::parse_test_level(s.at("level").get<std::string>());
      detail::assign(s, "pooled", cfg.stats_cfg.pooled);
    }
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      detail::require_keys(
          s, "synth",
          {"n_buildings", "n_block_groups", "violation_base_rate",
           "false_complaint_rate", "offseason_event_rate", "demo_correlation",
           "noise_sd", "propensity_intercept", "risk_weights",
           "propensity_weights", "train_season_years", "eval_season_year"});
      detail::assign(s, "n_buildings", cfg.synth.n_buildings);
      detail::assign(s, "n_block_groups", cfg.synth.n_block_groups);
      detail::assign(s, "violation_base_rate", cfg.synth.violation_base_rate);
      detail::assign(s, "false_complaint_rate", cfg.synth.false_complaint_rate);
      detail::assign(s, "offseason_event_rate", cfg.synth.offseason_event_rate);
      detail::assign(s, "demo_correlation", cfg.synth.demo_correlation);
      detail::assign(s, "noise_sd", cfg.synth.noise_sd);
      detail::assign(s, "propensity_intercept", cfg.synth.propensity_intercept);
      detail::assign(s, "risk_weights", cfg.synth.risk_weights);
      detail::assign(s, "propensity_weights", cfg.synth.propensity_weights);
      detail::assign(s, "train_season_years", cfg.synth.train_season_years);
      detail::assign(s, "eval_season_year", cfg.synth.eval_season_year);
    }
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
  }

  // Stable content hash of the effective configuration (after CLI overrides):
  // FNV-1a over the canonical sorted-key dump.
  std::string hash() const {
    return detail::hex64(rng::fnv1a64(to_json().dump()));
  }
};

}  // namespace propensity::config
