#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "propensity/csv.hpp"
#include "propensity/data.hpp"
#include "propensity/errors.hpp"
#include "propensity/gbdt.hpp"
#include "propensity/io.hpp"
#include "propensity/rng.hpp"
#include "propensity/seasons.hpp"

namespace propensity::synth {

// Reporting-propensity loadings injected into the synthetic city. The
// shipped defaults under-weight limited-English, high-unemployment, and
// high-minority block groups and over-weight affluent/older/educated ones —
// the direction of the reporting-bias findings the pipeline must recover.
inline std::map<std::string, double> reference_propensity_weights() {
  return {{"pct_limited_english", -1.0}, {"unemployment_rate", -1.0},
          {"pct_minority", -1.0},        {"median_income", 1.0},
          {"pct_over70", 1.0},           {"pct_bachelor_plus", 1.0}};
}

struct SynthConfig {
  std::size_t n_buildings = 20000;
  std::size_t n_block_groups = 0;  // 0 => max(1, n_buildings / 50)
  std::uint64_t seed = 42;
  double violation_base_rate = 0.0514;
  double false_complaint_rate = 0.10;
  double offseason_event_rate = 0.005;
  double demo_correlation = 0.7;  // shared-factor loading across demographics
  double noise_sd = 0.35;         // latent violation-risk noise
  double propensity_intercept = 0.0;
  std::map<std::string, double> risk_weights = {
      {"building_age", 1.4}, {"boiler_age", 1.0}, {"value_per_sqft", -0.9},
      {"units", 0.6},        {"has_super", -0.7}, {"boiler_type", 0.9}};
  std::map<std::string, double> propensity_weights =
      reference_propensity_weights();
  std::vector<int> train_season_years = {2013, 2014, 2015};
  int eval_season_year = 2016;

  std::size_t effective_block_groups() const {
    if (n_block_groups > 0) return n_block_groups;
    return std::max<std::size_t>(1, n_buildings / 50);
  }
};

struct SynthResult {
  std::vector<BuildingRecord> buildings;  // events attached per season
  std::vector<BlockGroupProfile> profiles;
  std::vector<io::Event> complaints;  // raw lists incl. off-season events
  std::vector<io::Event> violations;
  io::AttachReport attach_report;
  double calibrated_intercept = 0.0;
  nlohmann::json truth;
};

namespace detail {

inline double clampd(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

struct Standardizer {
  double mean = 0.0, sd = 0.0;
  static Standardizer fit(std::span<const double> xs) {
    Standardizer s;
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / (double)xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = xs.size() > 1 ? std::sqrt(ss / (double)(xs.size() - 1)) : 0.0;
    return s;
  }
  double z(double x) const { return sd > 0.0 ? (x - mean) / sd : 0.0; }
};

inline int pick_level(rng::Stream& stream, std::span<const double> probs) {
  double u = stream.uniform(), acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return (int)k;
  }
  return (int)probs.size() - 1;
}

inline DateTime random_in_season(rng::Stream& stream, int start_year) {
  static constexpr int kMonths[8] = {10, 11, 12, 1, 2, 3, 4, 5};
  const int month = kMonths[stream.below(8)];
  const int year = month >= 10 ? start_year : start_year + 1;
  DateTime dt;
  dt.year = year;
  dt.month = month;
  dt.day = 1 + (int)stream.below((std::uint64_t)days_in_month(year, month));
  dt.hour = (int)stream.below(24);
  dt.minute = (int)stream.below(60);
  dt.second = 0;
  return dt;
}

inline DateTime random_off_season(rng::Stream& stream, int year) {
  DateTime dt;
  dt.year = year;
  dt.month = 6 + (int)stream.below(4);  // June through September
  dt.day = 1 + (int)stream.below((std::uint64_t)days_in_month(year, dt.month));
  dt.hour = (int)stream.below(24);
  dt.minute = (int)stream.below(60);
  dt.second = 0;
  return dt;
}

inline std::string padded_id(const char* prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  std::string out(prefix);
  out.append((std::size_t)std::max(0, width - (int)digits.size()), '0');
  out += digits;
  return out;
}

}  // namespace detail

// Generates the synthetic city: correlated block-group demographics, building
// features from plausible ranges, a latent logistic violation-risk model with
// a bisection-calibrated intercept, and complaint reporting filtered through
// a demographics-dependent propensity — the injected ground truth.
inline SynthResult generate(const SynthConfig& cfg) {
  if (!(cfg.violation_base_rate > 0.0) || !(cfg.violation_base_rate < 1.0))
    throw ConfigError("synth: violation_base_rate must lie in (0, 1)");
  if (cfg.n_buildings < 1) throw ConfigError("synth: n_buildings must be >= 1");
  if (cfg.false_complaint_rate < 0 || cfg.false_complaint_rate > 1 ||
      cfg.offseason_event_rate < 0 || cfg.offseason_event_rate > 1)
    throw ConfigError("synth: rates must lie in [0, 1]");
  if (!(cfg.demo_correlation >= 0.0) || cfg.demo_correlation > 1.0)
    throw ConfigError("synth: demo_correlation must lie in [0, 1]");
  if (cfg.noise_sd < 0) throw ConfigError("synth: noise_sd must be >= 0");
  if (cfg.train_season_years.empty())
    throw ConfigError("synth: train_season_years must be non-empty");

  SynthResult out;
  const std::size_t nbg = cfg.effective_block_groups();
  const std::size_t n = cfg.n_buildings;
  const double lam = cfg.demo_correlation;
  const double resid = std::sqrt(1.0 - lam * lam);
  const int grid_cols = (int)std::ceil(std::sqrt((double)nbg));
  constexpr double kTile = 500.0;  // block-group tile edge, meters

  // --- block groups -------------------------------------------------------
  rng::Stream bgs = rng::Stream::derive(cfg.seed, "synth/blockgroups");
  out.profiles.resize(nbg);
  for (std::size_t b = 0; b < nbg; ++b) {
    BlockGroupProfile& p = out.profiles[b];
    p.block_group_id = detail::padded_id("bg_", b, 5);
    const double f = bgs.normal();
    auto latent = [&] { return lam * f + resid * bgs.normal(); };
    const double u_rent = latent(), u_vac = latent(), u_min = latent(),
                 u_inc = latent(), u_eng = latent(), u_mar = latent(),
                 u_une = latent(), u_o70 = latent(), u_bac = latent(),
                 u_alo = latent();
    const double e_fem = bgs.normal();
    p.median_rent = std::max(300.0, 1400.0 + 450.0 * u_rent);
    p.vacancy_rate = gbdt::sigmoid(-2.2 - 0.5 * u_vac);
    p.pct_minority = gbdt::sigmoid(-0.4 - 1.0 * u_min);
    p.median_income = std::max(8000.0, 65000.0 + 28000.0 * u_inc);
    p.pct_limited_english = gbdt::sigmoid(-1.6 - 0.8 * u_eng);
    p.pct_married = gbdt::sigmoid(-0.2 + 0.7 * u_mar);
    p.unemployment_rate = gbdt::sigmoid(-2.4 - 0.6 * u_une);
    p.pct_over70 = gbdt::sigmoid(-2.0 + 0.5 * u_o70);
    p.pct_white = 1.0 - p.pct_minority;
    p.pct_bachelor_plus = gbdt::sigmoid(-0.5 + 1.0 * u_bac);
    p.pct_female = gbdt::sigmoid(0.04 + 0.10 * e_fem);
    p.pct_living_alone = gbdt::sigmoid(-1.0 - 0.4 * u_alo);
    const double w = p.pct_white;
    const double black = (1.0 - w) * 0.45;
    const double hispanic = (1.0 - w) * 0.35;
    const double other = 1.0 - w - black - hispanic;
    p.race_shares = {w, black, hispanic, other};
    double sumsq = 0.0;
    for (double sh : p.race_shares) sumsq += sh * sh;
    p.race_diversity = 1.0 - sumsq;
    p.population = 400 + (long)bgs.below(1201);
  }

  // --- reporting propensity per block group -------------------------------
  std::vector<double> propensity(nbg, 0.0);
  {
    std::vector<double> column(nbg);
    std::vector<double> score(nbg, cfg.propensity_intercept);
    for (std::size_t k = 0; k < kProfileFeatureNames.size(); ++k) {
      const std::string name(kProfileFeatureNames[k]);
      auto it = cfg.propensity_weights.find(name);
      if (it == cfg.propensity_weights.end() || it->second == 0.0) continue;
      for (std::size_t b = 0; b < nbg; ++b)
        column[b] = profile_feature(out.profiles[b], k);
      const auto std_ = detail::Standardizer::fit(column);
      for (std::size_t b = 0; b < nbg; ++b)
        score[b] += it->second * std_.z(column[b]);
    }
    for (std::size_t b = 0; b < nbg; ++b)
      propensity[b] = gbdt::sigmoid(score[b]);
  }

  // --- buildings ----------------------------------------------------------
  rng::Stream bs = rng::Stream::derive(cfg.seed, "synth/buildings");
  out.buildings.resize(n);
  std::vector<std::size_t> bg_of(n);
  std::vector<double> true_age(n), true_boiler_age(n), true_value(n),
      units(n);
  std::vector<char> has_super(n);
  std::vector<int> boiler_type(n);
  std::vector<char> mask_boiler(n), mask_value(n);

  constexpr double kBasementP[3] = {0.55, 0.28, 0.17};
  constexpr double kProximityP[4] = {0.20, 0.25, 0.50, 0.05};
  constexpr double kOwnershipP[4] = {0.35, 0.30, 0.25, 0.10};
  constexpr double kBoilerP[5] = {0.55, 0.30, 0.08, 0.04, 0.03};
  const double log180 = std::log(180.0);

  for (std::size_t i = 0; i < n; ++i) {
    BuildingRecord& b = out.buildings[i];
    b.bbl = detail::padded_id("bbl_", i, 7);
    bg_of[i] = bs.below(nbg);
    b.block_group_id = out.profiles[bg_of[i]].block_group_id;
    const double tx = (double)((int)(bg_of[i] % (std::size_t)grid_cols)) * kTile;
    const double ty = (double)((int)(bg_of[i] / (std::size_t)grid_cols)) * kTile;
    b.x = tx + bs.uniform() * kTile;
    b.y = ty + bs.uniform() * kTile;

    true_age[i] = detail::clampd(bs.normal(62.0, 25.0), 0.0, 140.0);
    true_boiler_age[i] = detail::clampd(bs.normal(18.0, 9.0), 0.0, 60.0);
    true_value[i] = std::exp(bs.normal(log180, 0.5));
    units[i] = 3.0 + (double)bs.below(48);
    const double apu = detail::clampd(bs.normal(850.0, 220.0), 300.0, 2500.0);
    const double uu = bs.uniform();
    const double rr = 1.0 - 0.35 * uu * uu;
    const double width = detail::clampd(bs.normal(32.0, 10.0), 12.0, 80.0);
    const double depth = detail::clampd(bs.normal(55.0, 18.0), 20.0, 140.0);
    const int basement = detail::pick_level(bs, kBasementP);
    const int proximity = detail::pick_level(bs, kProximityP);
    const int ownership = detail::pick_level(bs, kOwnershipP);
    has_super[i] = bs.bernoulli(0.6) ? 1 : 0;
    boiler_type[i] = detail::pick_level(bs, kBoilerP);
    mask_boiler[i] = bs.bernoulli(0.06) ? 1 : 0;
    mask_value[i] = bs.bernoulli(0.04) ? 1 : 0;

    FeatureVector& fv = b.features;
    fv.value_per_sqft =
        mask_value[i] ? std::numeric_limits<double>::quiet_NaN() : true_value[i];
    fv.units = units[i];
    fv.area_per_unit = apu;
    fv.residential_ratio = rr;
    fv.width = width;
    fv.depth = depth;
    fv.building_age = true_age[i];
    fv.boiler_age = mask_boiler[i] ? std::numeric_limits<double>::quiet_NaN()
                                   : true_boiler_age[i];
    fv.basement_code = static_cast<BasementCode>(basement);
    fv.proximity_code = static_cast<ProximityCode>(proximity);
    fv.ownership_type = static_cast<OwnershipType>(ownership);
    fv.has_super = has_super[i] != 0;
    fv.boiler_type = static_cast<BoilerType>(boiler_type[i]);
  }

  // --- latent violation risk and calibrated intercept ---------------------
  constexpr double kBoilerScore[5] = {-0.5, 1.0, -1.0, 0.2, 0.0};
  auto weight = [&](const char* name) {
    auto it = cfg.risk_weights.find(name);
    return it == cfg.risk_weights.end() ? 0.0 : it->second;
  };
  const auto z_age = detail::Standardizer::fit(true_age);
  const auto z_boiler = detail::Standardizer::fit(true_boiler_age);
  const auto z_value = detail::Standardizer::fit(true_value);
  const auto z_units = detail::Standardizer::fit(units);
  std::vector<double> super01(n);
  for (std::size_t i = 0; i < n; ++i) super01[i] = has_super[i];
  const auto z_super = detail::Standardizer::fit(super01);

  rng::Stream noise = rng::Stream::derive(cfg.seed, "synth/noise");
  std::vector<double> risk(n);
  for (std::size_t i = 0; i < n; ++i) {
    risk[i] = weight("building_age") * z_age.z(true_age[i]) +
              weight("boiler_age") * z_boiler.z(true_boiler_age[i]) +
              weight("value_per_sqft") * z_value.z(true_value[i]) +
              weight("units") * z_units.z(units[i]) +
              weight("has_super") * z_super.z(super01[i]) +
              weight("boiler_type") * kBoilerScore[boiler_type[i]] +
              cfg.noise_sd * noise.normal();
  }
  double lo = -30.0, hi = 30.0;
  auto mean_rate = [&](double c) {
    double s = 0.0;
    for (double r : risk) s += gbdt::sigmoid(c + r);
    return s / (double)n;
  };
  if (mean_rate(lo) > cfg.violation_base_rate ||
      mean_rate(hi) < cfg.violation_base_rate)
    throw NumericError(
        "synth: base-rate calibration failed to bracket the target");
  for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
    const double mid = std::midpoint(lo, hi);
    if (mean_rate(mid) < cfg.violation_base_rate) lo = mid;
    else hi = mid;
  }
  out.calibrated_intercept = std::midpoint(lo, hi);
  std::vector<double> p_violation(n);
  for (std::size_t i = 0; i < n; ++i)
    p_violation[i] = gbdt::sigmoid(out.calibrated_intercept + risk[i]);

  // --- outcomes: violations, complaints, off-season events ----------------
  rng::Stream os = rng::Stream::derive(cfg.seed, "synth/outcomes");
  const auto& train_years = cfg.train_season_years;
  std::size_t n_viol_train = 0, n_viol_eval = 0, n_complaints_eval = 0,
              n_spurious_eval = 0, n_offseason = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& bbl = out.buildings[i].bbl;
    const double prop = propensity[bg_of[i]];
    const bool v_train = os.bernoulli(p_violation[i]);
    const bool v_eval = os.bernoulli(p_violation[i]);
    const int train_year =
        train_years[os.below((std::uint64_t)train_years.size())];

    if (v_train) {
      ++n_viol_train;
      out.violations.push_back({bbl, detail::random_in_season(os, train_year)});
      if (os.bernoulli(prop))
        out.complaints.push_back(
            {bbl, detail::random_in_season(os, train_year)});
    } else if (os.bernoulli(cfg.false_complaint_rate * prop)) {
      out.complaints.push_back({bbl, detail::random_in_season(os, train_year)});
    }

    if (v_eval) {
      ++n_viol_eval;
      out.violations.push_back(
          {bbl, detail::random_in_season(os, cfg.eval_season_year)});
      if (os.bernoulli(prop)) {
        ++n_complaints_eval;
        out.complaints.push_back(
            {bbl, detail::random_in_season(os, cfg.eval_season_year)});
      }
    } else if (os.bernoulli(cfg.false_complaint_rate * prop)) {
      ++n_spurious_eval;
      out.complaints.push_back(
          {bbl, detail::random_in_season(os, cfg.eval_season_year)});
    }

    if (os.bernoulli(cfg.offseason_event_rate)) {
      ++n_offseason;
      out.complaints.push_back(
          {bbl, detail::random_off_season(os, cfg.eval_season_year)});
    }
  }

  out.attach_report =
      io::attach_events(out.buildings, out.complaints, out.violations);

  // --- ground-truth record ------------------------------------------------
  nlohmann::json truth;
  truth["config"] = {
      {"n_buildings", n},
      {"n_block_groups", nbg},
      {"seed", std::to_string(cfg.seed)},
      {"violation_base_rate", cfg.violation_base_rate},
      {"false_complaint_rate", cfg.false_complaint_rate},
      {"offseason_event_rate", cfg.offseason_event_rate},
      {"demo_correlation", cfg.demo_correlation},
      {"noise_sd", cfg.noise_sd},
      {"propensity_intercept", cfg.propensity_intercept},
      {"train_season_years", cfg.train_season_years},
      {"eval_season_year", cfg.eval_season_year}};
  truth["risk_weights"] = cfg.risk_weights;
  truth["propensity_weights"] = cfg.propensity_weights;
  truth["calibrated_intercept"] = out.calibrated_intercept;
  truth["boiler_type_scores"] = {{"gas", kBoilerScore[0]},
                                 {"oil", kBoilerScore[1]},
                                 {"electricity", kBoilerScore[2]},
                                 {"other", kBoilerScore[3]},
                                 {"unknown", kBoilerScore[4]}};
  {
    double pmin = 1.0, pmax = 0.0, psum = 0.0;
    for (double p : propensity) {
      pmin = std::min(pmin, p);
      pmax = std::max(pmax, p);
      psum += p;
    }
    truth["realized"] = {
        {"violation_rate_train", (double)n_viol_train / (double)n},
        {"violation_rate_eval", (double)n_viol_eval / (double)n},
        {"complaint_given_violation_eval",
         n_viol_eval ? (double)n_complaints_eval / (double)n_viol_eval : 0.0},
        {"spurious_complaints_eval", n_spurious_eval},
        {"offseason_events", n_offseason},
        {"propensity_min", pmin},
        {"propensity_max", pmax},
        {"propensity_mean", psum / (double)nbg}};
  }
  truth["notes"] = {
      {"risk_model",
       "violation probability = sigmoid(intercept + weights . standardized "
       "physical features + noise); intercept calibrated by bisection to the "
       "configured base rate"},
      {"reporting_model",
       "complaint given violation ~ Bernoulli(sigmoid(propensity_intercept + "
       "propensity_weights . standardized block-group demographics)); "
       "spurious complaints at false_complaint_rate * propensity"},
      {"signal",
       "negative loadings depress reporting (under-reporting regime); "
       "positive loadings boost it"}};
  out.truth = std::move(truth);
  return out;
}

// Writes the generated city as the four ingestion CSVs plus truth.json.
inline void write_dataset(const SynthResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) {
    return (std::filesystem::path(dir) / name).string();
  };
  io::write_buildings(result.buildings, path("buildings.csv"));

  auto write_events = [&](std::span<const io::Event> events,
                          const std::string& file) {
    csv::Writer w(file);
    w.write_row(std::vector<std::string>{"bbl", "timestamp"});
    for (const auto& e : events)
      w.write_row(std::vector<std::string>{e.bbl, format_iso8601(e.timestamp)});
    w.close();
  };
  write_events(result.complaints, path("complaints.csv"));
  write_events(result.violations, path("violations.csv"));

  {
    csv::Writer w(path("blockgroups.csv"));
    std::vector<std::string> header = {"block_group_id", "population"};
    for (auto name : kProfileFeatureNames) header.emplace_back(name);
    header.insert(header.end(), {"race_share_white", "race_share_black",
                                 "race_share_hispanic", "race_share_other"});
    w.write_row(header);
    for (const auto& p : result.profiles) {
      std::vector<std::string> row = {p.block_group_id,
                                      csv::fmt_int(p.population)};
      for (std::size_t k = 0; k < kProfileFeatureNames.size(); ++k)
        row.push_back(csv::fmt_double(profile_feature(p, k)));
      for (double sh : p.race_shares) row.push_back(csv::fmt_double(sh));
      w.write_row(row);
    }
    w.close();
  }

  std::ofstream truth(path("truth.json"));
  if (!truth) throw DataError("cannot write " + path("truth.json"));
  truth << result.truth.dump(2) << "\n";
}

}  // namespace propensity::synth
