#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "propensity/errors.hpp"
#include "propensity/seasons.hpp"

namespace propensity {

enum class BasementCode : std::uint8_t { full_or_partial, none, unknown };
enum class ProximityCode : std::uint8_t { detached, semi_attached, attached, unknown };
enum class OwnershipType : std::uint8_t { individual, corp, company, other };
enum class BoilerType : std::uint8_t { gas, oil, electricity, other, unknown };

namespace levels {
inline constexpr std::array<std::string_view, 3> basement = {"full_or_partial",
                                                            "none", "unknown"};
inline constexpr std::array<std::string_view, 4> proximity = {
    "detached", "semi_attached", "attached", "unknown"};
inline constexpr std::array<std::string_view, 4> ownership = {
    "individual", "corp", "company", "other"};
inline constexpr std::array<std::string_view, 5> boiler = {
    "gas", "oil", "electricity", "other", "unknown"};

template <std::size_t N>
std::optional<int> code_of(const std::array<std::string_view, N>& table,
                           std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (table[i] == s) return static_cast<int>(i);
  return std::nullopt;
}
}  // namespace levels

// The twelve building-level predictors. Numerics use NaN for a missing
// value; categoricals carry an explicit unknown/other level instead.
struct FeatureVector {
  double value_per_sqft = 0.0;
  double units = 0.0;  // positive integer count, double for missing support
  double area_per_unit = 0.0;
  double residential_ratio = 0.0;
  double width = 0.0;
  double depth = 0.0;
  double building_age = 0.0;
  BasementCode basement_code = BasementCode::unknown;
  ProximityCode proximity_code = ProximityCode::unknown;
  OwnershipType ownership_type = OwnershipType::other;
  bool has_super = false;
  BoilerType boiler_type = BoilerType::unknown;
  double boiler_age = std::numeric_limits<double>::quiet_NaN();

  bool operator==(const FeatureVector& o) const {
    auto eq = [](double a, double b) {
      if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
      return a == b;
    };
    return eq(value_per_sqft, o.value_per_sqft) && eq(units, o.units) &&
           eq(area_per_unit, o.area_per_unit) &&
           eq(residential_ratio, o.residential_ratio) && eq(width, o.width) &&
           eq(depth, o.depth) && eq(building_age, o.building_age) &&
           basement_code == o.basement_code &&
           proximity_code == o.proximity_code &&
           ownership_type == o.ownership_type && has_super == o.has_super &&
           boiler_type == o.boiler_type && eq(boiler_age, o.boiler_age);
  }
};

inline constexpr std::array<std::string_view, 8> kNumericFeatureNames = {
    "value_per_sqft", "units",        "area_per_unit", "residential_ratio",
    "width",          "depth",        "building_age",  "boiler_age"};

struct BuildingRecord {
  std::string bbl;             // Borough-Block-Lot style identifier, opaque
  std::string block_group_id;  // census block group link
  double x = 0.0;              // projected planar coordinates, meters
  double y = 0.0;
  FeatureVector features;
  std::map<HeatingSeason, int> complaint_count;
  std::map<HeatingSeason, bool> violation_flag;

  int complaints_in(HeatingSeason s) const {
    auto it = complaint_count.find(s);
    return it == complaint_count.end() ? 0 : it->second;
  }
  bool violation_in(HeatingSeason s) const {
    auto it = violation_flag.find(s);
    return it != violation_flag.end() && it->second;
  }
};

// Census block group with the thirteen demographic/socioeconomic comparison
// features. All pct_*/rate fields are proportions in [0, 1].
struct BlockGroupProfile {
  std::string block_group_id;
  long population = 0;
  double median_rent = 0.0;
  double race_diversity = 0.0;
  double vacancy_rate = 0.0;
  double pct_minority = 0.0;
  double median_income = 0.0;
  double pct_limited_english = 0.0;
  double pct_married = 0.0;
  double unemployment_rate = 0.0;
  double pct_over70 = 0.0;
  double pct_white = 0.0;
  double pct_bachelor_plus = 0.0;
  double pct_female = 0.0;
  double pct_living_alone = 0.0;
  std::vector<double> race_shares;  // per-race population shares, sum 1
};

// The comparison features in their ttests.csv emission order.
inline constexpr std::array<std::string_view, 13> kProfileFeatureNames = {
    "median_rent",       "race_diversity",   "vacancy_rate",
    "pct_minority",      "median_income",    "pct_limited_english",
    "pct_married",       "unemployment_rate", "pct_over70",
    "pct_white",         "pct_bachelor_plus", "pct_female",
    "pct_living_alone"};

inline double profile_feature(const BlockGroupProfile& p, std::size_t idx) {
  switch (idx) {
    case 0: return p.median_rent;
    case 1: return p.race_diversity;
    case 2: return p.vacancy_rate;
    case 3: return p.pct_minority;
    case 4: return p.median_income;
    case 5: return p.pct_limited_english;
    case 6: return p.pct_married;
    case 7: return p.unemployment_rate;
    case 8: return p.pct_over70;
    case 9: return p.pct_white;
    case 10: return p.pct_bachelor_plus;
    case 11: return p.pct_female;
    case 12: return p.pct_living_alone;
    default: throw NumericError("profile_feature: bad index");
  }
}

inline double per_capita_rate(long request_count, long population) {
  if (population <= 0)
    throw DataError("per_capita_rate: population must be positive");
  if (request_count < 0)
    throw DataError("per_capita_rate: negative request count");
  return static_cast<double>(request_count) / static_cast<double>(population);
}

}  // namespace propensity
