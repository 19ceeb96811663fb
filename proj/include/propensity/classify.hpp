#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "propensity/csv.hpp"
#include "propensity/errors.hpp"
#include "propensity/seasons.hpp"

namespace propensity::classify {

// Four-way cross of predicted violation status against observed complaints:
//   Type1: no violation predicted, no complaint reported
//   Type2: violation predicted, but no complaint reported  (under-reporting)
//   Type3: no violation predicted, but complaints reported (over-reporting)
//   Type4: violation predicted, and complaints reported
enum class BuildingType { type1 = 1, type2 = 2, type3 = 3, type4 = 4 };

enum class Group { as_expected, mismatched };
enum class Direction { none, under_reporting, over_reporting };

inline std::string type_name(BuildingType t) {
  switch (t) {
    case BuildingType::type1: return "Type1";
    case BuildingType::type2: return "Type2";
    case BuildingType::type3: return "Type3";
    case BuildingType::type4: return "Type4";
  }
  return "Type1";
}

inline BuildingType parse_type(const std::string& s) {
  if (s == "Type1") return BuildingType::type1;
  if (s == "Type2") return BuildingType::type2;
  if (s == "Type3") return BuildingType::type3;
  if (s == "Type4") return BuildingType::type4;
  throw DataError("unknown building type '" + s + "'");
}

inline std::string group_name(Group g) {
  return g == Group::as_expected ? "as_expected" : "mismatched";
}

inline std::string direction_name(Direction d) {
  switch (d) {
    case Direction::none: return "none";
    case Direction::under_reporting: return "under_reporting";
    case Direction::over_reporting: return "over_reporting";
  }
  return "none";
}

// complaints are binarized regardless of volume: any complaint counts
inline bool binarize_complaints(long long complaint_count) {
  if (complaint_count < 0) throw DataError("negative complaint count");
  return complaint_count >= 1;
}

inline BuildingType classify_building(bool predicted_violation,
                                      bool complained) {
  if (!predicted_violation && !complained) return BuildingType::type1;
  if (predicted_violation && !complained) return BuildingType::type2;
  if (!predicted_violation && complained) return BuildingType::type3;
  return BuildingType::type4;
}

inline Group regroup(BuildingType t) {
  return (t == BuildingType::type2 || t == BuildingType::type3)
             ? Group::mismatched
             : Group::as_expected;
}

inline Direction direction_of(BuildingType t) {
  if (t == BuildingType::type2) return Direction::under_reporting;
  if (t == BuildingType::type3) return Direction::over_reporting;
  return Direction::none;
}

struct ClassifiedBuilding {
  std::string bbl;
  double predicted_probability = 0.0;
  bool predicted_violation = false;
  bool complained = false;
  long long complaint_count = 0;
  BuildingType type = BuildingType::type1;
};

struct ClassificationSummary {
  std::array<long long, 4> counts{};  // indexed by type - 1
  std::array<double, 4> shares{};
  long long total = 0;
  long long as_expected = 0;
  long long mismatched = 0;
  double threshold = 0.0;
  HeatingSeason season{0};
};

inline ClassificationSummary summarize(
    std::span<const ClassifiedBuilding> buildings, double threshold,
    HeatingSeason season) {
  if (buildings.empty())
    throw DataError("summarize: empty classified sample");
  ClassificationSummary s;
  s.threshold = threshold;
  s.season = season;
  s.total = static_cast<long long>(buildings.size());
  for (const auto& b : buildings)
    ++s.counts[static_cast<int>(b.type) - 1];
  for (int k = 0; k < 4; ++k)
    s.shares[k] = static_cast<double>(s.counts[k]) /
                  static_cast<double>(s.total);
  s.mismatched = s.counts[1] + s.counts[2];
  s.as_expected = s.counts[0] + s.counts[3];
  return s;
}

// ---------------------------------------------------------------------------
// classified.csv round-trip

inline void write_classified(std::span<const ClassifiedBuilding> buildings,
                             const std::string& path) {
  csv::Writer w(path);
  w.write_row(std::vector<std::string>{
      "bbl", "predicted_probability", "predicted_violation", "complained",
      "complaint_count", "type", "group", "direction"});
  for (const auto& b : buildings) {
    w.write_row(std::vector<std::string>{
        b.bbl, csv::fmt_double(b.predicted_probability),
        b.predicted_violation ? "true" : "false",
        b.complained ? "true" : "false", csv::fmt_int(b.complaint_count),
        type_name(b.type), group_name(regroup(b.type)),
        direction_name(direction_of(b.type))});
  }
  w.close();
}

inline std::vector<ClassifiedBuilding> read_classified(
    const std::string& path) {
  csv::Table t = csv::read_file(path);
  auto col = [&](const char* name) {
    int c = t.column(name);
    if (c < 0)
      throw DataError(path + ": missing required column '" + name + "'");
    return c;
  };
  const int c_bbl = col("bbl"), c_p = col("predicted_probability");
  const int c_pred = col("predicted_violation"), c_comp = col("complained");
  const int c_cnt = col("complaint_count"), c_type = col("type");
  std::vector<ClassifiedBuilding> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    ClassifiedBuilding b;
    b.bbl = row[c_bbl];
    auto p = csv::parse_double(row[c_p]);
    auto cnt = csv::parse_int(row[c_cnt]);
    if (!p || !cnt)
      throw DataError(path + ": unparsable numeric in data row " +
                      std::to_string(i + 1));
    b.predicted_probability = *p;
    b.predicted_violation = row[c_pred] == "true";
    b.complained = row[c_comp] == "true";
    b.complaint_count = *cnt;
    b.type = parse_type(row[c_type]);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace propensity::classify
