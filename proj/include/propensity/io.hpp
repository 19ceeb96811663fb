#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "propensity/csv.hpp"
#include "propensity/data.hpp"
#include "propensity/errors.hpp"
#include "propensity/seasons.hpp"

namespace propensity::io {

// field name -> source column name; unmapped fields use the field name itself
using ColumnMap = std::map<std::string, std::string>;

inline std::string source_column(const ColumnMap& m, const std::string& field) {
  auto it = m.find(field);
  return it == m.end() ? field : it->second;
}

enum class UnknownCategoryPolicy { coerce, reject };

struct Rejection {
  std::size_t row = 0;  // 1-based data row, header excluded
  std::string field;
  std::string reason;
};

struct LoadReport {
  std::size_t rows_total = 0;
  std::size_t rows_rejected = 0;
  std::vector<Rejection> rejections;
};

inline void write_rejection_report(const LoadReport& report,
                                   const std::string& path) {
  csv::Writer w(path);
  w.write_row(std::vector<std::string>{"row", "field", "reason"});
  for (const auto& r : report.rejections)
    w.write_row(std::vector<std::string>{csv::fmt_int((long long)r.row),
                                         r.field, r.reason});
  w.close();
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  std::string v = lower(s);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  return std::nullopt;
}

struct RowReader {
  const csv::Table& table;
  const std::vector<std::string>& row;
  std::size_t row_no;  // 1-based data row
  Rejection* fail = nullptr;

  bool ok() const { return fail->field.empty(); }

  void reject(const std::string& field, const std::string& reason) {
    if (ok()) *fail = Rejection{row_no, field, reason};
  }

  std::string str(int col) const { return row[static_cast<std::size_t>(col)]; }

  // empty cell -> NaN (missing); anything unparsable or non-finite rejects
  double numeric(int col, const std::string& field, bool allow_missing) {
    const std::string& cell = row[static_cast<std::size_t>(col)];
    if (cell.empty()) {
      if (!allow_missing) reject(field, "missing value");
      return std::numeric_limits<double>::quiet_NaN();
    }
    auto v = csv::parse_double(cell);
    if (!v) {
      reject(field, "unparsable numeric '" + cell + "'");
      return std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(*v)) {
      reject(field, "non-finite value");
      return std::numeric_limits<double>::quiet_NaN();
    }
    return *v;
  }
};

inline int require_column(const csv::Table& t, const ColumnMap& m,
                          const std::string& field, const std::string& path) {
  int c = t.column(source_column(m, field));
  if (c < 0)
    throw DataError(path + ": missing required column '" +
                    source_column(m, field) + "' (field " + field + ")");
  return c;
}

template <std::size_t N>
int parse_categorical(RowReader& r, int col, const std::string& field,
                      const std::array<std::string_view, N>& table,
                      int fallback_code, UnknownCategoryPolicy policy) {
  const std::string& cell = r.row[static_cast<std::size_t>(col)];
  auto code = levels::code_of(table, cell);
  if (code) return *code;
  if (policy == UnknownCategoryPolicy::coerce) return fallback_code;
  r.reject(field, "unknown categorical label '" + cell + "'");
  return fallback_code;
}

}  // namespace detail

struct BuildingsLoadResult {
  std::vector<BuildingRecord> buildings;
  LoadReport report;
};

inline BuildingsLoadResult load_buildings(
    const std::string& path, const ColumnMap& columns = {},
    UnknownCategoryPolicy policy = UnknownCategoryPolicy::coerce) {
  csv::Table t = csv::read_file(path);
  BuildingsLoadResult out;
  out.report.rows_total = t.rows.size();

  auto col = [&](const char* f) {
    return detail::require_column(t, columns, f, path);
  };
  const int c_bbl = col("bbl"), c_x = col("x"), c_y = col("y");
  const int c_bg = col("block_group_id");
  const int c_vps = col("value_per_sqft"), c_units = col("units");
  const int c_apu = col("area_per_unit"), c_rr = col("residential_ratio");
  const int c_w = col("width"), c_d = col("depth"), c_age = col("building_age");
  const int c_base = col("basement_code"), c_prox = col("proximity_code");
  const int c_own = col("ownership_type"), c_super = col("has_super");
  const int c_btype = col("boiler_type"), c_bage = col("boiler_age");

  std::unordered_map<std::string, std::size_t> seen;  // bbl -> first data row
  out.buildings.reserve(t.rows.size());

  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    Rejection fail;
    detail::RowReader r{t, t.rows[i], i + 1, &fail};

    BuildingRecord b;
    b.bbl = r.str(c_bbl);
    if (b.bbl.empty()) r.reject("bbl", "empty identifier");
    if (r.ok()) {
      auto [it, inserted] = seen.emplace(b.bbl, r.row_no);
      if (!inserted) {
        std::ostringstream os;
        os << path << ": duplicate bbl '" << b.bbl << "' in rows " << it->second
           << " and " << r.row_no;
        throw DataError(os.str());
      }
    }
    b.block_group_id = r.str(c_bg);
    b.x = r.numeric(c_x, "x", false);
    b.y = r.numeric(c_y, "y", false);

    FeatureVector& f = b.features;
    f.value_per_sqft = r.numeric(c_vps, "value_per_sqft", true);
    f.units = r.numeric(c_units, "units", true);
    f.area_per_unit = r.numeric(c_apu, "area_per_unit", true);
    f.residential_ratio = r.numeric(c_rr, "residential_ratio", true);
    f.width = r.numeric(c_w, "width", true);
    f.depth = r.numeric(c_d, "depth", true);
    f.building_age = r.numeric(c_age, "building_age", true);
    f.boiler_age = r.numeric(c_bage, "boiler_age", true);

    f.basement_code = static_cast<BasementCode>(detail::parse_categorical(
        r, c_base, "basement_code", levels::basement,
        static_cast<int>(BasementCode::unknown), policy));
    f.proximity_code = static_cast<ProximityCode>(detail::parse_categorical(
        r, c_prox, "proximity_code", levels::proximity,
        static_cast<int>(ProximityCode::unknown), policy));
    f.ownership_type = static_cast<OwnershipType>(detail::parse_categorical(
        r, c_own, "ownership_type", levels::ownership,
        static_cast<int>(OwnershipType::other), policy));
    f.boiler_type = static_cast<BoilerType>(detail::parse_categorical(
        r, c_btype, "boiler_type", levels::boiler,
        static_cast<int>(BoilerType::unknown), policy));

    auto sup = detail::parse_bool(r.str(c_super));
    if (!sup)
      r.reject("has_super", "expected boolean, got '" + r.str(c_super) + "'");
    else
      f.has_super = *sup;

    // range checks on present values
    auto present = [](double v) { return !std::isnan(v); };
    if (r.ok()) {
      if (present(f.value_per_sqft) && f.value_per_sqft < 0)
        r.reject("value_per_sqft", "must be >= 0");
      if (present(f.units) &&
          (f.units < 1 || f.units != std::floor(f.units)))
        r.reject("units", "must be a positive integer");
      if (present(f.area_per_unit) && f.area_per_unit <= 0)
        r.reject("area_per_unit", "must be > 0");
      if (present(f.residential_ratio) &&
          (f.residential_ratio < 0 || f.residential_ratio > 1))
        r.reject("residential_ratio", "must be in [0, 1]");
      if (present(f.width) && f.width <= 0) r.reject("width", "must be > 0");
      if (present(f.depth) && f.depth <= 0) r.reject("depth", "must be > 0");
      if (present(f.building_age) && f.building_age < 0)
        r.reject("building_age", "must be >= 0");
      if (present(f.boiler_age) && f.boiler_age < 0)
        r.reject("boiler_age", "must be >= 0");
    }

    if (!r.ok()) {
      out.report.rejections.push_back(fail);
      ++out.report.rows_rejected;
      continue;
    }
    out.buildings.push_back(std::move(b));
  }
  return out;
}

inline void write_buildings(std::span<const BuildingRecord> buildings,
                            const std::string& path) {
  csv::Writer w(path);
  std::vector<std::string> row = {
      "bbl",       "x",           "y",
      "block_group_id", "value_per_sqft", "units",
      "area_per_unit",  "residential_ratio", "width",
      "depth",     "building_age", "basement_code",
      "proximity_code", "ownership_type", "has_super",
      "boiler_type",    "boiler_age"};
  w.write_row(row);
  for (const auto& b : buildings) {
    const FeatureVector& f = b.features;
    row = {b.bbl,
           csv::fmt_double(b.x),
           csv::fmt_double(b.y),
           b.block_group_id,
           csv::fmt_double(f.value_per_sqft),
           csv::fmt_double(f.units),
           csv::fmt_double(f.area_per_unit),
           csv::fmt_double(f.residential_ratio),
           csv::fmt_double(f.width),
           csv::fmt_double(f.depth),
           csv::fmt_double(f.building_age),
           std::string(levels::basement[static_cast<int>(f.basement_code)]),
           std::string(levels::proximity[static_cast<int>(f.proximity_code)]),
           std::string(levels::ownership[static_cast<int>(f.ownership_type)]),
           f.has_super ? "true" : "false",
           std::string(levels::boiler[static_cast<int>(f.boiler_type)]),
           csv::fmt_double(f.boiler_age)};
    w.write_row(row);
  }
  w.close();
}

struct BlockGroupsLoadResult {
  std::vector<BlockGroupProfile> profiles;
  std::vector<std::string> race_share_names;  // column order of the shares
  LoadReport report;
};

inline BlockGroupsLoadResult load_blockgroups(const std::string& path,
                                              const ColumnMap& columns = {}) {
  csv::Table t = csv::read_file(path);
  BlockGroupsLoadResult out;
  out.report.rows_total = t.rows.size();

  const int c_id = detail::require_column(t, columns, "block_group_id", path);
  const int c_pop = detail::require_column(t, columns, "population", path);
  std::array<int, 13> c_feat{};
  for (std::size_t k = 0; k < kProfileFeatureNames.size(); ++k) {
    std::string f(kProfileFeatureNames[k]);
    if (f == "race_diversity") {
      // optional on input; recomputed from shares when absent
      c_feat[k] = t.column(source_column(columns, f));
    } else {
      c_feat[k] = detail::require_column(t, columns, f, path);
    }
  }
  std::vector<int> share_cols;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c].rfind("race_share_", 0) == 0) {
      share_cols.push_back(static_cast<int>(c));
      out.race_share_names.push_back(t.header[c]);
    }
  }
  if (share_cols.empty())
    throw DataError(path + ": no race_share_* columns found");

  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    Rejection fail;
    detail::RowReader r{t, t.rows[i], i + 1, &fail};
    BlockGroupProfile p;
    p.block_group_id = r.str(c_id);
    if (p.block_group_id.empty()) r.reject("block_group_id", "empty identifier");
    if (r.ok()) {
      auto [it, inserted] = seen.emplace(p.block_group_id, r.row_no);
      if (!inserted) {
        std::ostringstream os;
        os << path << ": duplicate block_group_id '" << p.block_group_id
           << "' in rows " << it->second << " and " << r.row_no;
        throw DataError(os.str());
      }
    }
    double pop = r.numeric(c_pop, "population", false);
    if (r.ok() && (pop < 0 || pop != std::floor(pop)))
      r.reject("population", "must be a non-negative integer");
    p.population = static_cast<long>(pop);

    double sum = 0.0;
    for (int c : share_cols) {
      double v = r.numeric(c, t.header[static_cast<std::size_t>(c)], false);
      if (r.ok() && (v < 0 || v > 1))
        r.reject(t.header[static_cast<std::size_t>(c)], "share outside [0, 1]");
      p.race_shares.push_back(v);
      sum += v;
    }
    if (r.ok() && std::abs(sum - 1.0) > 1e-9)
      r.reject("race_share_*", "shares must sum to 1");

    auto proportion = [&](std::size_t k, double v) {
      if (r.ok() && (v < 0 || v > 1))
        r.reject(std::string(kProfileFeatureNames[k]), "must be in [0, 1]");
      return v;
    };
    for (std::size_t k = 0; k < kProfileFeatureNames.size(); ++k) {
      std::string_view name = kProfileFeatureNames[k];
      double v;
      if (name == "race_diversity" && c_feat[k] < 0) {
        double s2 = 0.0;
        for (double sh : p.race_shares) s2 += sh * sh;
        v = 1.0 - s2;
      } else {
        v = r.numeric(c_feat[k], std::string(name), false);
      }
      bool bounded = name != "median_rent" && name != "median_income";
      if (bounded) v = proportion(k, v);
      switch (k) {
        case 0: p.median_rent = v; break;
        case 1: p.race_diversity = v; break;
        case 2: p.vacancy_rate = v; break;
        case 3: p.pct_minority = v; break;
        case 4: p.median_income = v; break;
        case 5: p.pct_limited_english = v; break;
        case 6: p.pct_married = v; break;
        case 7: p.unemployment_rate = v; break;
        case 8: p.pct_over70 = v; break;
        case 9: p.pct_white = v; break;
        case 10: p.pct_bachelor_plus = v; break;
        case 11: p.pct_female = v; break;
        case 12: p.pct_living_alone = v; break;
      }
    }

    if (!r.ok()) {
      out.report.rejections.push_back(fail);
      ++out.report.rows_rejected;
      continue;
    }
    out.profiles.push_back(std::move(p));
  }
  return out;
}

struct Event {
  std::string bbl;
  DateTime timestamp;
};

struct EventsLoadResult {
  std::vector<Event> events;
  LoadReport report;
};

inline EventsLoadResult load_events(const std::string& path,
                                    const ColumnMap& columns = {}) {
  csv::Table t = csv::read_file(path);
  EventsLoadResult out;
  out.report.rows_total = t.rows.size();
  const int c_bbl = detail::require_column(t, columns, "bbl", path);
  const int c_ts = detail::require_column(t, columns, "timestamp", path);
  out.events.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string& bbl = row[static_cast<std::size_t>(c_bbl)];
    const std::string& ts = row[static_cast<std::size_t>(c_ts)];
    if (bbl.empty()) {
      out.report.rejections.push_back({i + 1, "bbl", "empty identifier"});
      ++out.report.rows_rejected;
      continue;
    }
    auto dt = parse_iso8601(ts);
    if (!dt) {
      out.report.rejections.push_back(
          {i + 1, "timestamp", "unparsable timestamp '" + ts + "'"});
      ++out.report.rows_rejected;
      continue;
    }
    out.events.push_back({bbl, *dt});
  }
  return out;
}

struct UnmatchedEvent {
  std::string kind;  // "complaint" | "violation"
  std::string bbl;
  DateTime timestamp;
};

struct AttachReport {
  std::size_t complaints_attached = 0;
  std::size_t violations_attached = 0;
  std::size_t off_season_complaints = 0;
  std::size_t off_season_violations = 0;
  std::vector<UnmatchedEvent> unmatched;
};

// Buckets complaint/violation events into heating seasons per building.
// Off-season events are dropped and counted; events whose bbl does not
// resolve go to the unmatched report. Afterwards every building carries an
// explicit count/flag entry for every season observed anywhere in the data.
inline AttachReport attach_events(std::vector<BuildingRecord>& buildings,
                                  std::span<const Event> complaints,
                                  std::span<const Event> violations) {
  AttachReport report;
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(buildings.size());
  for (std::size_t i = 0; i < buildings.size(); ++i)
    index.emplace(buildings[i].bbl, i);

  std::set<HeatingSeason> observed;
  for (const Event& e : complaints) {
    auto it = index.find(e.bbl);
    if (it == index.end()) {
      report.unmatched.push_back({"complaint", e.bbl, e.timestamp});
      continue;
    }
    auto season = season_of(e.timestamp);
    if (!season) {
      ++report.off_season_complaints;
      continue;
    }
    buildings[it->second].complaint_count[*season] += 1;
    observed.insert(*season);
    ++report.complaints_attached;
  }
  for (const Event& e : violations) {
    auto it = index.find(e.bbl);
    if (it == index.end()) {
      report.unmatched.push_back({"violation", e.bbl, e.timestamp});
      continue;
    }
    auto season = season_of(e.timestamp);
    if (!season) {
      ++report.off_season_violations;
      continue;
    }
    buildings[it->second].violation_flag[*season] = true;
    observed.insert(*season);
    ++report.violations_attached;
  }
  for (auto& b : buildings) {
    for (HeatingSeason s : observed) {
      b.complaint_count.try_emplace(s, 0);
      b.violation_flag.try_emplace(s, false);
    }
  }
  return report;
}

inline void write_unmatched_events(std::span<const UnmatchedEvent> events,
                                   const std::string& path) {
  csv::Writer w(path);
  w.write_row(std::vector<std::string>{"kind", "bbl", "timestamp"});
  for (const auto& e : events)
    w.write_row(
        std::vector<std::string>{e.kind, e.bbl, format_iso8601(e.timestamp)});
  w.close();
}

}  // namespace propensity::io
