#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "propensity/data.hpp"
#include "propensity/errors.hpp"

namespace propensity {

enum class ColumnKind { numeric, categorical };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  int n_levels = 0;  // categorical only

  bool operator==(const ColumnSpec&) const = default;
};

// Column-major design matrix. Categorical cells hold exact small-integer
// level codes; numeric cells may be NaN only if the producer allows it.
struct Matrix {
  std::size_t n_rows = 0;
  std::vector<ColumnSpec> specs;
  std::vector<std::vector<double>> columns;

  std::size_t n_cols() const { return specs.size(); }
  double at(std::size_t row, std::size_t col) const {
    return columns[col][row];
  }
  std::vector<double> row(std::size_t r) const {
    std::vector<double> out(n_cols());
    for (std::size_t c = 0; c < n_cols(); ++c) out[c] = columns[c][r];
    return out;
  }
};

// Maps BuildingRecord feature vectors to model columns. Missing numerics are
// imputed with the training-set median and flagged by a companion 0/1
// indicator column, so a schema fitted at training time reproduces the exact
// transform at scoring time.
struct FeatureSchema {
  std::array<double, kNumericFeatureNames.size()> medians{};

  static constexpr std::size_t n_numeric = kNumericFeatureNames.size();

  static double numeric_value(const FeatureVector& f, std::size_t idx) {
    switch (idx) {
      case 0: return f.value_per_sqft;
      case 1: return f.units;
      case 2: return f.area_per_unit;
      case 3: return f.residential_ratio;
      case 4: return f.width;
      case 5: return f.depth;
      case 6: return f.building_age;
      case 7: return f.boiler_age;
    }
    throw ConfigError("numeric feature index out of range");
  }

  static std::vector<ColumnSpec> column_specs() {
    std::vector<ColumnSpec> specs;
    for (auto name : kNumericFeatureNames)
      specs.push_back({std::string(name), ColumnKind::numeric, 0});
    for (auto name : kNumericFeatureNames)
      specs.push_back(
          {"missing_" + std::string(name), ColumnKind::numeric, 0});
    specs.push_back({"has_super", ColumnKind::numeric, 0});
    specs.push_back({"basement_code", ColumnKind::categorical,
                     static_cast<int>(levels::basement.size())});
    specs.push_back({"proximity_code", ColumnKind::categorical,
                     static_cast<int>(levels::proximity.size())});
    specs.push_back({"ownership_type", ColumnKind::categorical,
                     static_cast<int>(levels::ownership.size())});
    specs.push_back({"boiler_type", ColumnKind::categorical,
                     static_cast<int>(levels::boiler.size())});
    return specs;
  }

  // Median of the non-missing training values per numeric feature
  // (mean of the two middle order statistics for even counts; 0.0 when a
  // feature is missing everywhere).
  static FeatureSchema fit(std::span<const BuildingRecord> buildings) {
    FeatureSchema schema;
    std::vector<double> vals;
    for (std::size_t k = 0; k < n_numeric; ++k) {
      vals.clear();
      for (const auto& b : buildings) {
        double v = numeric_value(b.features, k);
        if (!std::isnan(v)) vals.push_back(v);
      }
      if (vals.empty()) {
        schema.medians[k] = 0.0;
        continue;
      }
      std::sort(vals.begin(), vals.end());
      std::size_t n = vals.size();
      schema.medians[k] = (n % 2 == 1)
                              ? vals[n / 2]
                              : std::midpoint(vals[n / 2 - 1], vals[n / 2]);
    }
    return schema;
  }

  Matrix transform(std::span<const BuildingRecord> buildings) const {
    Matrix m;
    m.n_rows = buildings.size();
    m.specs = column_specs();
    m.columns.assign(m.specs.size(), {});
    for (auto& c : m.columns) c.reserve(m.n_rows);
    for (const auto& b : buildings) {
      const FeatureVector& f = b.features;
      for (std::size_t k = 0; k < n_numeric; ++k) {
        double v = numeric_value(f, k);
        m.columns[k].push_back(std::isnan(v) ? medians[k] : v);
      }
      for (std::size_t k = 0; k < n_numeric; ++k)
        m.columns[n_numeric + k].push_back(
            std::isnan(numeric_value(f, k)) ? 1.0 : 0.0);
      std::size_t c = 2 * n_numeric;
      m.columns[c++].push_back(f.has_super ? 1.0 : 0.0);
      m.columns[c++].push_back(static_cast<double>(f.basement_code));
      m.columns[c++].push_back(static_cast<double>(f.proximity_code));
      m.columns[c++].push_back(static_cast<double>(f.ownership_type));
      m.columns[c++].push_back(static_cast<double>(f.boiler_type));
    }
    return m;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (std::size_t k = 0; k < n_numeric; ++k)
      j["medians"][std::string(kNumericFeatureNames[k])] = medians[k];
    return j;
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    FeatureSchema s;
    if (!j.contains("medians"))
      throw DataError("feature schema: missing 'medians'");
    for (std::size_t k = 0; k < n_numeric; ++k) {
      std::string name(kNumericFeatureNames[k]);
      if (!j["medians"].contains(name))
        throw DataError("feature schema: missing median for " + name);
      s.medians[k] = j["medians"][name].get<double>();
    }
    return s;
  }

  bool operator==(const FeatureSchema&) const = default;
};

}  // namespace propensity
