#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "propensity/classify.hpp"
#include "propensity/data.hpp"
#include "propensity/errors.hpp"

namespace propensity::stats {

// ---------------------------------------------------------------------------
// regularized incomplete beta via Lentz's continued fraction

namespace detail {

inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 3e-16, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int it = 1; it <= kMaxIter; ++it) {
    const int m2 = 2 * it;
    double aa = it * (b - it) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + it) * (qab + it) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0))
    throw NumericError("incomplete beta: parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
               a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// two-sided p-value of a t statistic with df degrees of freedom
inline double t_two_sided_p(double t, double df) {
  if (!(df > 0)) throw NumericError("t distribution: df must be positive");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

// ---------------------------------------------------------------------------
// two-sample tests

struct TTestResult {
  std::string feature;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double p_bonferroni = 1.0;
  double mean_under = 0.0;  // sample a
  double mean_over = 0.0;   // sample b
  long long n_under = 0;
  long long n_over = 0;
};

namespace detail {

struct Moments {
  double mean = 0.0, var = 0.0;  // sample variance, n-1 denominator
  std::size_t n = 0;
};

inline Moments moments(std::span<const double> xs, const char* which) {
  if (xs.size() < 2)
    throw DataError(std::string("t-test: sample '") + which +
                    "' needs at least 2 values");
  Moments mo;
  mo.n = xs.size();
  double sum = 0.0;
  for (double x : xs) {
    if (!std::isfinite(x))
      throw DataError(std::string("t-test: non-finite value in sample '") +
                      which + "'");
    sum += x;
  }
  mo.mean = sum / static_cast<double>(mo.n);
  double ss = 0.0;
  for (double x : xs) ss += (x - mo.mean) * (x - mo.mean);
  mo.var = ss / static_cast<double>(mo.n - 1);
  return mo;
}

inline TTestResult finish_degenerate(const Moments& a, const Moments& b) {
  // both samples constant: t is 0 for equal means, +/-infinity otherwise
  TTestResult r;
  r.df = static_cast<double>(a.n + b.n - 2);
  r.mean_under = a.mean;
  r.mean_over = b.mean;
  r.n_under = static_cast<long long>(a.n);
  r.n_over = static_cast<long long>(b.n);
  if (a.mean == b.mean) {
    r.t = 0.0;
    r.p = 1.0;
  } else {
    r.t = a.mean > b.mean ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
  }
  r.p_bonferroni = r.p;
  return r;
}

}  // namespace detail

// Welch's unequal-variance t-test; t = mean_a - mean_b over the Welch
// standard error, df by Welch-Satterthwaite, two-sided p.
inline TTestResult welch_t(std::span<const double> sample_a,
                           std::span<const double> sample_b) {
  auto a = detail::moments(sample_a, "a");
  auto b = detail::moments(sample_b, "b");
  if (a.var == 0.0 && b.var == 0.0) return detail::finish_degenerate(a, b);
  TTestResult r;
  const double va = a.var / static_cast<double>(a.n);
  const double vb = b.var / static_cast<double>(b.n);
  r.t = (a.mean - b.mean) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.n - 1) +
          vb * vb / static_cast<double>(b.n - 1));
  r.p = t_two_sided_p(r.t, r.df);
  r.p_bonferroni = r.p;
  r.mean_under = a.mean;
  r.mean_over = b.mean;
  r.n_under = static_cast<long long>(a.n);
  r.n_over = static_cast<long long>(b.n);
  return r;
}

// Pooled-variance Student's t-test (equal-variance assumption).
inline TTestResult pooled_t(std::span<const double> sample_a,
                            std::span<const double> sample_b) {
  auto a = detail::moments(sample_a, "a");
  auto b = detail::moments(sample_b, "b");
  if (a.var == 0.0 && b.var == 0.0) return detail::finish_degenerate(a, b);
  TTestResult r;
  const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n);
  const double sp2 = ((na - 1) * a.var + (nb - 1) * b.var) / (na + nb - 2);
  r.t = (a.mean - b.mean) / std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
  r.df = na + nb - 2;
  r.p = t_two_sided_p(r.t, r.df);
  r.p_bonferroni = r.p;
  r.mean_under = a.mean;
  r.mean_over = b.mean;
  r.n_under = static_cast<long long>(a.n);
  r.n_over = static_cast<long long>(b.n);
  return r;
}

// ---------------------------------------------------------------------------
// race diversity (Simpson index)

// 1 - sum(p^2): the probability two random residents belong to different
// race groups.
inline double race_diversity(std::span<const double> race_shares) {
  if (race_shares.empty()) throw DataError("race_diversity: empty shares");
  double sum = 0.0, sumsq = 0.0;
  for (double p : race_shares) {
    if (!(p >= 0.0) || p > 1.0)
      throw DataError("race_diversity: share outside [0, 1]");
    sum += p;
    sumsq += p * p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DataError("race_diversity: shares must sum to 1");
  return std::max(0.0, 1.0 - sumsq);
}

// ---------------------------------------------------------------------------
// group comparison across the 13 block-group features

enum class TestLevel { building, blockgroup };

inline TestLevel parse_test_level(const std::string& s) {
  if (s == "building") return TestLevel::building;
  if (s == "blockgroup") return TestLevel::blockgroup;
  throw ConfigError("unknown test level '" + s +
                    "' (expected building|blockgroup)");
}

inline std::string to_string(TestLevel level) {
  return level == TestLevel::building ? "building" : "blockgroup";
}

struct CompareOptions {
  TestLevel level = TestLevel::building;
  bool pooled = false;
};

struct CompareResult {
  std::vector<TTestResult> tests;  // sorted by |t| descending
  long long n_under = 0;           // contributing units per direction
  long long n_over = 0;
  long long excluded_unresolvable = 0;  // buildings with no resolvable profile
};

// Each Type2 (under-reporting) building contributes its block group's value
// to the under sample and each Type3 (over-reporting) building to the over
// sample; one Welch (or pooled) test per feature, sorted by |t| descending
// with a feature-name tiebreak. In blockgroup mode each distinct block group
// contributes once per direction instead. race_diversity is recomputed from
// race_shares before testing.
inline CompareResult compare_groups(
    std::span<const classify::ClassifiedBuilding> classified,
    const std::unordered_map<std::string, std::string>& building_block_group,
    std::span<const BlockGroupProfile> profiles, const CompareOptions& opt) {
  std::unordered_map<std::string, const BlockGroupProfile*> by_id;
  by_id.reserve(profiles.size());
  for (const auto& p : profiles) by_id.emplace(p.block_group_id, &p);

  CompareResult result;
  std::vector<const BlockGroupProfile*> under, over;
  std::set<std::string> under_seen, over_seen;  // blockgroup mode
  for (const auto& b : classified) {
    const auto dir = classify::direction_of(b.type);
    if (dir == classify::Direction::none) continue;
    const auto bg = building_block_group.find(b.bbl);
    const BlockGroupProfile* profile = nullptr;
    if (bg != building_block_group.end()) {
      auto it = by_id.find(bg->second);
      if (it != by_id.end()) profile = it->second;
    }
    if (profile == nullptr) {
      ++result.excluded_unresolvable;
      continue;
    }
    const bool is_under = dir == classify::Direction::under_reporting;
    if (opt.level == TestLevel::blockgroup) {
      auto& seen = is_under ? under_seen : over_seen;
      if (!seen.insert(profile->block_group_id).second) continue;
    }
    (is_under ? under : over).push_back(profile);
  }
  if (under.size() < 2 || over.size() < 2)
    throw DataError(
        "compare_groups: each direction needs at least 2 contributing units "
        "(under=" +
        std::to_string(under.size()) + ", over=" + std::to_string(over.size()) +
        ")");
  result.n_under = static_cast<long long>(under.size());
  result.n_over = static_cast<long long>(over.size());

  const double n_tests = static_cast<double>(kProfileFeatureNames.size());
  std::vector<double> xs_under(under.size()), xs_over(over.size());
  for (std::size_t k = 0; k < kProfileFeatureNames.size(); ++k) {
    const bool is_diversity = kProfileFeatureNames[k] == "race_diversity";
    auto value = [&](const BlockGroupProfile* p) {
      return is_diversity ? race_diversity(p->race_shares)
                          : profile_feature(*p, k);
    };
    for (std::size_t i = 0; i < under.size(); ++i) xs_under[i] = value(under[i]);
    for (std::size_t i = 0; i < over.size(); ++i) xs_over[i] = value(over[i]);
    TTestResult r = opt.pooled ? pooled_t(xs_under, xs_over)
                               : welch_t(xs_under, xs_over);
    r.feature = std::string(kProfileFeatureNames[k]);
    r.p_bonferroni = std::min(1.0, r.p * n_tests);
    result.tests.push_back(std::move(r));
  }
  std::sort(result.tests.begin(), result.tests.end(),
            [](const TTestResult& a, const TTestResult& b) {
              double fa = std::fabs(a.t), fb = std::fabs(b.t);
              if (fa != fb) return fa > fb;
              return a.feature < b.feature;
            });
  return result;
}

inline void write_ttests(std::span<const TTestResult> tests,
                         const std::string& path) {
  csv::Writer w(path);
  w.write_row(std::vector<std::string>{"feature", "t", "df", "p",
                                       "p_bonferroni", "mean_under",
                                       "mean_over", "n_under", "n_over"});
  for (const auto& r : tests) {
    w.write_row(std::vector<std::string>{
        r.feature, csv::fmt_double(r.t), csv::fmt_double(r.df),
        csv::fmt_double(r.p), csv::fmt_double(r.p_bonferroni),
        csv::fmt_double(r.mean_under), csv::fmt_double(r.mean_over),
        csv::fmt_int(r.n_under), csv::fmt_int(r.n_over)});
  }
  w.close();
}

}  // namespace propensity::stats
