#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "propensity/errors.hpp"
#include "propensity/features.hpp"
#include "propensity/rng.hpp"
#include "propensity/version.hpp"

namespace propensity::gbdt {

inline double sigmoid(double z) {
  if (z >= 0) {
    double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-m)), numerically stable for large |m|
inline double softplus_neg(double m) {
  if (m >= 0) return std::log1p(std::exp(-m));
  return -m + std::log1p(std::exp(m));
}

struct TreeNode {
  int feature = -1;  // -1 => leaf
  bool categorical = false;
  double threshold = 0.0;        // numeric split: x < threshold -> left
  std::uint32_t level_mask = 0;  // categorical split: level bit set -> left
  bool missing_left = true;      // NaN routing for numeric splits
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf: additive log-odds contribution

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct Params {
  int n_trees = 200;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 20;
  std::uint64_t seed = 0;
  double undersample_ratio = 1.0;
  bool use_histogram = false;
  int histogram_bins = 256;
};

struct ConfusionMatrix {
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  long long total() const { return tp + fp + tn + fn; }
};

struct EvalResult {
  ConfusionMatrix cm;
  double accuracy = 0, precision = 0, recall = 0;
  double tpr = 0, fpr = 0, balanced_accuracy = 0;
};

enum class ThresholdObjective { youden, f1, balanced };

inline std::string to_string(ThresholdObjective o) {
  switch (o) {
    case ThresholdObjective::youden: return "youden";
    case ThresholdObjective::f1: return "f1";
    case ThresholdObjective::balanced: return "balanced";
  }
  return "youden";
}

inline ThresholdObjective parse_objective(const std::string& s) {
  if (s == "youden") return ThresholdObjective::youden;
  if (s == "f1") return ThresholdObjective::f1;
  if (s == "balanced") return ThresholdObjective::balanced;
  throw ConfigError("unknown threshold objective '" + s +
                    "' (expected youden|f1|balanced)");
}

struct Model {
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  double base_score = 0.0;
  double threshold = 0.5;
  std::vector<ColumnSpec> feature_specs;
  Params params;                       // training metadata
  std::vector<double> train_deviance;  // entry 0 = deviance at base_score
  std::vector<double> importance_raw;  // per-feature total split gain
};

// ---------------------------------------------------------------------------
// under-sampling

// Keeps every minority example and draws ceil(ratio * n_minority) majority
// examples uniformly without replacement (capped at the majority count).
// Returns ascending original indices. Equal class sizes treat `true` as the
// minority class.
inline std::vector<std::size_t> undersample_majority(
    std::span<const char> labels, double ratio, std::uint64_t seed) {
  if (!(ratio > 0)) throw ConfigError("undersample ratio must be positive");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (labels[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw NumericError(
        "degenerate_labels: under-sampling requires both classes present");
  const bool pos_is_minority = pos.size() <= neg.size();
  const auto& minority = pos_is_minority ? pos : neg;
  const auto& majority = pos_is_minority ? neg : pos;

  std::size_t want = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(minority.size())));
  want = std::min(want, majority.size());

  rng::Stream stream = rng::Stream::derive(seed, "undersample");
  std::vector<std::size_t> picks =
      stream.sample_without_replacement(majority.size(), want);

  std::vector<std::size_t> out(minority.begin(), minority.end());
  out.reserve(minority.size() + want);
  for (std::size_t p : picks) out.push_back(majority[p]);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// fitting internals

namespace detail {

constexpr double kHessianFloor = 1e-16;
constexpr double kMaxLeafValue = 10.0;  // max-delta-step-style safeguard

struct SplitChoice {
  double gain = 0.0;  // candidates must strictly exceed this to be taken
  int feature = -1;
  bool categorical = false;
  double threshold = 0.0;
  std::uint32_t mask = 0;
  bool missing_left = true;
  bool valid() const { return feature >= 0; }
};

inline double split_gain(double gl, double hl, double gr, double hr) {
  const double g = gl + gr, h = hl + hr;
  return 0.5 * (gl * gl / std::max(hl, kHessianFloor) +
                gr * gr / std::max(hr, kHessianFloor) -
                g * g / std::max(h, kHessianFloor));
}

inline void validate_matrix(const Matrix& m) {
  for (std::size_t c = 0; c < m.n_cols(); ++c) {
    const ColumnSpec& spec = m.specs[c];
    if (spec.kind == ColumnKind::categorical && spec.n_levels > 16)
      throw ConfigError("categorical feature '" + spec.name +
                        "' has more than 16 levels");
    for (double v : m.columns[c]) {
      if (spec.kind == ColumnKind::numeric) {
        if (std::isinf(v))
          throw DataError("non-finite value in feature '" + spec.name + "'");
      } else {
        if (std::isnan(v) || v != std::floor(v) || v < 0 || v >= spec.n_levels)
          throw DataError("invalid level code in categorical feature '" +
                          spec.name + "'");
      }
    }
  }
}

// Equal-frequency global cut points for histogram mode (ascending, distinct).
inline std::vector<double> histogram_cuts(const std::vector<double>& column,
                                          int bins) {
  std::vector<double> vals;
  vals.reserve(column.size());
  for (double v : column)
    if (!std::isnan(v)) vals.push_back(v);
  std::sort(vals.begin(), vals.end());
  std::vector<double> cuts;
  if (vals.size() < 2) return cuts;
  for (int b = 1; b < bins; ++b) {
    std::size_t k = vals.size() * static_cast<std::size_t>(b) /
                    static_cast<std::size_t>(bins);
    if (k == 0 || k >= vals.size()) continue;
    if (vals[k - 1] == vals[k]) continue;
    double cut = std::midpoint(vals[k - 1], vals[k]);
    if (cuts.empty() || cuts.back() != cut) cuts.push_back(cut);
  }
  return cuts;
}

}  // namespace detail

// Stagewise additive logistic model. Each iteration fits one regression tree
// to the Newton pseudo-residuals of the binomial deviance
//   L = sum_i log(1 + exp(-s_i F(x_i))),  s_i = 2 y_i - 1,
// with F on the log-odds scale, leaf values G/H (one Newton step), and
// shrinkage by learning_rate. Under-sampling of the majority class happens
// inside fit; the retained rows are re-ordered canonically (sorted by feature
// values, NaN last, then label) so the fitted model does not depend on the
// row order of the input.
inline Model fit(const Matrix& features, std::span<const char> labels,
                 const Params& params) {
  if (features.n_rows != labels.size())
    throw DataError("feature/label row count mismatch");
  if (params.n_trees < 0 || params.max_depth < 1 || params.min_leaf < 1 ||
      !(params.learning_rate > 0) || params.learning_rate > 1 ||
      params.histogram_bins < 2)
    throw ConfigError("invalid boosting parameters");
  detail::validate_matrix(features);

  std::vector<std::size_t> subset =
      undersample_majority(labels, params.undersample_ratio, params.seed);
  if (subset.size() < 2)
    throw NumericError(
        "degenerate_labels: fewer than 2 rows after under-sampling");

  const std::size_t n_cols = features.n_cols();
  std::sort(subset.begin(), subset.end(),
            [&](std::size_t a, std::size_t b) {
              for (std::size_t c = 0; c < n_cols; ++c) {
                double va = features.columns[c][a], vb = features.columns[c][b];
                bool na = std::isnan(va), nb = std::isnan(vb);
                if (na != nb) return nb;  // NaN sorts last
                if (!na && va != vb) return va < vb;
              }
              return labels[a] < labels[b];
            });

  const std::size_t m = subset.size();
  std::vector<std::vector<double>> col(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) {
    col[c].resize(m);
    for (std::size_t i = 0; i < m; ++i)
      col[c][i] = features.columns[c][subset[i]];
  }
  std::vector<char> y(m);
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < m; ++i) {
    y[i] = labels[subset[i]];
    n_pos += y[i] ? 1 : 0;
  }
  if (n_pos == 0 || n_pos == m)
    throw NumericError("degenerate_labels: single-class training subset");

  // per-feature ascending row orders (ties by canonical position, NaN last)
  std::vector<std::vector<std::uint32_t>> order(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (features.specs[c].kind != ColumnKind::numeric) continue;
    auto& ord = order[c];
    ord.resize(m);
    std::iota(ord.begin(), ord.end(), 0u);
    std::stable_sort(ord.begin(), ord.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                       double va = col[c][a], vb = col[c][b];
                       bool na = std::isnan(va), nb = std::isnan(vb);
                       if (na != nb) return nb;
                       return !na && va < vb;
                     });
  }

  std::vector<std::vector<double>> cuts(n_cols);
  std::vector<std::vector<std::uint16_t>> bin_of(n_cols);
  if (params.use_histogram) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (features.specs[c].kind != ColumnKind::numeric) continue;
      cuts[c] = detail::histogram_cuts(col[c], params.histogram_bins);
      bin_of[c].resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        double v = col[c][i];
        bin_of[c][i] = std::isnan(v)
                           ? static_cast<std::uint16_t>(cuts[c].size() + 1)
                           : static_cast<std::uint16_t>(
                                 std::upper_bound(cuts[c].begin(),
                                                  cuts[c].end(), v) -
                                 cuts[c].begin());
      }
    }
  }

  Model model;
  model.learning_rate = params.learning_rate;
  model.feature_specs = features.specs;
  model.params = params;
  model.importance_raw.assign(n_cols, 0.0);
  {
    double p = static_cast<double>(n_pos) / static_cast<double>(m);
    model.base_score = std::log(p / (1.0 - p));
  }

  std::vector<double> F(m, model.base_score), g(m), h(m);
  auto deviance = [&] {
    double d = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      d += softplus_neg((y[i] ? 1.0 : -1.0) * F[i]);
    return d;
  };
  model.train_deviance.push_back(deviance());

  std::vector<int> node_of(m), slot_of;
  std::vector<double> leaf_g, leaf_h;

  for (int iter = 0; iter < params.n_trees; ++iter) {
    for (std::size_t i = 0; i < m; ++i) {
      double p = sigmoid(F[i]);
      g[i] = (y[i] ? 1.0 : 0.0) - p;
      h[i] = p * (1.0 - p);
    }

    Tree tree;
    tree.nodes.emplace_back();
    std::fill(node_of.begin(), node_of.end(), 0);
    std::vector<int> active = {0};

    for (int depth = 0; depth < params.max_depth && !active.empty(); ++depth) {
      const std::size_t n_active = active.size();
      slot_of.assign(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < n_active; ++s) slot_of[active[s]] = (int)s;

      std::vector<double> tot_g(n_active, 0.0), tot_h(n_active, 0.0);
      std::vector<long long> tot_c(n_active, 0);
      for (std::size_t i = 0; i < m; ++i) {
        int s = slot_of[node_of[i]];
        if (s < 0) continue;
        tot_g[s] += g[i];
        tot_h[s] += h[i];
        ++tot_c[s];
      }

      std::vector<detail::SplitChoice> best(n_active);

      // scratch buffers for the numeric gather
      std::vector<std::vector<double>> vv(n_active), gg(n_active),
          hh(n_active);

      for (std::size_t c = 0; c < n_cols; ++c) {
        const ColumnSpec& spec = features.specs[c];
        if (spec.kind == ColumnKind::numeric && !params.use_histogram) {
          for (std::size_t s = 0; s < n_active; ++s) {
            vv[s].clear();
            gg[s].clear();
            hh[s].clear();
          }
          std::vector<double> miss_g(n_active, 0.0), miss_h(n_active, 0.0);
          std::vector<long long> miss_c(n_active, 0);
          for (std::uint32_t i : order[c]) {
            int s = slot_of[node_of[i]];
            if (s < 0) continue;
            double v = col[c][i];
            if (std::isnan(v)) {
              miss_g[s] += g[i];
              miss_h[s] += h[i];
              ++miss_c[s];
            } else {
              vv[s].push_back(v);
              gg[s].push_back(g[i]);
              hh[s].push_back(h[i]);
            }
          }
          for (std::size_t s = 0; s < n_active; ++s) {
            const auto& v = vv[s];
            if (v.size() < 2) continue;
            double gl = 0.0, hl = 0.0;
            long long cl = 0;
            for (std::size_t k = 0; k + 1 < v.size(); ++k) {
              gl += gg[s][k];
              hl += hh[s][k];
              ++cl;
              if (v[k + 1] == v[k]) continue;
              const double thr = std::midpoint(v[k], v[k + 1]);
              for (bool ml : {true, false}) {
                double lg = gl + (ml ? miss_g[s] : 0.0);
                double lh = hl + (ml ? miss_h[s] : 0.0);
                long long lc = cl + (ml ? miss_c[s] : 0);
                double rg = tot_g[s] - lg, rh = tot_h[s] - lh;
                long long rc = tot_c[s] - lc;
                if (lc < params.min_leaf || rc < params.min_leaf) continue;
                double gain = detail::split_gain(lg, lh, rg, rh);
                if (gain > best[s].gain)
                  best[s] = {gain, (int)c, false, thr, 0, ml};
                if (miss_c[s] == 0) break;  // both directions identical
              }
            }
          }
        } else if (spec.kind == ColumnKind::numeric) {
          // histogram mode: per-bin aggregates against global cut points
          const auto& cut = cuts[c];
          if (cut.empty()) continue;
          const std::size_t nb = cut.size() + 1;  // value bins
          std::vector<double> bg(n_active * (nb + 1), 0.0),
              bh(n_active * (nb + 1), 0.0);
          std::vector<long long> bc(n_active * (nb + 1), 0);
          for (std::size_t i = 0; i < m; ++i) {
            int s = slot_of[node_of[i]];
            if (s < 0) continue;
            std::size_t k = (std::size_t)s * (nb + 1) + bin_of[c][i];
            bg[k] += g[i];
            bh[k] += h[i];
            ++bc[k];
          }
          for (std::size_t s = 0; s < n_active; ++s) {
            const std::size_t base = s * (nb + 1);
            double mg = bg[base + nb], mh = bh[base + nb];
            long long mc = bc[base + nb];
            double gl = 0.0, hl = 0.0;
            long long cl = 0;
            for (std::size_t b = 0; b + 1 < nb; ++b) {
              gl += bg[base + b];
              hl += bh[base + b];
              cl += bc[base + b];
              const double thr = cut[b];
              for (bool ml : {true, false}) {
                double lg = gl + (ml ? mg : 0.0);
                double lh = hl + (ml ? mh : 0.0);
                long long lc = cl + (ml ? mc : 0);
                double rg = tot_g[s] - lg, rh = tot_h[s] - lh;
                long long rc = tot_c[s] - lc;
                if (lc < params.min_leaf || rc < params.min_leaf) continue;
                double gain = detail::split_gain(lg, lh, rg, rh);
                if (gain > best[s].gain)
                  best[s] = {gain, (int)c, false, thr, 0, ml};
                if (mc == 0) break;
              }
            }
          }
        } else {
          // categorical: optimal level subset via the sort-by-G/H prefix rule
          const int K = spec.n_levels;
          std::vector<double> lg_(n_active * K, 0.0), lh_(n_active * K, 0.0);
          std::vector<long long> lc_(n_active * K, 0);
          for (std::size_t i = 0; i < m; ++i) {
            int s = slot_of[node_of[i]];
            if (s < 0) continue;
            std::size_t k = (std::size_t)s * K + (int)col[c][i];
            lg_[k] += g[i];
            lh_[k] += h[i];
            ++lc_[k];
          }
          std::vector<int> present;
          for (std::size_t s = 0; s < n_active; ++s) {
            const std::size_t base = s * (std::size_t)K;
            present.clear();
            for (int l = 0; l < K; ++l)
              if (lc_[base + l] > 0) present.push_back(l);
            if (present.size() < 2) continue;
            std::sort(present.begin(), present.end(), [&](int a, int b) {
              double ka = lg_[base + a] /
                          std::max(lh_[base + a], detail::kHessianFloor);
              double kb = lg_[base + b] /
                          std::max(lh_[base + b], detail::kHessianFloor);
              if (ka != kb) return ka < kb;
              return a < b;
            });
            double gl = 0.0, hl = 0.0;
            long long cl = 0;
            std::uint32_t mask = 0;
            for (std::size_t j = 0; j + 1 < present.size(); ++j) {
              int l = present[j];
              gl += lg_[base + l];
              hl += lh_[base + l];
              cl += lc_[base + l];
              mask |= 1u << l;
              double rg = tot_g[s] - gl, rh = tot_h[s] - hl;
              long long rc = tot_c[s] - cl;
              if (cl < params.min_leaf || rc < params.min_leaf) continue;
              double gain = detail::split_gain(gl, hl, rg, rh);
              if (gain > best[s].gain)
                best[s] = {gain, (int)c, true, 0.0, mask, true};
            }
          }
        }
      }

      // materialize the accepted splits and route rows down one level
      std::vector<int> next_active;
      for (std::size_t s = 0; s < n_active; ++s) {
        if (!best[s].valid()) continue;
        int nid = active[s];
        TreeNode& nd = tree.nodes[nid];
        nd.feature = best[s].feature;
        nd.categorical = best[s].categorical;
        nd.threshold = best[s].threshold;
        nd.level_mask = best[s].mask;
        nd.missing_left = best[s].missing_left;
        nd.left = (int)tree.nodes.size();
        nd.right = (int)tree.nodes.size() + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        model.importance_raw[best[s].feature] += best[s].gain;
        if (depth + 1 < params.max_depth) {
          next_active.push_back(nd.left);
          next_active.push_back(nd.right);
        }
      }
      for (std::size_t i = 0; i < m; ++i) {
        int s = slot_of[node_of[i]];
        if (s < 0 || !best[s].valid()) continue;
        const TreeNode& nd = tree.nodes[active[s]];
        double x = col[nd.feature][i];
        bool left;
        if (std::isnan(x))
          left = nd.missing_left;
        else if (nd.categorical)
          left = (nd.level_mask >> (int)x) & 1u;
        else
          left = x < nd.threshold;
        node_of[i] = left ? nd.left : nd.right;
      }
      active = std::move(next_active);
    }

    leaf_g.assign(tree.nodes.size(), 0.0);
    leaf_h.assign(tree.nodes.size(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      leaf_g[node_of[i]] += g[i];
      leaf_h[node_of[i]] += h[i];
    }
    for (std::size_t nid = 0; nid < tree.nodes.size(); ++nid) {
      TreeNode& nd = tree.nodes[nid];
      if (!nd.is_leaf()) continue;
      double v = leaf_g[nid] / std::max(leaf_h[nid], detail::kHessianFloor);
      nd.value = std::clamp(v, -detail::kMaxLeafValue, detail::kMaxLeafValue);
    }
    for (std::size_t i = 0; i < m; ++i)
      F[i] += params.learning_rate * tree.nodes[node_of[i]].value;

    model.trees.push_back(std::move(tree));
    model.train_deviance.push_back(deviance());
  }
  return model;
}

// ---------------------------------------------------------------------------
// scoring

namespace detail {

template <typename Getter>
double raw_score(const Model& model, Getter&& get) {
  double f = model.base_score;
  for (const Tree& tree : model.trees) {
    int id = 0;
    while (!tree.nodes[id].is_leaf()) {
      const TreeNode& nd = tree.nodes[id];
      double x = get(nd.feature);
      bool left;
      if (std::isnan(x))
        left = nd.missing_left;
      else if (nd.categorical)
        left = (nd.level_mask >> (int)x) & 1u;
      else
        left = x < nd.threshold;
      id = left ? nd.left : nd.right;
    }
    f += model.learning_rate * tree.nodes[id].value;
  }
  return f;
}

inline double clamp_proba(double p) {
  p = std::min(p, std::nextafter(1.0, 0.0));
  p = std::max(p, std::numeric_limits<double>::min());
  return p;
}

}  // namespace detail

inline double predict_proba(const Model& model, std::span<const double> row) {
  if (row.size() != model.feature_specs.size())
    throw DataError("predict_proba: row dimension mismatch");
  double f = detail::raw_score(model, [&](int c) { return row[c]; });
  return detail::clamp_proba(sigmoid(f));
}

inline std::vector<double> predict_proba(const Model& model,
                                         const Matrix& features) {
  if (features.specs != model.feature_specs)
    throw DataError("predict_proba: feature schema mismatch");
  std::vector<double> out(features.n_rows);
  for (std::size_t i = 0; i < features.n_rows; ++i) {
    double f = detail::raw_score(
        model, [&](int c) { return features.columns[c][i]; });
    out[i] = detail::clamp_proba(sigmoid(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// threshold tuning & evaluation

// Candidates are the midpoints between consecutive distinct sorted scores
// (the single distinct score itself when all scores are equal). A row is
// predicted positive iff score >= threshold. Ties in the objective resolve
// toward the smaller threshold.
inline double tune_threshold(std::span<const double> scores,
                             std::span<const char> labels,
                             ThresholdObjective objective) {
  if (scores.size() != labels.size())
    throw DataError("tune_threshold: score/label size mismatch");
  long long P = 0, N = 0;
  for (char l : labels) (l ? P : N) += 1;
  if (P == 0 || N == 0)
    throw NumericError(
        "degenerate_labels: threshold tuning requires both classes");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  std::vector<double> distinct;
  for (std::size_t k : idx)
    if (distinct.empty() || scores[k] != distinct.back())
      distinct.push_back(scores[k]);
  if (distinct.size() == 1) return distinct[0];

  auto objective_value = [&](long long tp, long long fp, long long tn,
                             long long fn) {
    switch (objective) {
      case ThresholdObjective::youden:
        return (double)tp / (double)P - (double)fp / (double)N;
      case ThresholdObjective::f1: {
        long long den = 2 * tp + fp + fn;
        return den == 0 ? 0.0 : 2.0 * (double)tp / (double)den;
      }
      case ThresholdObjective::balanced:
        return 0.5 * ((double)tp / (double)P + (double)tn / (double)N);
    }
    return 0.0;
  };

  double best_threshold = 0.0, best_value = -std::numeric_limits<double>::infinity();
  std::size_t pos_below = 0, neg_below = 0;  // rows with score < candidate
  std::size_t at = 0;                        // position in idx
  for (std::size_t d = 0; d + 1 < distinct.size(); ++d) {
    while (at < idx.size() && scores[idx[at]] == distinct[d]) {
      (labels[idx[at]] ? pos_below : neg_below) += 1;
      ++at;
    }
    double cand = std::midpoint(distinct[d], distinct[d + 1]);
    long long fn = (long long)pos_below, tn = (long long)neg_below;
    long long tp = P - fn, fp = N - tn;
    double v = objective_value(tp, fp, tn, fn);
    if (v > best_value) {
      best_value = v;
      best_threshold = cand;
    }
  }
  return best_threshold;
}

inline double tune_threshold(const Model& model, const Matrix& features,
                             std::span<const char> labels,
                             ThresholdObjective objective) {
  std::vector<double> scores = predict_proba(model, features);
  return tune_threshold(scores, labels, objective);
}

inline EvalResult evaluate_scores(std::span<const double> scores,
                                  std::span<const char> labels,
                                  double threshold) {
  if (scores.size() != labels.size() || scores.empty())
    throw DataError("evaluate: empty or mismatched evaluation set");
  EvalResult r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] >= threshold;
    bool truth = labels[i];
    if (pred && truth) ++r.cm.tp;
    else if (pred && !truth) ++r.cm.fp;
    else if (!pred && truth) ++r.cm.fn;
    else ++r.cm.tn;
  }
  auto rate = [](long long num, long long den) {
    return den == 0 ? 0.0 : (double)num / (double)den;
  };
  r.accuracy = rate(r.cm.tp + r.cm.tn, r.cm.total());
  r.precision = rate(r.cm.tp, r.cm.tp + r.cm.fp);
  r.recall = rate(r.cm.tp, r.cm.tp + r.cm.fn);
  r.tpr = r.recall;
  r.fpr = rate(r.cm.fp, r.cm.fp + r.cm.tn);
  double tnr = rate(r.cm.tn, r.cm.tn + r.cm.fp);
  r.balanced_accuracy = 0.5 * (r.tpr + tnr);
  return r;
}

inline EvalResult evaluate(const Model& model, const Matrix& features,
                           std::span<const char> labels, double threshold) {
  std::vector<double> scores = predict_proba(model, features);
  return evaluate_scores(scores, labels, threshold);
}

// ---------------------------------------------------------------------------
// feature importance

// Total split gain per feature, normalized to sum to 1; descending, ties
// broken by lower feature index. Empty when the ensemble contains no splits.
inline std::vector<std::pair<std::string, double>> feature_importance(
    const Model& model) {
  double total = 0.0;
  for (double v : model.importance_raw) total += v;
  if (!(total > 0)) return {};
  std::vector<std::size_t> idx(model.importance_raw.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return model.importance_raw[a] > model.importance_raw[b];
  });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t c : idx)
    out.emplace_back(model.feature_specs[c].name,
                     model.importance_raw[c] / total);
  return out;
}

// ---------------------------------------------------------------------------
// serialization

inline nlohmann::json node_to_json(const TreeNode& nd) {
  nlohmann::json j;
  if (nd.is_leaf()) {
    j["v"] = nd.value;
    return j;
  }
  j["f"] = nd.feature;
  if (nd.categorical) {
    j["m"] = nd.level_mask;
  } else {
    j["t"] = nd.threshold;
    j["ml"] = nd.missing_left ? 1 : 0;
  }
  j["l"] = nd.left;
  j["r"] = nd.right;
  return j;
}

inline TreeNode node_from_json(const nlohmann::json& j) {
  TreeNode nd;
  if (j.contains("v")) {
    nd.value = j["v"].get<double>();
    return nd;
  }
  nd.feature = j.at("f").get<int>();
  if (j.contains("m")) {
    nd.categorical = true;
    nd.level_mask = j["m"].get<std::uint32_t>();
  } else {
    nd.threshold = j.at("t").get<double>();
    nd.missing_left = j.at("ml").get<int>() != 0;
  }
  nd.left = j.at("l").get<int>();
  nd.right = j.at("r").get<int>();
  return nd;
}

inline nlohmann::json model_to_json(const Model& model) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["library_version"] = kVersion;
  j["base_score"] = model.base_score;
  j["learning_rate"] = model.learning_rate;
  j["threshold"] = model.threshold;
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : model.feature_specs) {
    nlohmann::json js;
    js["name"] = s.name;
    js["kind"] = s.kind == ColumnKind::numeric ? "numeric" : "categorical";
    js["n_levels"] = s.n_levels;
    specs.push_back(js);
  }
  j["feature_specs"] = specs;
  j["params"] = {{"n_trees", model.params.n_trees},
                 {"max_depth", model.params.max_depth},
                 {"learning_rate", model.params.learning_rate},
                 {"min_leaf", model.params.min_leaf},
                 {"seed", std::to_string(model.params.seed)},
                 {"undersample_ratio", model.params.undersample_ratio},
                 {"use_histogram", model.params.use_histogram},
                 {"histogram_bins", model.params.histogram_bins}};
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : model.trees) {
    nlohmann::json jt = nlohmann::json::array();
    for (const TreeNode& nd : t.nodes) jt.push_back(node_to_json(nd));
    trees.push_back(jt);
  }
  j["trees"] = trees;
  j["train_deviance"] = model.train_deviance;
  j["importance_raw"] = model.importance_raw;
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
    throw DataError("model file: unsupported or missing format_version");
  Model model;
  model.base_score = j.at("base_score").get<double>();
  model.learning_rate = j.at("learning_rate").get<double>();
  model.threshold = j.at("threshold").get<double>();
  for (const auto& js : j.at("feature_specs")) {
    ColumnSpec s;
    s.name = js.at("name").get<std::string>();
    s.kind = js.at("kind").get<std::string>() == "categorical"
                 ? ColumnKind::categorical
                 : ColumnKind::numeric;
    s.n_levels = js.at("n_levels").get<int>();
    model.feature_specs.push_back(s);
  }
  const auto& jp = j.at("params");
  model.params.n_trees = jp.at("n_trees").get<int>();
  model.params.max_depth = jp.at("max_depth").get<int>();
  model.params.learning_rate = jp.at("learning_rate").get<double>();
  model.params.min_leaf = jp.at("min_leaf").get<int>();
  model.params.seed = std::stoull(jp.at("seed").get<std::string>());
  model.params.undersample_ratio = jp.at("undersample_ratio").get<double>();
  model.params.use_histogram = jp.at("use_histogram").get<bool>();
  model.params.histogram_bins = jp.at("histogram_bins").get<int>();
  for (const auto& jt : j.at("trees")) {
    Tree t;
    for (const auto& jn : jt) t.nodes.push_back(node_from_json(jn));
    model.trees.push_back(std::move(t));
  }
  model.train_deviance = j.at("train_deviance").get<std::vector<double>>();
  model.importance_raw = j.at("importance_raw").get<std::vector<double>>();
  return model;
}

}  // namespace propensity::gbdt
