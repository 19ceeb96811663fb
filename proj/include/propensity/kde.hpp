#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "propensity/csv.hpp"
#include "propensity/errors.hpp"

namespace propensity::geo {

struct Point {
  double x = 0.0, y = 0.0;
};

struct GridSpec {
  double x0 = 0.0, y0 = 0.0;  // lower-left corner of cell (0, 0)
  double cell = 0.0;
  int n_cols = 0, n_rows = 0;
};

struct DensitySurface {
  double x0 = 0.0, y0 = 0.0;
  double cell_size = 0.0;
  int n_cols = 0, n_rows = 0;
  double bandwidth = 0.0;
  long long point_count = 0;
  std::vector<double> values;  // row-major density per m² at cell centers

  double& at(int col, int row) {
    return values[(std::size_t)row * n_cols + col];
  }
  double at(int col, int row) const {
    return values[(std::size_t)row * n_cols + col];
  }
  double center_x(int col) const { return x0 + (col + 0.5) * cell_size; }
  double center_y(int row) const { return y0 + (row + 0.5) * cell_size; }

  // numerical mass: sum of cell densities times cell area
  double mass() const {
    double m = 0.0;
    for (double v : values) m += v;
    return m * cell_size * cell_size;
  }
};

// 2-D rule-of-thumb bandwidth: h = n^(-1/6) * sqrt((var_x + var_y) / 2),
// with sample variances (n-1 denominator).
inline double silverman_bandwidth(std::span<const Point> points) {
  if (points.size() < 2)
    throw NumericError("silverman_bandwidth: needs at least 2 points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const Point& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (const Point& p : points) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  vx /= n - 1;
  vy /= n - 1;
  if (vx + vy == 0.0)
    throw NumericError(
        "silverman_bandwidth: all points coincident; supply a bandwidth");
  return std::pow(n, -1.0 / 6.0) * std::sqrt((vx + vy) / 2.0);
}

// Grid covering the point bounding box with `pad_bandwidths * h` of padding
// on every side. Mass-accuracy of the emitted surfaces relies on padding
// >= 4 bandwidths and an effective cell size <= h/2 (callers shrink `cell`
// before calling when needed).
inline GridSpec make_grid(std::span<const Point> points, double bandwidth,
                          double cell, double pad_bandwidths = 4.5) {
  if (points.empty()) throw DataError("make_grid: empty point set");
  if (!(bandwidth > 0) || !(cell > 0) || !(pad_bandwidths >= 0))
    throw ConfigError("make_grid: bandwidth, cell, and padding must be positive");
  double xmin = points[0].x, xmax = points[0].x;
  double ymin = points[0].y, ymax = points[0].y;
  for (const Point& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double pad = pad_bandwidths * bandwidth;
  GridSpec grid;
  grid.cell = cell;
  grid.x0 = xmin - pad;
  grid.y0 = ymin - pad;
  grid.n_cols = std::max(
      1, (int)std::ceil((xmax + pad - grid.x0) / cell));
  grid.n_rows = std::max(
      1, (int)std::ceil((ymax + pad - grid.y0) / cell));
  if ((long long)grid.n_cols * grid.n_rows > 4'000'000LL)
    throw ConfigError(
        "make_grid: grid exceeds 4M cells; increase cell size or bandwidth");
  return grid;
}

// Gaussian kernel density: value(g) = (1/n) sum_i N(g - p_i; h) with the
// isotropic 2-D normal kernel 1/(2 pi h^2) exp(-d^2 / (2 h^2)). Kernel
// evaluation is cut off beyond `cutoff_bandwidths * h` (<= 0 disables); the
// discarded kernel mass is exp(-c^2/2), about 6.7e-10 at the default 6.5.
inline DensitySurface kde(std::span<const Point> points, double bandwidth,
                          const GridSpec& grid,
                          double cutoff_bandwidths = 6.5) {
  if (points.empty()) throw DataError("kde: empty point set");
  if (!(bandwidth > 0)) throw ConfigError("kde: bandwidth must be positive");
  if (grid.n_cols < 1 || grid.n_rows < 1 || !(grid.cell > 0))
    throw ConfigError("kde: invalid grid");
  const double xend = grid.x0 + grid.cell * grid.n_cols;
  const double yend = grid.y0 + grid.cell * grid.n_rows;
  for (const Point& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw DataError("kde: non-finite point coordinate");
    if (p.x < grid.x0 || p.x > xend || p.y < grid.y0 || p.y > yend)
      throw DataError("kde: grid does not cover all points");
  }

  DensitySurface s;
  s.x0 = grid.x0;
  s.y0 = grid.y0;
  s.cell_size = grid.cell;
  s.n_cols = grid.n_cols;
  s.n_rows = grid.n_rows;
  s.bandwidth = bandwidth;
  s.point_count = (long long)points.size();
  s.values.assign((std::size_t)grid.n_cols * grid.n_rows, 0.0);

  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  const double norm = 1.0 / (2.0 * std::numbers::pi * bandwidth * bandwidth *
                             (double)points.size());
  const bool cut = cutoff_bandwidths > 0;
  const double radius = cut ? cutoff_bandwidths * bandwidth
                            : std::numeric_limits<double>::infinity();
  const double radius2 = radius * radius;

  // Per-point accumulation over the cells inside the cutoff window; each
  // cell receives its contributions in point order, so the result does not
  // depend on the traversal strategy.
  for (const Point& p : points) {
    int c_lo = 0, c_hi = grid.n_cols - 1, r_lo = 0, r_hi = grid.n_rows - 1;
    if (cut) {
      c_lo = std::max(0, (int)std::floor((p.x - radius - grid.x0) / grid.cell -
                                         0.5));
      c_hi = std::min(grid.n_cols - 1,
                      (int)std::ceil((p.x + radius - grid.x0) / grid.cell -
                                     0.5));
      r_lo = std::max(0, (int)std::floor((p.y - radius - grid.y0) / grid.cell -
                                         0.5));
      r_hi = std::min(grid.n_rows - 1,
                      (int)std::ceil((p.y + radius - grid.y0) / grid.cell -
                                     0.5));
    }
    for (int r = r_lo; r <= r_hi; ++r) {
      const double dy = s.center_y(r) - p.y;
      for (int c = c_lo; c <= c_hi; ++c) {
        const double dx = s.center_x(c) - p.x;
        const double d2 = dx * dx + dy * dy;
        if (d2 > radius2) continue;
        s.at(c, r) += norm * std::exp(-d2 * inv2h2);
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// hotspots

struct HotspotCell {
  int col = 0, row = 0;
  double density = 0.0;
};

using Ring = std::vector<std::array<double, 2>>;  // closed: first == last

struct HotspotPolygon {
  Ring outer;               // counterclockwise
  std::vector<Ring> holes;  // clockwise
  int component = 0;
  long long cell_count = 0;
  double max_density = 0.0;
};

struct HotspotResult {
  double quantile = 0.0;
  double threshold_density = 0.0;
  std::vector<HotspotCell> cells;
  std::vector<HotspotPolygon> polygons;
};

namespace detail {

// nearest-rank quantile over the positive-density cells
inline double positive_quantile(const DensitySurface& s, double q) {
  std::vector<double> positive;
  for (double v : s.values)
    if (v > 0.0) positive.push_back(v);
  if (positive.empty())
    throw DataError("hotspots: degenerate all-zero surface");
  std::sort(positive.begin(), positive.end());
  std::size_t k = std::max<std::size_t>(
      1, (std::size_t)std::ceil(q * (double)positive.size()));
  k = std::min(k, positive.size());
  return positive[k - 1];
}

struct BoundaryEdge {
  int from = 0, to = 0;  // vertex keys: row * (n_cols + 1) + col
  int dir = 0;           // 0:+x 1:+y 2:-x 3:-y
  int component = 0;
  bool used = false;
};

}  // namespace detail

// Cells whose density is at least the q-th nearest-rank quantile of the
// positive-density cells, merged into polygons by 4-connectivity. Outer
// rings wind counterclockwise, holes clockwise; ring vertices lie on the
// cell lattice in surface coordinates.
inline HotspotResult hotspots(const DensitySurface& s, double quantile) {
  if (!(quantile >= 0.0) || quantile >= 1.0)
    throw ConfigError("hotspots: quantile must lie in [0, 1)");
  HotspotResult result;
  result.quantile = quantile;
  result.threshold_density = detail::positive_quantile(s, quantile);

  const int W = s.n_cols, H = s.n_rows;
  std::vector<char> sel((std::size_t)W * H, 0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (s.at(c, r) >= result.threshold_density) {
        sel[(std::size_t)r * W + c] = 1;
        result.cells.push_back({c, r, s.at(c, r)});
      }

  // 4-connected component labels in row-major discovery order
  std::vector<int> comp((std::size_t)W * H, -1);
  int n_comp = 0;
  std::deque<std::pair<int, int>> queue;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!sel[(std::size_t)r * W + c] || comp[(std::size_t)r * W + c] >= 0)
        continue;
      const int id = n_comp++;
      comp[(std::size_t)r * W + c] = id;
      queue.push_back({c, r});
      while (!queue.empty()) {
        auto [cc, rr] = queue.front();
        queue.pop_front();
        constexpr int dc[4] = {1, -1, 0, 0};
        constexpr int dr[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          int nc = cc + dc[k], nr = rr + dr[k];
          if (nc < 0 || nc >= W || nr < 0 || nr >= H) continue;
          std::size_t ni = (std::size_t)nr * W + nc;
          if (sel[ni] && comp[ni] < 0) {
            comp[ni] = id;
            queue.push_back({nc, nr});
          }
        }
      }
    }
  }

  // boundary edges, directed with the selected interior on the left
  auto vkey = [W](int col, int row) { return row * (W + 1) + col; };
  std::vector<detail::BoundaryEdge> edges;
  auto selected = [&](int c, int r) {
    return c >= 0 && c < W && r >= 0 && r < H && sel[(std::size_t)r * W + c];
  };
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!sel[(std::size_t)r * W + c]) continue;
      const int id = comp[(std::size_t)r * W + c];
      if (!selected(c, r - 1))
        edges.push_back({vkey(c, r), vkey(c + 1, r), 0, id, false});
      if (!selected(c + 1, r))
        edges.push_back({vkey(c + 1, r), vkey(c + 1, r + 1), 1, id, false});
      if (!selected(c, r + 1))
        edges.push_back({vkey(c + 1, r + 1), vkey(c, r + 1), 2, id, false});
      if (!selected(c - 1, r))
        edges.push_back({vkey(c, r + 1), vkey(c, r), 3, id, false});
    }
  }
  std::unordered_map<int, std::vector<int>> outgoing;
  outgoing.reserve(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e)
    outgoing[edges[e].from].push_back((int)e);

  auto vertex_xy = [&](int key) {
    const int row = key / (W + 1), col = key % (W + 1);
    return std::array<double, 2>{s.x0 + col * s.cell_size,
                                 s.y0 + row * s.cell_size};
  };

  struct TracedRing {
    Ring coords;
    int component = 0;
    double signed_area = 0.0;
  };
  std::vector<TracedRing> rings;

  for (std::size_t e0 = 0; e0 < edges.size(); ++e0) {
    if (edges[e0].used) continue;
    std::vector<int> path;  // edge indices
    int cur = (int)e0;
    while (true) {
      edges[cur].used = true;
      path.push_back(cur);
      if (edges[cur].to == edges[e0].from) break;
      const auto& cands = outgoing[edges[cur].to];
      // prefer the sharpest left turn to keep rings simple at saddle points
      int next = -1;
      for (int pref : {(edges[cur].dir + 1) % 4, edges[cur].dir,
                       (edges[cur].dir + 3) % 4}) {
        for (int cand : cands) {
          if (!edges[cand].used && edges[cand].dir == pref) {
            next = cand;
            break;
          }
        }
        if (next >= 0) break;
      }
      if (next < 0)
        throw NumericError("hotspots: boundary tracing failed to close ring");
      cur = next;
    }
    TracedRing ring;
    ring.component = edges[e0].component;
    // collect vertices, dropping collinear intermediates
    std::vector<int> verts;
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (k > 0 && edges[path[k]].dir == edges[path[k - 1]].dir) continue;
      verts.push_back(edges[path[k]].from);
    }
    // the seam between last and first edge may be collinear too
    if (verts.size() > 1 &&
        edges[path.front()].dir == edges[path.back()].dir)
      verts.erase(verts.begin());
    for (int v : verts) ring.coords.push_back(vertex_xy(v));
    ring.coords.push_back(ring.coords.front());
    double area2 = 0.0;
    for (std::size_t k = 0; k + 1 < ring.coords.size(); ++k)
      area2 += ring.coords[k][0] * ring.coords[k + 1][1] -
               ring.coords[k + 1][0] * ring.coords[k][1];
    ring.signed_area = area2 / 2.0;
    rings.push_back(std::move(ring));
  }

  result.polygons.resize(n_comp);
  for (int id = 0; id < n_comp; ++id) result.polygons[id].component = id;
  for (auto& ring : rings) {
    HotspotPolygon& poly = result.polygons[ring.component];
    if (ring.signed_area > 0) {
      poly.outer = std::move(ring.coords);
    } else {
      poly.holes.push_back(std::move(ring.coords));
    }
  }
  for (const HotspotCell& cell : result.cells) {
    HotspotPolygon& poly =
        result.polygons[comp[(std::size_t)cell.row * W + cell.col]];
    ++poly.cell_count;
    poly.max_density = std::max(poly.max_density, cell.density);
  }
  return result;
}

// ---------------------------------------------------------------------------
// output

inline void write_surface_csv(const DensitySurface& s,
                              const std::string& path) {
  csv::Writer w(path);
  w.write_row(std::vector<std::string>{"x", "y", "density"});
  for (int r = 0; r < s.n_rows; ++r)
    for (int c = 0; c < s.n_cols; ++c)
      w.write_row(std::vector<std::string>{csv::fmt_double(s.center_x(c)),
                                           csv::fmt_double(s.center_y(r)),
                                           csv::fmt_double(s.at(c, r))});
  w.close();
}

inline nlohmann::json to_geojson(const HotspotResult& result,
                                 const std::string& direction,
                                 double bandwidth) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& poly : result.polygons) {
    nlohmann::json rings = nlohmann::json::array();
    auto ring_json = [](const Ring& ring) {
      nlohmann::json jr = nlohmann::json::array();
      for (const auto& xy : ring) jr.push_back({xy[0], xy[1]});
      return jr;
    };
    rings.push_back(ring_json(poly.outer));
    for (const auto& hole : poly.holes) rings.push_back(ring_json(hole));
    nlohmann::json feature;
    feature["type"] = "Feature";
    feature["geometry"] = {{"type", "Polygon"}, {"coordinates", rings}};
    feature["properties"] = {{"direction", direction},
                             {"quantile", result.quantile},
                             {"bandwidth", bandwidth},
                             {"threshold_density", result.threshold_density},
                             {"cell_count", poly.cell_count},
                             {"max_density", poly.max_density},
                             {"component", poly.component}};
    features.push_back(feature);
  }
  nlohmann::json j;
  j["type"] = "FeatureCollection";
  j["features"] = features;
  return j;
}

}  // namespace propensity::geo
