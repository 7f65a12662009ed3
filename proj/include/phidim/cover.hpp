#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "phidim/common.hpp"
#include "phidim/dimfun.hpp"

namespace phidim::cover {

using dimfun::DimFn;
using dimfun::ScaleGrid;

// ------------------------------------------------------------------
// set representations

// Finite 1-d approximation: sorted distinct reals with a smallest trusted
// scale.  Covering queries below the resolution are refused rather than
// answered with degenerate counts.
struct PointSet1D {
  std::vector<double> points;  // strictly increasing
  double resolution = 0.0;

  static PointSet1D from_sorted(std::vector<double> pts, double delta) {
    PointSet1D s;
    require(delta > 0.0, errc::domain, "resolution must be positive");
    for (std::size_t i = 1; i < pts.size(); ++i)
      require(pts[i] > pts[i - 1], errc::precondition, "points must be strictly increasing");
    s.points = std::move(pts);
    s.resolution = delta;
    return s;
  }
};

// Occupied-cell representation of a nested subdivision of [0,1]^d.  Cell
// codes append one base-`fanout` digit per level, so descendants of a cell
// occupy one contiguous code range per level.  `uniform` marks regular
// b-adic geometry (percolation, full cubes); Moran materializations carry
// their own per-level scale ladder and non-uniform corner geometry.
struct GridSetD {
  int d = 1;
  double base = 2.0;  // per-axis subdivision of the uniform geometry
  bool uniform = true;
  std::vector<double> level_log_scale;          // log(1/side) per level, [0] = 0
  std::vector<std::vector<uint64_t>> levels;    // sorted occupied codes per level

  int depth() const { return int(levels.size()) - 1; }
  uint64_t fanout() const {
    uint64_t f = 1;
    for (int a = 0; a < d; ++a) f *= uint64_t(std::llround(base));
    return f;
  }
};

// Symbolic tree with contiguous child storage: children of node i at level
// k sit at level k+1 in [child_start[k][i], child_start[k][i+1]).  Metric:
// two boundary points at common-ancestor level k are at distance
// exp(-k*log_base).
struct SymbolicTree {
  double log_base = 1.0;
  std::vector<std::vector<uint32_t>> child_start;  // per level 0..K-1, length Z_k + 1
  uint32_t deepest_count = 1;

  int depth() const { return int(child_start.size()); }
  uint32_t level_size(int k) const {
    if (k == depth()) return deepest_count;
    return uint32_t(child_start[std::size_t(k)].size()) - 1;
  }
  // descendant index range of node (k, i) at level k + down
  std::pair<uint32_t, uint32_t> descendants(int k, uint32_t i, int down) const {
    uint32_t lo = i, hi = i + 1;
    for (int s = 0; s < down; ++s) {
      const auto& cs = child_start[std::size_t(k + s)];
      lo = cs[lo];
      hi = cs[hi];
    }
    return {lo, hi};
  }
  // alive[k][i]: node has a descendant at the deepest stored level
  std::vector<std::vector<char>> alive_table() const {
    std::vector<std::vector<char>> alive(std::size_t(depth()) + 1);
    alive[std::size_t(depth())].assign(deepest_count, 1);
    for (int k = depth() - 1; k >= 0; --k) {
      const auto& cs = child_start[std::size_t(k)];
      auto& row = alive[std::size_t(k)];
      row.assign(cs.size() - 1, 0);
      for (std::size_t i = 0; i + 1 < cs.size(); ++i)
        for (uint32_t c = cs[i]; c < cs[i + 1] && !row[i]; ++c) row[i] = alive[std::size_t(k) + 1][c];
    }
    return alive;
  }
};

using CoverableSet = std::variant<PointSet1D, GridSetD, SymbolicTree>;

// ------------------------------------------------------------------
// covering counts

// Minimal number of closed intervals of length 2r covering points in
// [a, b]; the left-to-right greedy sweep is optimal in one dimension.
inline long count_cover_1d(const PointSet1D& set, double a, double b, double r) {
  require(r > 0.0, errc::domain, "covering radius must be positive");
  require(r >= set.resolution, errc::resolution, "covering radius below the trusted resolution");
  require(a <= b, errc::domain, "invalid window");
  const auto& p = set.points;
  auto it = std::lower_bound(p.begin(), p.end(), a);
  long n = 0;
  while (it != p.end() && *it <= b) {
    ++n;
    it = std::upper_bound(it, p.end(), *it + 2.0 * r);
  }
  return n;
}

// Occupied level-j cells inside the anchor cell; in ball mode also inside
// the anchor's 3^d - 1 neighbours (uniform geometry only).
inline long count_cells(const GridSetD& set, int anchor_level, uint64_t anchor_code, int j,
                        bool ball_mode = false) {
  require(anchor_level >= 0 && anchor_level <= set.depth() && j <= set.depth(), errc::depth,
          "scale outside stored depth");
  require(j >= anchor_level, errc::domain, "covering level must refine the anchor level");
  const auto& lv = set.levels[std::size_t(anchor_level)];
  require(std::binary_search(lv.begin(), lv.end(), anchor_code), errc::precondition, "anchor cell not occupied");

  std::vector<uint64_t> anchors{anchor_code};
  if (ball_mode && set.d >= 1) {
    require(set.uniform, errc::domain, "ball mode needs uniform cell geometry");
    uint64_t b = uint64_t(std::llround(set.base));
    uint64_t side = 1;
    for (int s = 0; s < anchor_level; ++s) side *= b;
    // decode per-axis coordinates of the anchor
    std::vector<uint64_t> coord(std::size_t(set.d), 0);
    uint64_t code = anchor_code;
    std::vector<uint64_t> digits(static_cast<std::size_t>(anchor_level));
    for (int s = anchor_level; s-- > 0;) {
      digits[std::size_t(s)] = code % set.fanout();
      code /= set.fanout();
    }
    for (int s = 0; s < anchor_level; ++s) {
      uint64_t child = digits[std::size_t(s)];
      for (int a = 0; a < set.d; ++a) {
        coord[std::size_t(a)] = coord[std::size_t(a)] * b + (child % b);
        child /= b;
      }
    }
    // enumerate neighbour offsets in {-1,0,1}^d
    int combos = 1;
    for (int a = 0; a < set.d; ++a) combos *= 3;
    for (int c = 0; c < combos; ++c) {
      if (c == combos / 2) continue;  // the anchor itself (all offsets zero)
      std::vector<int64_t> nc(std::size_t(set.d));
      int t = c;
      bool ok = true;
      for (int a = 0; a < set.d; ++a) {
        int off = (t % 3) - 1;
        t /= 3;
        int64_t v = int64_t(coord[std::size_t(a)]) + off;
        if (v < 0 || v >= int64_t(side)) ok = false;
        nc[std::size_t(a)] = v;
      }
      if (!ok) continue;
      // re-encode, most-significant digit first
      uint64_t ncode = 0;
      for (int s = 0; s < anchor_level; ++s) {
        uint64_t shift = 1;
        for (int q = 0; q < anchor_level - 1 - s; ++q) shift *= b;
        uint64_t child = 0, mul = 1;
        for (int a = 0; a < set.d; ++a) {
          uint64_t digit = (uint64_t(nc[std::size_t(a)]) / shift) % b;
          child += digit * mul;
          mul *= b;
        }
        ncode = ncode * set.fanout() + child;
      }
      if (std::binary_search(lv.begin(), lv.end(), ncode)) anchors.push_back(ncode);
    }
  }

  const auto& lj = set.levels[std::size_t(j)];
  uint64_t span = 1;
  for (int s = 0; s < j - anchor_level; ++s) span *= set.fanout();
  long total = 0;
  for (uint64_t a : anchors) {
    auto lo = std::lower_bound(lj.begin(), lj.end(), a * span);
    auto hi = std::lower_bound(lj.begin(), lj.end(), (a + 1) * span);
    total += long(hi - lo);
  }
  return total;
}

// ------------------------------------------------------------------
// dimension profiles

struct ProfileRow {
  int scale_index = 0;
  double R = 0.0;
  double phi = 0.0;
  double gap_exponent = 0.0;  // realized log(R/r)
  double count = 0.0;
  double local_dim = 0.0;
};

struct DimProfile {
  std::vector<ProfileRow> rows;
  double tail_sup = 0.0;
  double argmax_scale = 0.0;
  bool extinct = false;

  std::string to_csv(bool with_summary = false) const {
    std::string out = "scale_index,R,phi_R,gap_exponent,count,local_dim\n";
    for (const auto& r : rows) {
      out += std::to_string(r.scale_index) + "," + fmt_g12(r.R) + "," + fmt_g12(r.phi) + "," +
             fmt_g12(r.gap_exponent) + "," + fmt_g12(r.count) + "," + fmt_g12(r.local_dim) + "\n";
    }
    if (with_summary) {
      nlohmann::json s{{"tail_sup", tail_sup}, {"argmax_scale", argmax_scale}, {"extinct", extinct}};
      out += s.dump() + "\n";
    }
    return out;
  }
};

struct ProfileOptions {
  double tail_fraction = 0.5;
  bool origin_anchored = false;   // restrict centers to 0 (1-d sequence sets)
  bool survivors_only = true;     // tree centers must have a surviving branch
  bool ball_mode = false;         // grid sets: include 3^d-1 neighbours
};

namespace detail {

inline void finish(DimProfile& prof, double tail_fraction) {
  auto s = tail_sup(prof.rows, [](const ProfileRow& r) { return r.local_dim; }, tail_fraction);
  if (!prof.rows.empty()) {
    prof.tail_sup = s.sup;
    prof.argmax_scale = prof.rows[s.argmax].R;
  }
}

// greedy chain as jump pointers with binary lifting; exact max over all
// centers at O(log n) per center
inline long max_count_points_lifted(const PointSet1D& set, double R, double r) {
  const auto& p = set.points;
  const std::size_t n = p.size();
  std::vector<uint32_t> next(n);
  {
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (j < i + 1) j = i + 1;
      while (j < n && p[j] <= p[i] + 2.0 * r) ++j;
      next[i] = uint32_t(j);
    }
  }
  int levels = 1;
  while ((std::size_t(1) << levels) < n) ++levels;
  std::vector<std::vector<uint32_t>> up(static_cast<std::size_t>(levels));
  up[0] = std::move(next);
  for (int l = 1; l < levels; ++l) {
    up[std::size_t(l)].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      uint32_t mid = up[std::size_t(l - 1)][i];
      up[std::size_t(l)][i] = mid >= n ? uint32_t(n) : up[std::size_t(l - 1)][mid];
    }
  }
  long best = 0;
  for (std::size_t c = 0; c < n; ++c) {
    double a = p[c] - R, b = p[c] + R;
    std::size_t i = std::size_t(std::lower_bound(p.begin(), p.end(), a) - p.begin());
    if (i >= n || p[i] > b) continue;
    long cnt = 1;
    for (int l = levels - 1; l >= 0; --l) {
      uint32_t q = up[std::size_t(l)][i];
      if (q < n && p[q] <= b) {
        i = q;
        cnt += long(1) << l;
      }
    }
    best = std::max(best, cnt);
  }
  return best;
}

inline long max_count_points(const PointSet1D& set, double R, double r, bool origin_anchored) {
  // anchored windows keep the full ball diameter with left endpoint 0
  if (origin_anchored) return count_cover_1d(set, 0.0, 2.0 * R, r);
  if (set.points.size() > 4096) return max_count_points_lifted(set, R, r);
  long best = 0;
  for (double x : set.points) best = std::max(best, count_cover_1d(set, x - R, x + R, r));
  return best;
}

inline int grid_level_for(const GridSetD& set, double L) {
  // finest stored level whose cells are still at least as coarse as e^{-L},
  // i.e. max {k : level_log_scale[k] <= L}, clamped to stored depth
  int k = 0;
  while (k + 1 <= set.depth() && set.level_log_scale[std::size_t(k + 1)] <= L + 1e-12) ++k;
  return k;
}

}  // namespace detail

// Profile of the phi-pinned localized covering exponents: per scale R_j the
// max over admissible centers of N_{R^{1+phi(R)}}(B(x,R) cap F), and the
// local value log N / (-phi(R) log R).
inline DimProfile phi_profile(const PointSet1D& set, const DimFn& phi, const ScaleGrid& grid,
                              const ProfileOptions& opt = {}) {
  DimProfile prof;
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double L = grid.log_scale(j);
    if (L <= phi.min_log_scale()) continue;
    double p = phi.eval_log(L);
    double Lr = (1.0 + p) * L;
    double r = std::exp(-Lr);
    if (r < set.resolution) continue;  // below the trusted scale
    long n = detail::max_count_points(set, std::exp(-L), r, opt.origin_anchored);
    n = std::max<long>(n, 1);
    double gap = p * L;
    prof.rows.push_back({j, std::exp(-L), p, gap, double(n), std::log(double(n)) / gap});
  }
  require(!prof.rows.empty(), errc::range, "no admissible scales in grid");
  detail::finish(prof, opt.tail_fraction);
  return prof;
}

inline DimProfile phi_profile(const GridSetD& set, const DimFn& phi, const ScaleGrid& grid,
                              const ProfileOptions& opt = {}) {
  DimProfile prof;
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double L = grid.log_scale(j);
    if (L <= phi.min_log_scale()) continue;
    double p = phi.eval_log(L);
    double Lr = (1.0 + p) * L;
    int n = detail::grid_level_for(set, L);
    int m = detail::grid_level_for(set, Lr);
    if (set.level_log_scale[std::size_t(m)] + 1e-12 < Lr && m == set.depth()) continue;  // too deep
    long best = 0;
    for (uint64_t a : set.levels[std::size_t(n)])
      best = std::max(best, count_cells(set, n, a, m, opt.ball_mode));
    double gap = p * L;
    prof.rows.push_back({j, std::exp(-L), p, gap, double(best), std::log(double(best)) / gap});
  }
  require(!prof.rows.empty(), errc::range, "no admissible scales in grid");
  detail::finish(prof, opt.tail_fraction);
  return prof;
}

// Tree profile at the set's own levels: R = exp(-k log_base), the covering
// scale R^{1+phi(R)} realized as the integer level gap round(k*phi).  The
// gap exponent stored per row is the realized gap*log_base, so
// local_dim = log(count)/gap_exponent holds row-wise.
inline DimProfile phi_profile(const SymbolicTree& tree, const DimFn& phi, const ProfileOptions& opt = {}) {
  DimProfile prof;
  auto alive = opt.survivors_only ? tree.alive_table() : std::vector<std::vector<char>>{};
  bool any_admissible = false;
  for (int k = 1; k <= tree.depth(); ++k) {
    double L = double(k) * tree.log_base;
    if (L <= phi.min_log_scale()) continue;
    double p = phi.eval_log(L);
    int gap_levels = int(std::llround(p * double(k)));
    if (gap_levels < 1) continue;
    any_admissible = true;
    if (k + gap_levels > tree.depth()) continue;
    long best = -1;
    for (uint32_t i = 0; i < tree.level_size(k); ++i) {
      if (opt.survivors_only && !alive[std::size_t(k)][i]) continue;
      auto [lo, hi] = tree.descendants(k, i, gap_levels);
      best = std::max(best, long(hi) - long(lo));
    }
    if (best < 0) continue;  // no admissible center at this level
    double gap = double(gap_levels) * tree.log_base;
    prof.rows.push_back({k, std::exp(-L), p, gap, double(best), std::log(double(std::max<long>(best, 1))) / gap});
  }
  if (prof.rows.empty()) {
    if (tree.level_size(std::min(1, tree.depth())) == 0) {
      prof.extinct = true;
      return prof;
    }
    require(any_admissible, errc::range, "phi gap rounds to zero levels at every depth");
    prof.extinct = true;
    return prof;
  }
  detail::finish(prof, opt.tail_fraction);
  return prof;
}

inline DimProfile phi_profile(const CoverableSet& set, const DimFn& phi, const ScaleGrid& grid,
                              const ProfileOptions& opt = {}) {
  if (auto* p = std::get_if<PointSet1D>(&set)) return phi_profile(*p, phi, grid, opt);
  if (auto* g = std::get_if<GridSetD>(&set)) return phi_profile(*g, phi, grid, opt);
  return phi_profile(std::get<SymbolicTree>(set), phi, opt);
}

// Upper variant: all covering scales r <= R^{1+phi(R)} are admissible and
// the exponent is measured against the realized gap log(R/r).
inline DimProfile upper_phi_profile(const PointSet1D& set, const DimFn& phi, const ScaleGrid& grid,
                                    const ProfileOptions& opt = {}) {
  DimProfile prof;
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double L = grid.log_scale(j);
    if (L <= phi.min_log_scale()) continue;
    double p = phi.eval_log(L);
    double Lr_min = (1.0 + p) * L;
    // candidates: the pinned scale R^{1+phi(R)} itself, then every grid
    // scale below it down to the resolution
    std::vector<double> cand{Lr_min};
    for (int i = j + 1; i <= grid.j_max + 3 * grid.size(); ++i) {
      double Lr = grid.log_scale(i);
      if (Lr + 1e-12 < Lr_min) continue;
      if (std::exp(-Lr) < set.resolution) break;
      cand.push_back(Lr);
    }
    double best_val = -1.0, best_count = 0.0, best_gap = 0.0;
    for (double Lr : cand) {
      double r = std::exp(-Lr);
      if (r < set.resolution) continue;
      long n = detail::max_count_points(set, std::exp(-L), r, opt.origin_anchored);
      double val = std::log(double(std::max<long>(n, 1))) / (Lr - L);
      if (val > best_val) {
        best_val = val;
        best_count = double(n);
        best_gap = Lr - L;
      }
    }
    if (best_val < 0.0) continue;
    prof.rows.push_back({j, std::exp(-L), p, best_gap, best_count, best_val});
  }
  require(!prof.rows.empty(), errc::range, "no admissible scale pairs in grid");
  detail::finish(prof, opt.tail_fraction);
  return prof;
}

inline DimProfile upper_phi_profile(const SymbolicTree& tree, const DimFn& phi, const ProfileOptions& opt = {}) {
  DimProfile prof;
  auto alive = opt.survivors_only ? tree.alive_table() : std::vector<std::vector<char>>{};
  for (int k = 1; k <= tree.depth(); ++k) {
    double L = double(k) * tree.log_base;
    if (L <= phi.min_log_scale()) continue;
    double p = phi.eval_log(L);
    int gap_min = int(std::llround(p * double(k)));
    if (gap_min < 1 || k + gap_min > tree.depth()) continue;
    double best_val = -1.0, best_count = 0.0, best_gap = 0.0;
    for (uint32_t i = 0; i < tree.level_size(k); ++i) {
      if (opt.survivors_only && !alive[std::size_t(k)][i]) continue;
      uint32_t lo = i, hi = i + 1;
      for (int down = 1; k + down <= tree.depth(); ++down) {
        const auto& cs = tree.child_start[std::size_t(k + down - 1)];
        lo = cs[lo];
        hi = cs[hi];
        if (down < gap_min) continue;
        double gap = double(down) * tree.log_base;
        double val = std::log(double(std::max<long>(long(hi) - long(lo), 1))) / gap;
        if (val > best_val) {
          best_val = val;
          best_count = double(hi - lo);
          best_gap = gap;
        }
      }
    }
    if (best_val < 0.0) continue;
    prof.rows.push_back({k, std::exp(-L), p, best_gap, best_count, best_val});
  }
  if (prof.rows.empty()) {
    prof.extinct = true;
    return prof;
  }
  detail::finish(prof, opt.tail_fraction);
  return prof;
}

inline DimProfile upper_phi_profile(const GridSetD& set, const DimFn& phi, const ScaleGrid& grid,
                                    const ProfileOptions& opt = {}) {
  DimProfile prof;
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double L = grid.log_scale(j);
    if (L <= phi.min_log_scale()) continue;
    double p = phi.eval_log(L);
    int n = detail::grid_level_for(set, L);
    int m_min = detail::grid_level_for(set, (1.0 + p) * L);
    if (m_min <= n) continue;
    double best_val = -1.0, best_count = 0.0, best_gap = 0.0;
    for (uint64_t a : set.levels[std::size_t(n)]) {
      for (int m = m_min; m <= set.depth(); ++m) {
        double gap = set.level_log_scale[std::size_t(m)] - set.level_log_scale[std::size_t(n)];
        if (gap <= 0.0) continue;
        long cnt = count_cells(set, n, a, m, opt.ball_mode);
        double val = std::log(double(std::max<long>(cnt, 1))) / gap;
        if (val > best_val) {
          best_val = val;
          best_count = double(cnt);
          best_gap = gap;
        }
      }
    }
    if (best_val < 0.0) continue;
    prof.rows.push_back({j, std::exp(-L), p, best_gap, best_count, best_val});
  }
  require(!prof.rows.empty(), errc::range, "no admissible scale pairs in grid");
  detail::finish(prof, opt.tail_fraction);
  return prof;
}

inline DimProfile upper_phi_profile(const CoverableSet& set, const DimFn& phi, const ScaleGrid& grid,
                                    const ProfileOptions& opt = {}) {
  if (auto* p = std::get_if<PointSet1D>(&set)) return upper_phi_profile(*p, phi, grid, opt);
  if (auto* t = std::get_if<SymbolicTree>(&set)) return upper_phi_profile(*t, phi, opt);
  return upper_phi_profile(std::get<GridSetD>(set), phi, grid, opt);
}

// Global box-counting profile log N_R(F) / log(1/R).
inline DimProfile box_profile(const PointSet1D& set, const ScaleGrid& grid, double tail_fraction = 0.5) {
  DimProfile prof;
  require(!set.points.empty(), errc::precondition, "empty point set");
  double a = set.points.front(), b = set.points.back();
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double R = grid.scale(j);
    if (R < set.resolution) continue;
    long n = count_cover_1d(set, a, b, R);
    prof.rows.push_back({j, R, 0.0, grid.log_scale(j), double(n),
                         std::log(double(std::max<long>(n, 1))) / grid.log_scale(j)});
  }
  require(!prof.rows.empty(), errc::range, "no admissible scales in grid");
  detail::finish(prof, tail_fraction);
  return prof;
}

inline DimProfile box_profile(const GridSetD& set, const ScaleGrid& grid, double tail_fraction = 0.5) {
  DimProfile prof;
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double L = grid.log_scale(j);
    int k = detail::grid_level_for(set, L);
    double n = double(set.levels[std::size_t(k)].size());
    prof.rows.push_back({j, std::exp(-L), 0.0, L, n, std::log(std::max(n, 1.0)) / L});
  }
  detail::finish(prof, tail_fraction);
  return prof;
}

inline DimProfile box_profile(const SymbolicTree& tree, double tail_fraction = 0.5) {
  DimProfile prof;
  for (int k = 1; k <= tree.depth(); ++k) {
    double L = double(k) * tree.log_base;
    double n = double(tree.level_size(k));
    if (n == 0.0) break;
    prof.rows.push_back({k, std::exp(-L), 0.0, L, n, std::log(std::max(n, 1.0)) / L});
  }
  if (prof.rows.empty()) {
    prof.extinct = true;
    return prof;
  }
  detail::finish(prof, tail_fraction);
  return prof;
}

inline DimProfile box_profile(const CoverableSet& set, const ScaleGrid& grid, double tail_fraction = 0.5) {
  if (auto* p = std::get_if<PointSet1D>(&set)) return box_profile(*p, grid, tail_fraction);
  if (auto* g = std::get_if<GridSetD>(&set)) return box_profile(*g, grid, tail_fraction);
  return box_profile(std::get<SymbolicTree>(set), tail_fraction);
}

}  // namespace phidim::cover
