#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "phidim/common.hpp"
#include "phidim/cover.hpp"
#include "phidim/dimfun.hpp"

namespace phidim::moran {

using cover::GridSetD;
using cover::PointSet1D;
using dimfun::DimFn;
using dimfun::ScaleGrid;

// ------------------------------------------------------------------
// specification

// Homogeneous Moran set in [0,1]^d: at level n every cube splits into 2^d
// corner cubes contracted by r_n <= 1/2.  Ratios are kept as log(1/r_n);
// constructed ladders reach scales far below double range.
struct PeriodicRule {
  std::vector<double> neglog_pattern;
};
// Alternating blocks: block i uses ratio i % ratios.size() and has length
// round(initial_len * growth^i), a geometric block program.
struct BlocksRule {
  std::vector<double> neglog_ratios;
  long initial_len = 1;
  double growth = 2.0;
};
using Rule = std::variant<std::monostate, PeriodicRule, BlocksRule>;

struct MoranSpec {
  int d = 1;
  std::vector<double> prefix_neglog;  // log(1/r_n), n = 1..K, each >= log 2
  Rule rule;

  static MoranSpec from_ratios(int d, std::vector<double> ratios, Rule rule = std::monostate{}) {
    MoranSpec s;
    require(d >= 1, errc::domain, "ambient dimension must be at least 1");
    s.d = d;
    s.rule = std::move(rule);
    s.prefix_neglog.reserve(ratios.size());
    for (double r : ratios) {
      require(r > 0.0 && r <= 0.5, errc::domain, "contraction ratios must lie in (0, 1/2]");
      s.prefix_neglog.push_back(-std::log(r));
    }
    return s;
  }
};

// Materialized ladder of scales L_n = log(1/rho_n), extendable through the
// spec's generating rule.  Levels are grouped into stages so that nearby
// differences stay accurate even when L_n itself is astronomically large;
// diff(n, m) is the only sanctioned way to compare scales.
class ScaleLadder {
 public:
  explicit ScaleLadder(MoranSpec spec) : spec_(std::move(spec)) {
    L_ = {0.0};
    local_ = {0.0};
    stage_ = {0};
    stage_base_ = {0.0};
    for (double nl : spec_.prefix_neglog) push(nl);
  }

  int d() const { return spec_.d; }
  long depth() const { return long(L_.size()) - 1; }
  double L(long n) const { return L_[std::size_t(n)]; }
  double ratio_neglog(long n) const { return L_[std::size_t(n)] - L_[std::size_t(n - 1)]; }

  // L(m) - L(n), stage-aware
  double diff(long n, long m) const {
    if (n > m) return -diff(m, n);
    std::size_t i = std::size_t(n), j = std::size_t(m);
    if (stage_[i] == stage_[j]) return local_[j] - local_[i];
    return (stage_base_[std::size_t(stage_[j])] + local_[j]) - (stage_base_[std::size_t(stage_[i])] + local_[i]);
  }

  bool extendable() const { return !std::holds_alternative<std::monostate>(spec_.rule); }

  void ensure(long depth_needed) {
    while (depth() < depth_needed) {
      if (auto* p = std::get_if<PeriodicRule>(&spec_.rule)) {
        require(!p->neglog_pattern.empty(), errc::domain, "empty periodic pattern");
        push(p->neglog_pattern[std::size_t(rule_pos_ % long(p->neglog_pattern.size()))]);
        ++rule_pos_;
      } else if (auto* b = std::get_if<BlocksRule>(&spec_.rule)) {
        require(!b->neglog_ratios.empty(), errc::domain, "empty block rule");
        if (block_remaining_ == 0) {
          double len = double(b->initial_len) * std::pow(b->growth, double(block_index_));
          require(len < 1e15, errc::capacity, "block length overflow");
          block_remaining_ = std::max<long>(1, std::llround(len));
          block_ratio_ = b->neglog_ratios[std::size_t(block_index_ % long(b->neglog_ratios.size()))];
          ++block_index_;
        }
        push(block_ratio_);
        --block_remaining_;
      } else {
        fail(errc::depth, "ratio ladder exhausted at level " + std::to_string(depth()) +
                              " and the spec has no generating rule");
      }
    }
  }

  // starts a new precision stage at the current end (used by constructions
  // whose closing ratios jump by astronomically large factors)
  void push_stage_boundary(double neglog_ratio) {
    double base = L_.back() + neglog_ratio;
    stage_base_.push_back(base);
    L_.push_back(base);
    local_.push_back(0.0);
    stage_.push_back(int(stage_base_.size()) - 1);
  }

  void push(double neglog_ratio) {
    require(neglog_ratio >= kLog2 - 1e-12, errc::domain, "contraction ratio above 1/2");
    if (neglog_ratio > 1e6) {
      push_stage_boundary(neglog_ratio);
      return;
    }
    L_.push_back(L_.back() + neglog_ratio);
    local_.push_back(local_.back() + neglog_ratio);
    stage_.push_back(stage_.back());
  }

  const MoranSpec& spec() const { return spec_; }

 private:
  MoranSpec spec_;
  std::vector<double> L_;
  std::vector<double> local_;
  std::vector<int> stage_;
  std::vector<double> stage_base_;
  long rule_pos_ = 0;
  long block_index_ = 0;
  long block_remaining_ = 0;
  double block_ratio_ = kLog2;
};

// ------------------------------------------------------------------
// max-slope queries

// Static structure over points P_m = (L_m, m) answering
//   max over m in [m_lo, D] of (m - n)/(L_m - L_n)
// via per-block upper convex hulls.  Restricted to ladders whose scales fit
// comfortably in doubles.
class SlopeMax {
 public:
  SlopeMax(const ScaleLadder& lad, long depth) : lad_(lad), depth_(depth) {
    require(lad.L(depth) < 1e12, errc::numeric,
            "scale ladder too steep for slope queries at this depth");
    long nblocks = (depth_ + 1 + kBlock - 1) / kBlock;
    hull_.resize(std::size_t(nblocks));
    for (long b = 0; b < nblocks; ++b) {
      long lo = b * kBlock, hi = std::min(depth_ + 1, lo + kBlock);
      auto& h = hull_[std::size_t(b)];
      for (long m = lo; m < hi; ++m) {
        // upper hull in (L, m)-space
        while (h.size() >= 2 && turns_down(h[h.size() - 2], h.back(), m)) h.pop_back();
        h.push_back(m);
      }
    }
  }

  // max over m in [m_lo, D] of (m + y_offset - n) / (L_m - L_n); the
  // vertical offset leaves the hulls untouched
  double query(long n, long m_lo, long y_offset = 0) const {
    m_lo = std::max(m_lo, n + 1);
    if (m_lo > depth_) return -std::numeric_limits<double>::infinity();
    double best = -std::numeric_limits<double>::infinity();
    long b0 = m_lo / kBlock;
    // partial first block
    long partial_hi = std::min(depth_, (b0 + 1) * kBlock - 1);
    for (long m = m_lo; m <= partial_hi; ++m) best = std::max(best, slope(n, m, y_offset));
    for (long b = b0 + 1; b * kBlock <= depth_; ++b) {
      const auto& h = hull_[std::size_t(b)];
      long lo = 0, hi = long(h.size()) - 1;
      while (lo < hi) {
        long mid = (lo + hi) / 2;
        if (slope(n, h[std::size_t(mid)], y_offset) < slope(n, h[std::size_t(mid + 1)], y_offset))
          lo = mid + 1;
        else
          hi = mid;
      }
      best = std::max(best, slope(n, h[std::size_t(lo)], y_offset));
    }
    return best;
  }

  double slope(long n, long m, long y_offset = 0) const {
    return double(m + y_offset - n) / lad_.diff(n, m);
  }

 private:
  bool turns_down(long a, long b, long c) const {
    // keep only vertices of the upper hull
    double xba = lad_.diff(a, b), xca = lad_.diff(a, c);
    return (double(b - a)) * xca <= (double(c - a)) * xba;
  }

  static constexpr long kBlock = 256;
  const ScaleLadder& lad_;
  long depth_;
  std::vector<std::vector<long>> hull_;
};

// ------------------------------------------------------------------
// exact dimension formulas

struct DimRow {
  long n = 0;
  long m_n = 0;
  double value = 0.0;
};

struct ExactDim {
  std::vector<DimRow> rows;
  double tail_sup = 0.0;
  long argmax_n = 0;
};

struct DimOptions {
  double tail_fraction = 0.5;
  long sup_depth = 0;  // 0: choose automatically
};

namespace detail {

// max{ m >= n : L_m - L_n < g }, extending the ladder on demand
inline long find_m(ScaleLadder& lad, long n, double g) {
  while (lad.diff(n, lad.depth()) < g) {
    if (!lad.extendable())
      fail(errc::depth, "m_n search exceeds available ratio depth at level " + std::to_string(n));
    lad.ensure(lad.depth() * 2 + 64);
  }
  long lo = n, hi = lad.depth();  // invariant: diff(n,lo) < g <= diff(n,hi)
  while (hi - lo > 1) {
    long mid = lo + (hi - lo) / 2;
    (lad.diff(n, mid) < g ? lo : hi) = mid;
  }
  return lo;
}

inline long first_admissible_level(const ScaleLadder& lad, const DimFn& phi, long n_max) {
  double lmin = phi.min_log_scale();
  for (long n = 1; n <= n_max; ++n)
    if (lad.L(n) > lmin + 1e-12) return n;
  fail(errc::range, "no level within the dimension function's domain");
}

}  // namespace detail

// Per-level values (m_n - n) d log2 / (phi(rho_n) log(1/rho_n)) with
// m_n = max{ m >= n : rho_m > rho_n^{1 + phi(rho_n)} }; the summary is the
// sup over the tail fraction of levels.
inline ExactDim exact_phi_dim(ScaleLadder& lad, const DimFn& phi, long n_max, const DimOptions& opt = {}) {
  require(n_max >= 1, errc::domain, "n_max must be positive");
  lad.ensure(n_max);
  ExactDim out;
  long n0 = detail::first_admissible_level(lad, phi, n_max);
  out.rows.reserve(std::size_t(n_max - n0 + 1));
  const double c = double(lad.d()) * kLog2;
  for (long n = n0; n <= n_max; ++n) {
    double g = phi.eval_log(lad.L(n)) * lad.L(n);
    long m = detail::find_m(lad, n, g);
    out.rows.push_back({n, m, double(m - n) * c / g});
  }
  auto s = tail_sup(out.rows, [](const DimRow& r) { return r.value; }, opt.tail_fraction);
  out.tail_sup = s.sup;
  out.argmax_n = out.rows[s.argmax].n;
  return out;
}

inline ExactDim exact_phi_dim(const MoranSpec& spec, const DimFn& phi, long n_max, const DimOptions& opt = {}) {
  ScaleLadder lad(spec);
  return exact_phi_dim(lad, phi, n_max, opt);
}

// Upper variant: per-level sup over m >= m_n of (m - n) d log2 / log(rho_n/rho_m),
// truncated at the ladder's sup depth.
inline ExactDim exact_upper_phi_dim(ScaleLadder& lad, const DimFn& phi, long n_max,
                                    const DimOptions& opt = {}) {
  require(n_max >= 1, errc::domain, "n_max must be positive");
  lad.ensure(n_max);
  ExactDim out;
  long n0 = detail::first_admissible_level(lad, phi, n_max);
  const double c = double(lad.d()) * kLog2;
  // first pass: m_n for every level (this may grow the ladder)
  std::vector<long> mn(std::size_t(n_max + 1), 0);
  for (long n = n0; n <= n_max; ++n) {
    double g = phi.eval_log(lad.L(n)) * lad.L(n);
    mn[std::size_t(n)] = detail::find_m(lad, n, g);
  }
  long sup_depth = opt.sup_depth;
  if (sup_depth <= 0) {
    long mmax = *std::max_element(mn.begin(), mn.end());
    sup_depth = mmax + std::max<long>(64, (mmax - n_max) + (mmax - n_max) / 2);
  }
  if (lad.extendable()) lad.ensure(sup_depth);
  sup_depth = std::min(sup_depth, lad.depth());
  SlopeMax sm(lad, sup_depth);
  out.rows.reserve(std::size_t(n_max - n0 + 1));
  for (long n = n0; n <= n_max; ++n) {
    double v = c * sm.query(n, std::max(mn[std::size_t(n)], n + 1));
    out.rows.push_back({n, mn[std::size_t(n)], v});
  }
  auto s = tail_sup(out.rows, [](const DimRow& r) { return r.value; }, opt.tail_fraction);
  out.tail_sup = s.sup;
  out.argmax_n = out.rows[s.argmax].n;
  return out;
}

inline ExactDim exact_upper_phi_dim(const MoranSpec& spec, const DimFn& phi, long n_max,
                                    const DimOptions& opt = {}) {
  ScaleLadder lad(spec);
  return exact_upper_phi_dim(lad, phi, n_max, opt);
}

// Prefix-density profile n d log2 / log(1/rho_n); the tail sup reports the
// upper box dimension at desk depth.
inline ExactDim exact_box_dim(ScaleLadder& lad, long n_max, double tail_fraction = 0.5) {
  lad.ensure(n_max);
  ExactDim out;
  const double c = double(lad.d()) * kLog2;
  for (long n = 1; n <= n_max; ++n) out.rows.push_back({n, n, double(n) * c / lad.L(n)});
  auto s = tail_sup(out.rows, [](const DimRow& r) { return r.value; }, tail_fraction);
  out.tail_sup = s.sup;
  out.argmax_n = out.rows[s.argmax].n;
  return out;
}

// Sup of realized pair exponents over all scale pairs with gap at least
// min_gap_L; a desk stand-in for the Assouad dimension of the ladder.  On
// halving runs this equals d exactly, matching the ball-covering counts.
inline double exact_assouad_dim(ScaleLadder& lad, long n_max, double min_gap_L = 16.0 * kLog2) {
  lad.ensure(n_max + long(min_gap_L / kLog2) + 64);
  long depth = lad.depth();
  SlopeMax sm(lad, depth);
  const double c = double(lad.d()) * kLog2;
  double best = 0.0;
  for (long n = 0; n < depth; ++n) {
    if (lad.diff(n, depth) < min_gap_L) break;
    long lo = n, hi = depth;
    while (hi - lo > 1) {
      long mid = lo + (hi - lo) / 2;
      (lad.diff(n, mid) < min_gap_L ? lo : hi) = mid;
    }
    best = std::max(best, c * sm.query(n, hi));
  }
  return best;
}

// ------------------------------------------------------------------
// materialization

// Occupied-cell representation of M_depth.  Every word in {0,...,2^d-1}^n
// is occupied, so within any level-n cube the number of level-m cubes is
// exactly 2^{d(m-n)}; this is the oracle the exact formulas are checked
// against.
inline GridSetD materialize(ScaleLadder& lad, int depth, std::size_t cell_budget = (1u << 22)) {
  require(depth >= 0, errc::domain, "negative depth");
  lad.ensure(depth);
  GridSetD g;
  g.d = lad.d();
  g.base = 2.0;
  require(depth * lad.d() < 63, errc::capacity, "code width overflow");
  std::size_t total = 0;
  bool all_half = true;
  g.levels.resize(std::size_t(depth) + 1);
  g.level_log_scale.resize(std::size_t(depth) + 1);
  for (int k = 0; k <= depth; ++k) {
    uint64_t count = uint64_t(1) << (k * lad.d());
    total += count;
    require(total <= cell_budget, errc::capacity, "materialization exceeds the cell budget");
    auto& lv = g.levels[std::size_t(k)];
    lv.resize(count);
    for (uint64_t i = 0; i < count; ++i) lv[i] = i;
    g.level_log_scale[std::size_t(k)] = lad.L(k);
    if (k >= 1 && std::abs(lad.ratio_neglog(k) - kLog2) > 1e-12) all_half = false;
  }
  g.uniform = all_half;
  return g;
}

inline GridSetD materialize(const MoranSpec& spec, int depth, std::size_t cell_budget = (1u << 22)) {
  ScaleLadder lad(spec);
  return materialize(lad, depth, cell_budget);
}

// Left endpoints of the level-`depth` intervals of a one-dimensional Moran
// set, as a point set trusted down to rho_depth.
inline PointSet1D materialize_points(ScaleLadder& lad, int depth, std::size_t budget = (1u << 22)) {
  require(lad.d() == 1, errc::domain, "corner points are one-dimensional");
  lad.ensure(depth);
  require((std::size_t(1) << depth) <= budget, errc::capacity, "point budget exceeded");
  std::vector<double> pts{0.0};
  double rho_prev = 1.0;
  for (int k = 1; k <= depth; ++k) {
    double r = std::exp(-lad.ratio_neglog(k));
    double offset = (1.0 - r) * rho_prev;
    std::size_t m = pts.size();
    pts.reserve(2 * m);
    for (std::size_t i = 0; i < m; ++i) pts.push_back(pts[i] + offset);
    rho_prev *= r;
  }
  std::sort(pts.begin(), pts.end());
  return PointSet1D::from_sorted(std::move(pts), std::exp(-lad.L(depth)));
}

// ------------------------------------------------------------------
// gap construction

// Moran set whose covering number bursts at witness scales of phi but
// collapses everywhere else: blocks of ratio 1/2 from R_s down to just
// below R_s^{1+phi(R_s)}, then one closing ratio onto the next witness
// scale R_{s+1} < min{ R_s^{1+psi(R_s)}/4, R_s^s }.
struct GapStage {
  int stage = 0;
  long level = 0;       // k_s: ladder level with rho = R_s
  double neg_log_R = 0;  // log(1/R_s)
  long block_len = 0;   // halving steps in this stage
};

struct GapMoran {
  MoranSpec spec;              // prefix only; carries every built level
  std::vector<GapStage> ledger;
};

inline GapMoran build_gap_moran(const DimFn& phi, const DimFn& psi, double eps, long target_levels,
                                int d = 1) {
  require(eps > 0.0 && eps < 1.0, errc::domain, "eps must lie in (0,1)");
  require(target_levels >= 1, errc::domain, "target level count must be positive");
  require(d >= 1, errc::domain, "ambient dimension must be at least 1");

  auto is_witness = [&](double L) { return phi.eval_log(L) / psi.eval_log(L) < 1.0 - eps; };
  auto next_witness = [&](double from) -> double {
    double L = std::max(from, std::max(phi.min_log_scale(), psi.min_log_scale()) + 1.0);
    for (int it = 0; it < 4096; ++it) {
      if (is_witness(L)) return L;
      L *= 1.25;
      require(L < 1e280, errc::construction,
              "no witness scales with phi/psi < 1-eps in the representable range");
    }
    fail(errc::construction, "no witness scales with phi/psi < 1-eps in the representable range");
  };

  GapMoran out;
  out.spec.d = d;
  std::vector<double>& ratios = out.spec.prefix_neglog;
  double L_s = next_witness(2.0);
  // open the construction with one ratio landing exactly on R_1
  ratios.push_back(std::max(L_s, kLog2));
  L_s = std::max(L_s, kLog2);
  long k_s = 1;
  int stage = 1;
  while (true) {
    double gphi = phi.eval_log(L_s) * L_s;
    long block = long(std::floor(gphi / kLog2)) + 1;  // smallest j with j log2 > phi(R)L
    out.ledger.push_back({stage, k_s, L_s, block});
    for (long i = 0; i < block; ++i) ratios.push_back(kLog2);
    long k_end = k_s + block;  // level of the last halving cube
    if (k_end >= target_levels + block + 16) {
      // enough levels built; the last stage keeps its full block
      break;
    }
    double gpsi = psi.eval_log(L_s) * L_s;
    double L_next = std::max({(L_s + gpsi) + std::log(4.0) * 1.0000001, double(stage) * L_s * 1.0000001,
                              L_s + double(block) * kLog2 + kLog2});
    require(L_next < 1e280, errc::construction, "witness scales exhausted the double range");
    if (!is_witness(L_next)) L_next = next_witness(L_next);
    ratios.push_back(L_next - (L_s + double(block) * kLog2));  // closing ratio, lands on R_{s+1}
    L_s = L_next;
    k_s = k_end + 1;
    ++stage;
    if (k_s > target_levels + 16) break;
  }
  return out;
}

// ------------------------------------------------------------------
// cover-profile construction

// Moran spec matching a covering-number profile: rho_n is the threshold
// scale where N_r(F) first stays below 2^{(n+1)d}, located by bisection on
// a monotone count oracle.  Sandwiches N_r(F) within a 2^d factor.
inline MoranSpec build_profile_moran(const std::function<long(double)>& count_at, int d, int max_levels,
                                     double r_floor) {
  require(d >= 1, errc::domain, "ambient dimension must be at least 1");
  require(max_levels >= 1, errc::domain, "need at least one level");
  require(r_floor > 0.0 && r_floor < 1.0, errc::domain, "resolution floor outside (0,1)");
  std::vector<double> ratios;
  double prev_rho = 1.0;
  for (int n = 1; n <= max_levels; ++n) {
    double threshold = std::pow(2.0, double((n + 1) * d));
    if (double(count_at(r_floor)) < threshold) {
      require(n > 1, errc::inconsistency,
              "covering profile never reaches 2^(2d) balls above the resolution floor");
      break;  // profile exhausted at the trusted scale
    }
    // rho_n = inf { r : N_r(F) < 2^{(n+1)d} }; counts are nonincreasing in r
    double lo = r_floor, hi = prev_rho;  // N(hi) < threshold <= N(lo)
    if (double(count_at(hi)) >= threshold) {
      fail(errc::inconsistency, "covering profile is not monotone across levels");
    }
    for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-13; ++it) {
      double mid = std::sqrt(lo * hi);
      (double(count_at(mid)) >= threshold ? lo : hi) = mid;
    }
    double rho = hi;
    double ratio = rho / prev_rho;
    require(ratio <= 0.5 * (1.0 + 1e-9), errc::inconsistency,
            "profile demands a contraction ratio above 1/2");
    ratios.push_back(-std::log(std::min(ratio, 0.5)));
    prev_rho = rho;
  }
  MoranSpec s;
  s.d = d;
  s.prefix_neglog = std::move(ratios);
  require(!s.prefix_neglog.empty(), errc::inconsistency, "empty covering profile");
  return s;
}

inline MoranSpec build_profile_moran(const PointSet1D& F, int max_levels) {
  require(!F.points.empty(), errc::precondition, "empty point set");
  double a = F.points.front(), b = F.points.back();
  require(b - a > 0.0, errc::inconsistency, "degenerate set: covering profile undefined");
  auto count = [&](double r) { return cover::count_cover_1d(F, a, b, r); };
  return build_profile_moran(count, 1, max_levels, F.resolution);
}

// ------------------------------------------------------------------
// dimension-function recovery

struct Witness {
  double neg_log_R = 0.0;  // log(1/R_n), strictly increasing
  double theta = 0.0;      // strictly decreasing, theta*log(1/R) increasing
};

// Piecewise dimension function with phi(R_n) = theta_n exactly: constant
// theta_n pieces joined by constant-g pieces, the smallest dimension
// function through the witnesses.
inline DimFn build_assouad_recover_dimfn(const std::vector<Witness>& w) {
  require(!w.empty(), errc::precondition, "need at least one witness");
  for (std::size_t i = 0; i < w.size(); ++i) {
    require(w[i].neg_log_R > 0.0 && w[i].theta > 0.0, errc::precondition, "witness outside (0,1) ranges");
    if (i) {
      require(w[i].neg_log_R > w[i - 1].neg_log_R, errc::precondition, "witness scales must decrease");
      require(w[i].theta < w[i - 1].theta, errc::precondition, "witness exponents must decrease");
      require(w[i].theta * w[i].neg_log_R > w[i - 1].theta * w[i - 1].neg_log_R, errc::precondition,
              "witness gap exponents theta log(1/R) must increase");
    }
  }
  std::vector<std::pair<double, double>> knots;
  knots.emplace_back(w[0].neg_log_R, w[0].theta * w[0].neg_log_R);
  for (std::size_t i = 1; i < w.size(); ++i) {
    double g_prev = w[i - 1].theta * w[i - 1].neg_log_R;
    double L_cont = g_prev / w[i].theta;  // continuity point R'_{n+1}
    if (L_cont < w[i].neg_log_R - 1e-12) knots.emplace_back(L_cont, g_prev);
    knots.emplace_back(w[i].neg_log_R, w[i].theta * w[i].neg_log_R);
  }
  return dimfun::piecewise(std::move(knots));
}

struct InterpolationStage {
  int stage = 0;
  double theta = 0.0;
  double neg_log_R = 0.0;       // L(R_n)
  double neg_log_R_prime = 0.0;  // L(R'_n)
};

enum class InterpolationBranch { constant_window, assouad_witnesses, alternation };

struct InterpolationResult {
  DimFn phi = dimfun::constant(1.0);
  InterpolationBranch branch = InterpolationBranch::alternation;
  std::vector<InterpolationStage> ledger;
  double box_value = 0.0;
  double assouad_value = 0.0;
  double post_check = 0.0;
};

struct InterpolationOptions {
  int max_stages = 128;
  int min_stages = 2;
  long check_levels = 2000;
  double post_check_tol = 0.1;
  double assouad_min_gap_L = 16.0 * kLog2;
};

// Alternating construction on the grid: keep phi constant while the window
// exponents look small, then drop along a constant-g piece to a scale where
// the absolute-gap region still respects alpha.  Window exponents
// omega(R, r) come exactly from the ladder's slope data.
inline InterpolationResult build_interpolating_dimfn(ScaleLadder& lad, double alpha, const ScaleGrid& grid,
                                                     const InterpolationOptions& opt = {}) {
  const double c = double(lad.d()) * kLog2;
  // ladder deep enough for the deepest grid pair (r down to R^{1/theta} with theta >= 1/2 shrinking)
  double L_max = grid.log_scale(grid.j_max);
  {
    long need = 64;
    while (lad.L(std::min(lad.depth(), need)) < 4.0 * L_max && lad.extendable() && need < (1L << 26)) {
      need *= 2;
      lad.ensure(need);
      if (lad.L(lad.depth()) >= 4.0 * L_max) break;
    }
  }
  long D = lad.depth();
  while (D > 0 && lad.L(D) > 4.5 * L_max) --D;  // restrict slope structure to the useful range
  SlopeMax sm(lad, D);

  auto level_at = [&](double L) {
    // deepest level with L(level) <= L
    long lo = 0, hi = D;
    if (lad.L(hi) <= L) return hi;
    while (hi - lo > 1) {
      long mid = lo + (hi - lo) / 2;
      (lad.L(mid) <= L ? lo : hi) = mid;
    }
    return lo;
  };
  auto first_level_above = [&](double L) {
    long lv = level_at(L);
    return lad.L(lv) >= L ? lv : std::min(lv + 1, D);
  };

  ExactDim box = exact_box_dim(lad, std::min<long>(D, opt.check_levels));
  double assouad = exact_assouad_dim(lad, std::min<long>(D, opt.check_levels), opt.assouad_min_gap_L);

  InterpolationResult out;
  out.box_value = box.tail_sup;
  out.assouad_value = assouad;
  require(alpha > box.tail_sup, errc::precondition, "target below the box-dimension tail value");
  require(alpha <= assouad + 1e-12, errc::precondition, "target above the Assouad tail value");

  // first branch: a constant window already attains alpha.  The spectrum
  // theta -> dim under phi = 1/theta - 1 is continuous and increasing, so a
  // bisection finds the right constant whenever the top of the constant
  // range reaches alpha.
  {
    auto spectrum = [&](double theta) {
      return exact_phi_dim(lad, dimfun::constant(1.0 / theta - 1.0), std::min<long>(D, opt.check_levels))
          .tail_sup;
    };
    double th_lo = 0.05, th_hi = 0.97;
    if (alpha < assouad - 1e-9 && spectrum(th_hi) >= alpha) {
      if (spectrum(th_lo) <= alpha) {
        for (int it = 0; it < 50; ++it) {
          double mid = 0.5 * (th_lo + th_hi);
          (spectrum(mid) < alpha ? th_lo : th_hi) = mid;
        }
      } else {
        th_hi = th_lo;  // alpha sits below the whole constant range's left end
      }
      out.branch = InterpolationBranch::constant_window;
      out.phi = dimfun::constant(1.0 / th_hi - 1.0);
      out.ledger.push_back({1, th_hi, grid.log_scale(grid.j_min), grid.log_scale(grid.j_max)});
      out.post_check = spectrum(th_hi);
      require(std::abs(out.post_check - alpha) <= opt.post_check_tol, errc::construction,
              "constant window misses the target: achieved " + fmt_g12(out.post_check));
      return out;
    }
  }

  // boundary case: recover the Assouad value itself through witness pairs
  // (L_n, theta_n) with theta ~ 1/sqrt(L) along dyadic L classes, so theta
  // decreases while the gap exponent theta*L grows
  if (alpha > assouad - 1e-9) {
    std::vector<Witness> ws;
    double prev_theta = std::numeric_limits<double>::infinity();
    double prev_g = 0.0;
    for (double L_target = std::max(4.0 * opt.assouad_min_gap_L, lad.L(1) + 1.0);
         2.0 * L_target < lad.L(D); L_target *= 2.0) {
      double gap = std::max(opt.assouad_min_gap_L, std::sqrt(L_target));
      long best_n = -1, best_m = -1;
      double best_v = -1.0;
      for (long n = first_level_above(L_target); n < D && lad.L(n) < 2.0 * L_target; ++n) {
        if (lad.diff(n, D) < gap) break;
        long lo = n, hi = D;
        while (hi - lo > 1) {
          long mid = lo + (hi - lo) / 2;
          (lad.diff(n, mid) < gap ? lo : hi) = mid;
        }
        double v = c * double(hi - n) / lad.diff(n, hi);
        if (v > best_v) {
          best_v = v;
          best_n = n;
          best_m = hi;
        }
      }
      if (best_n < 0 || best_v < assouad - 0.05) continue;
      double L_n = lad.L(best_n);
      double theta = lad.diff(best_n, best_m) / L_n;
      double g = theta * L_n;
      if (theta < prev_theta && g > prev_g) {
        ws.push_back({L_n, theta});
        prev_theta = theta;
        prev_g = g;
      }
    }
    require(ws.size() >= 2, errc::construction, "could not extract Assouad witness scales");
    out.branch = InterpolationBranch::assouad_witnesses;
    out.phi = build_assouad_recover_dimfn(ws);
    ExactDim check = exact_phi_dim(lad, out.phi, std::min<long>(D, opt.check_levels));
    out.post_check = check.tail_sup;
    return out;
  }

  // sup over covering scales y below level n with gap(n, y) >= req of the
  // window exponent; a scale between two levels counts the next finer one
  auto omega_sup = [&](long n, double req) {
    if (lad.diff(n, D) < req) return -std::numeric_limits<double>::infinity();
    long lo = n, hi = D;
    while (hi - lo > 1) {
      long mid = lo + (hi - lo) / 2;
      (lad.diff(n, mid) < req ? lo : hi) = mid;
    }
    double best = c * double(hi - n) / req;
    return std::max(best, c * sm.query(n, hi, 1));
  };
  // sup of omega over { (x,y) : x <= R, y <= x^{1/theta} }
  auto sup_R = [&](double L_R, double theta) {
    double best = -std::numeric_limits<double>::infinity();
    for (long n = first_level_above(L_R); n < D; ++n)
      best = std::max(best, omega_sup(n, lad.L(n) * (1.0 / theta - 1.0)));
    return best;
  };
  // sup of omega over B(R): proportional-gap part below R plus the
  // absolute-gap region between R and R'
  auto sup_B = [&](double L_R, double L_Rp, double delta) {
    double best = -std::numeric_limits<double>::infinity();
    for (long n = first_level_above(L_Rp); n < D; ++n) {
      // x <= R gets the proportional gap, x in [R, R'] the absolute one
      double req = lad.L(n) >= L_R ? lad.L(n) * delta / L_R : delta;
      best = std::max(best, omega_sup(n, req));
    }
    return best;
  };

  double theta = 0.5;
  int j_R = grid.j_min;
  for (int stage = 1; stage <= opt.max_stages; ++stage) {
    // largest grid scale below R_n with the proportional region admissible;
    // the passing set is an upper interval of grid indices
    int j_ok = -1;
    if (sup_R(grid.log_scale(grid.j_max), theta) <= alpha) {
      int lo = j_R, hi = grid.j_max;  // invariant: hi passes
      if (sup_R(grid.log_scale(lo), theta) <= alpha) {
        j_ok = lo;
      } else {
        while (hi - lo > 1) {
          int mid = lo + (hi - lo) / 2;
          (sup_R(grid.log_scale(mid), theta) <= alpha ? hi : lo) = mid;
        }
        j_ok = hi;
      }
    }
    if (j_ok < 0) {
      require(int(out.ledger.size()) >= opt.min_stages, errc::resolution,
              "grid exhausted before the proportional region stabilized");
      break;
    }
    // next grid scale below half of it; when the absolute-gap search comes
    // up empty the halving distance is doubled and the stage retried, which
    // settles the constant-count tie at the region boundary
    double L_half = grid.log_scale(j_ok) + kLog2;
    int j_prime = j_ok;
    while (j_prime <= grid.j_max && grid.log_scale(j_prime) < L_half) ++j_prime;
    int j_next = -1;
    double L_Rp = 0.0, delta = 0.0;
    for (int retry = 0; retry < 16 && j_prime < grid.j_max; ++retry) {
      L_Rp = grid.log_scale(j_prime);
      delta = (1.0 / theta - 1.0) * L_Rp;
      // smallest grid scale keeping the absolute-gap region admissible; the
      // passing set is a lower interval of grid indices
      if (sup_B(grid.log_scale(j_prime + 1), L_Rp, delta) <= alpha) {
        if (sup_B(grid.log_scale(grid.j_max), L_Rp, delta) <= alpha) {
          j_next = grid.j_max;
        } else {
          int lo = j_prime + 1, hi = grid.j_max;  // invariant: lo passes, hi fails
          while (hi - lo > 1) {
            int mid = lo + (hi - lo) / 2;
            (sup_B(grid.log_scale(mid), L_Rp, delta) <= alpha ? lo : hi) = mid;
          }
          j_next = lo;
        }
        break;
      }
      j_prime += std::max(1, j_prime - j_ok);
    }
    if (j_prime > grid.j_max) j_prime = grid.j_max;
    out.ledger.push_back({stage, theta, grid.log_scale(j_R), L_Rp});
    if (j_next < 0) {
      require(int(out.ledger.size()) >= opt.min_stages, errc::resolution,
              "grid exhausted before the absolute-gap region stabilized");
      break;
    }
    double L_next = grid.log_scale(j_next);
    theta = 1.0 / (1.0 + delta / L_next);
    j_R = j_next;
    if (j_next == grid.j_max) break;
  }
  require(int(out.ledger.size()) >= opt.min_stages, errc::resolution,
          "grid exhausted before convergence");

  // assemble phi: constant 1/theta_n - 1 on [R'_n, R_n], constant g on [R_{n+1}, R'_n]
  std::vector<std::pair<double, double>> knots;
  for (std::size_t i = 0; i < out.ledger.size(); ++i) {
    const auto& st = out.ledger[i];
    double phi_n = 1.0 / st.theta - 1.0;
    auto push_knot = [&](double L, double g) {
      if (!knots.empty() && L <= knots.back().first + 1e-12) return;
      knots.emplace_back(L, g);
    };
    push_knot(st.neg_log_R, phi_n * st.neg_log_R);
    push_knot(st.neg_log_R_prime, phi_n * st.neg_log_R_prime);
    if (i + 1 < out.ledger.size()) {
      // plateau down to the next stage's opening scale
      push_knot(out.ledger[i + 1].neg_log_R, phi_n * st.neg_log_R_prime);
    }
  }
  out.phi = dimfun::piecewise(std::move(knots));

  ExactDim check = exact_phi_dim(lad, out.phi, std::min<long>(D, opt.check_levels));
  out.post_check = check.tail_sup;
  require(std::abs(out.post_check - alpha) <= opt.post_check_tol, errc::construction,
          "constructed dimension function misses the target: achieved " + fmt_g12(out.post_check));
  return out;
}

// ------------------------------------------------------------------
// JSON serialization

inline nlohmann::json to_json(const MoranSpec& s) {
  nlohmann::json j{{"d", s.d}};
  bool safe = true;
  for (double nl : s.prefix_neglog)
    if (nl > 700.0) safe = false;
  if (safe) {
    auto arr = nlohmann::json::array();
    for (double nl : s.prefix_neglog) arr.push_back(std::exp(-nl));
    j["prefix"] = arr;
  } else {
    j["prefix_neglog"] = s.prefix_neglog;
  }
  if (auto* p = std::get_if<PeriodicRule>(&s.rule)) {
    auto arr = nlohmann::json::array();
    for (double nl : p->neglog_pattern) arr.push_back(std::exp(-nl));
    j["rule"] = {{"kind", "periodic"}, {"pattern", arr}};
  } else if (auto* b = std::get_if<BlocksRule>(&s.rule)) {
    auto arr = nlohmann::json::array();
    for (double nl : b->neglog_ratios) arr.push_back(std::exp(-nl));
    j["rule"] = {{"kind", "blocks"}, {"ratios", arr}, {"initial_len", b->initial_len}, {"growth", b->growth}};
  }
  return j;
}

inline MoranSpec from_json(const nlohmann::json& j) {
  MoranSpec s;
  s.d = j.at("d").get<int>();
  require(s.d >= 1, errc::domain, "ambient dimension must be at least 1");
  if (j.contains("prefix")) {
    for (double r : j.at("prefix")) {
      require(r > 0.0 && r <= 0.5, errc::domain, "contraction ratios must lie in (0, 1/2]");
      s.prefix_neglog.push_back(-std::log(r));
    }
  } else if (j.contains("prefix_neglog")) {
    for (double nl : j.at("prefix_neglog")) {
      require(nl >= kLog2 - 1e-12, errc::domain, "contraction ratios must lie in (0, 1/2]");
      s.prefix_neglog.push_back(nl);
    }
  }
  if (j.contains("rule") && !j.at("rule").is_null()) {
    const auto& r = j.at("rule");
    std::string kind = r.at("kind").get<std::string>();
    if (kind == "periodic") {
      PeriodicRule p;
      for (double v : r.at("pattern")) p.neglog_pattern.push_back(-std::log(v));
      s.rule = p;
    } else if (kind == "blocks") {
      BlocksRule b;
      for (double v : r.at("ratios")) b.neglog_ratios.push_back(-std::log(v));
      if (r.contains("initial_len")) b.initial_len = r.at("initial_len").get<long>();
      if (r.contains("growth")) b.growth = r.at("growth").get<double>();
      s.rule = b;
    } else {
      fail(errc::domain, "unknown moran rule kind: " + kind);
    }
  }
  require(!s.prefix_neglog.empty() || !std::holds_alternative<std::monostate>(s.rule), errc::domain,
          "moran spec needs a prefix or a rule");
  return s;
}

}  // namespace phidim::moran
