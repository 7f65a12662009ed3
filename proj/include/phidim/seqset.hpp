#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "phidim/common.hpp"
#include "phidim/cover.hpp"
#include "phidim/dimfun.hpp"

namespace phidim::seqset {

using cover::DimProfile;
using cover::PointSet1D;
using dimfun::DimFn;
using dimfun::ScaleGrid;

// ------------------------------------------------------------------
// sequence specifications

struct ExpPower {
  double a;  // f(x) = exp(-x^a), 0 < a < 1
};
struct ExpLogPower {
  double b;  // f(x) = exp(-(log x)^b), b > 1
};
struct Tabulated {
  std::vector<double> x;  // strictly increasing
  std::vector<double> f;  // strictly decreasing
};

struct SeqSpec {
  std::variant<ExpPower, ExpLogPower, Tabulated> node;

  double f(double x) const {
    struct V {
      double x;
      double operator()(const ExpPower& e) const { return std::exp(-std::pow(x, e.a)); }
      double operator()(const ExpLogPower& e) const { return std::exp(-std::pow(std::log(x), e.b)); }
      double operator()(const Tabulated& t) const {
        require(x >= t.x.front() && x <= t.x.back(), errc::domain, "x outside the table");
        auto it = std::lower_bound(t.x.begin(), t.x.end(), x);
        std::size_t i = std::size_t(it - t.x.begin());
        if (i == 0) return t.f[0];
        double w = (x - t.x[i - 1]) / (t.x[i] - t.x[i - 1]);
        return t.f[i - 1] + w * (t.f[i] - t.f[i - 1]);
      }
    };
    return std::visit(V{x}, node);
  }

  // analytic derivative for the closed forms, centered differences for tables
  double fprime(double x) const {
    struct V {
      double x;
      const SeqSpec* s;
      double operator()(const ExpPower& e) const {
        return -e.a * std::pow(x, e.a - 1.0) * std::exp(-std::pow(x, e.a));
      }
      double operator()(const ExpLogPower& e) const {
        double lg = std::log(x);
        return -e.b * std::pow(lg, e.b - 1.0) / x * std::exp(-std::pow(lg, e.b));
      }
      double operator()(const Tabulated&) const {
        double h = std::max(0.5, x * 1e-6);
        return (s->f(x + h) - s->f(x - h)) / (2.0 * h);
      }
    };
    return std::visit(V{x, this}, node);
  }

  // smallest x beyond which the regular-gaps conditions are promised
  double x0() const {
    struct V {
      double operator()(const ExpPower&) const { return 4.0; }
      double operator()(const ExpLogPower& e) const { return std::exp(std::max(2.0, e.b)); }
      double operator()(const Tabulated& t) const { return t.x.front() + 1.0; }
    };
    return std::visit(V{}, node);
  }

  // x with f(x) = R, by bisection on the strictly decreasing f
  double f_inverse(double R) const {
    require(R > 0.0 && R < 1.0, errc::domain, "R outside (0,1)");
    double lo = x0(), hi = lo * 2.0;
    require(f(lo) > R, errc::domain, "scale above the represented range");
    int guard = 0;
    while (f(hi) > R) {
      lo = hi;
      hi *= 2.0;
      require(++guard < 1200, errc::numeric, "f inverse bracket failed");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
      double mid = 0.5 * (lo + hi);
      (f(mid) > R ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  // x with -f'(x) = g, by bracket doubling and bisection on the strictly
  // decreasing -f'
  double fprime_inverse(double g) const {
    require(g > 0.0, errc::domain, "gap size must be positive");
    double lo = x0(), hi = lo * 2.0;
    require(-fprime(lo) > g, errc::numeric, "gap size above the bracket start");
    int guard = 0;
    while (-fprime(hi) > g) {
      lo = hi;
      hi *= 2.0;
      require(++guard < 1200, errc::numeric, "derivative inverse bracket failed");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
      double mid = 0.5 * (lo + hi);
      (-fprime(mid) > g ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

// ------------------------------------------------------------------
// regular-gaps validation

struct RegularGapsReport {
  bool f_decreasing_to_zero = true;
  bool fprime_increasing_to_zero = true;
  bool fprime_ratio_increasing_to_one = true;
  double final_ratio = 0.0;      // f'(x+1)/f'(x) at the deep end
  double final_gap_ratio = 0.0;  // (f(n)-f(n+1)) / (-f'(n)) at the deep end
  double x_hi_effective = 0.0;   // range end after the underflow clamp
  bool ok() const { return f_decreasing_to_zero && fprime_increasing_to_zero && fprime_ratio_increasing_to_one; }
};

inline RegularGapsReport validate_regular_gaps(const SeqSpec& spec, double x_lo, double x_hi,
                                               int samples = 64) {
  require(x_lo >= spec.x0() && x_hi > x_lo, errc::domain, "range must start beyond x0");
  // clamp to the envelope where f and f' stay representable
  while (x_hi > 2.0 * x_lo && (spec.f(x_hi) < 1e-280 || -spec.fprime(x_hi) < 1e-290)) x_hi /= 2.0;
  RegularGapsReport rep;
  rep.x_hi_effective = x_hi;
  double prev_f = std::numeric_limits<double>::infinity();
  double prev_fp = -std::numeric_limits<double>::infinity();
  double prev_ratio = 0.0;
  for (int i = 0; i <= samples; ++i) {
    // geometric sampling reaches both ends of wide ranges
    double x = x_lo * std::pow(x_hi / x_lo, double(i) / double(samples));
    double fx = spec.f(x), fpx = spec.fprime(x);
    if (!(fx < prev_f)) rep.f_decreasing_to_zero = false;
    if (!(fpx < 0.0)) rep.fprime_increasing_to_zero = false;
    if (i > 0 && !(fpx >= prev_fp)) rep.fprime_increasing_to_zero = false;
    double ratio = spec.fprime(x + 1.0) / fpx;
    if (i > 0 && ratio < prev_ratio - 1e-9) rep.fprime_ratio_increasing_to_one = false;
    prev_f = fx;
    prev_fp = fpx;
    prev_ratio = ratio;
    if (i == samples) {
      rep.final_ratio = ratio;
      // gap ratio at the deepest x whose values stay representable
      double n = std::floor(x);
      while (n > x_lo && spec.f(n) < 1e-280) n = std::floor(n / 2.0);
      rep.final_gap_ratio = (spec.f(n) - spec.f(n + 1.0)) / (-spec.fprime(n));
    }
  }
  if (rep.final_ratio < 0.9) rep.fprime_ratio_increasing_to_one = false;
  return rep;
}

// ------------------------------------------------------------------
// the point set

struct SeqPoints {
  PointSet1D points;
  long n_max = 0;
  bool underflow_capped = false;  // f(n_max) fell below the double floor
};

inline SeqPoints build_points(const SeqSpec& spec, long n_max) {
  require(n_max >= 2, errc::domain, "need at least two sequence points");
  SeqPoints out;
  std::vector<double> pts{0.0};
  long n_eff = n_max;
  for (long n = n_max; n >= 1; --n) {
    double v = spec.f(double(n));
    if (v < 1e-300) {
      out.underflow_capped = true;
      n_eff = std::min(n_eff, n - 1);
      continue;
    }
    pts.push_back(v);
  }
  out.n_max = n_eff;
  double delta = pts.size() >= 3 ? pts[2] - pts[1] : 1e-300;
  out.points = PointSet1D::from_sorted(std::move(pts), std::max(delta, 1e-300));
  return out;
}

// ------------------------------------------------------------------
// the closed-form dimension

struct SeqFormulaRow {
  double R = 0.0;
  double x_star = 0.0;     // (f')^{-1}(-R^{1+phi(R)}), 0 in the wholesale regime
  double count_est = 0.0;  // covering-decomposition estimate
  double value = 0.0;
};

struct SeqFormulaResult {
  bool dimension_one = false;  // the beta sign test fired on the sampled range
  std::vector<SeqFormulaRow> rows;
  double tail_sup = 0.0;
};

// Closed-form phi-Assouad values of F_f.  The branch classifier follows the
// sign test "f(x)^{1+phi(f(x))} + f'(x) >= 0 somewhere in the sampled
// range" (gap <= r at the matched scale).  Per-scale values come from the
// covering decomposition f(x*)/(2r) + (x* - x) with x* = (f')^{-1}(-r) and
// x = f^{-1}(R), which meets the displayed limsup; in the wholesale regime
// the window [0,R] is covered outright by R/(2r) balls.
inline SeqFormulaResult seq_dim_formula(const SeqSpec& spec, const DimFn& phi, const ScaleGrid& grid) {
  SeqFormulaResult out;
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double L = grid.log_scale(j);
    if (L <= phi.min_log_scale()) continue;
    double p = phi.eval_log(L);
    double R = std::exp(-L);
    double r = std::exp(-(1.0 + p) * L);
    if (r < 1e-300 || R < 1e-290) continue;  // below the representable envelope
    double x = spec.f_inverse(R);
    double gap_at_x = -spec.fprime(x);
    SeqFormulaRow row;
    row.R = R;
    if (r >= gap_at_x) {
      out.dimension_one = true;  // beta sign witness at this scale
      row.count_est = R / r + 1.0;  // the anchored window [0, 2R] wholesale
    } else {
      double xs = spec.fprime_inverse(r);
      row.x_star = xs;
      row.count_est = spec.f(xs) / (2.0 * r) + (xs - x);
    }
    row.value = std::log(row.count_est) / (p * L);
    out.rows.push_back(row);
  }
  require(!out.rows.empty(), errc::range, "no admissible scales in grid");
  auto s = tail_sup(out.rows, [](const SeqFormulaRow& r) { return r.value; });
  out.tail_sup = s.sup;
  return out;
}

// ------------------------------------------------------------------
// direct covering profiles

struct SeqDirectProfile {
  DimProfile anchored;  // windows anchored at 0, the dominating family
  DimProfile sweep;     // full-center consistency sweep
};

inline SeqDirectProfile seq_direct_profile(const PointSet1D& points, const DimFn& phi,
                                           const ScaleGrid& grid) {
  cover::ProfileOptions anchored_opt;
  anchored_opt.origin_anchored = true;
  SeqDirectProfile out;
  out.anchored = cover::phi_profile(points, phi, grid, anchored_opt);
  out.sweep = cover::phi_profile(points, phi, grid);
  return out;
}

// ------------------------------------------------------------------
// JSON serialization

inline nlohmann::json to_json(const SeqSpec& s) {
  struct V {
    nlohmann::json operator()(const ExpPower& e) const { return {{"kind", "exp_power"}, {"a", e.a}}; }
    nlohmann::json operator()(const ExpLogPower& e) const {
      return {{"kind", "exp_log_power"}, {"b", e.b}};
    }
    nlohmann::json operator()(const Tabulated& t) const {
      return {{"kind", "table"}, {"x", t.x}, {"f", t.f}};
    }
  };
  return std::visit(V{}, s.node);
}

inline SeqSpec from_json_seq(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "exp_power") {
    double a = j.at("a").get<double>();
    require(a > 0.0 && a < 1.0, errc::domain, "exp_power exponent must lie in (0,1)");
    return SeqSpec{ExpPower{a}};
  }
  if (kind == "exp_log_power") {
    double b = j.at("b").get<double>();
    require(b > 1.0, errc::domain, "exp_log_power exponent must exceed 1");
    return SeqSpec{ExpLogPower{b}};
  }
  if (kind == "table") {
    Tabulated t;
    for (double v : j.at("x")) t.x.push_back(v);
    for (double v : j.at("f")) t.f.push_back(v);
    require(t.x.size() == t.f.size() && t.x.size() >= 4, errc::domain, "table needs matched x/f arrays");
    return SeqSpec{t};
  }
  fail(errc::domain, "unknown sequence kind: " + kind);
}

}  // namespace phidim::seqset
