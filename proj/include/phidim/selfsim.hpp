#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "phidim/common.hpp"
#include "phidim/cover.hpp"
#include "phidim/dimfun.hpp"
#include "phidim/rational.hpp"

namespace phidim::selfsim {

using cover::PointSet1D;
using dimfun::DimFn;

// ------------------------------------------------------------------
// the explicit three-map family

// Maps x -> (x + digit)/m for plain digits, plus optionally x -> (x + t)/m
// where t is the sparse-digit translation from the block-length ledger.
struct IFSSpec1D {
  int m = 3;
  std::vector<uint64_t> plain_digits{0, 1};
  bool with_t = true;

  double diameter() const { return 1.0 / double(m - 1); }
  std::size_t map_count() const { return plain_digits.size() + (with_t ? 1 : 0); }
};

// Ledger of the block-length construction: t = 0^{n_1-1}1 0^{n_2-1}1 ...,
// scales r_k kept exactly.
struct TParams {
  int m = 3;
  std::vector<long> n_k;       // block lengths
  std::vector<long> N_k;       // partial sums
  std::vector<Rational> r_k;   // microset scales, r_1 = 1

  // base-m digit of t at position j >= 1 (1 exactly at the N_k)
  bool digit_one_at(long j) const { return std::binary_search(N_k.begin(), N_k.end(), j); }
};

// n_{k+1} minimal with m^{n} in [m/r_k, m^2/r_k] (the interval always
// contains a power; the minimal one keeps gap growth smallest), then
// r_{k+1} = (1 + 1/m^2) r_k m^{-N_k}, all exact.
inline TParams build_nk_sequence(int m, int K) {
  require(m >= 3, errc::domain, "the explicit family needs m >= 3");
  require(K >= 1, errc::domain, "K must be positive");
  TParams out;
  out.m = m;
  out.n_k = {1};
  out.N_k = {1};
  out.r_k = {Rational(1, 1)};
  const BigUInt big_m{uint64_t(m)};
  const Rational bump{uint64_t(m) * uint64_t(m) + 1, uint64_t(m) * uint64_t(m)};
  for (int k = 1; k < K; ++k) {
    const Rational& r = out.r_k.back();
    // minimal n with m^n * r.num >= m * r.den
    BigUInt target = big_m * r.den;
    BigUInt pow = r.num;
    long n = 0;
    while (pow < target) {
      pow = pow * big_m;
      ++n;
    }
    // upper end of the admissible interval: m^n <= m^2 / r_k
    require(pow <= big_m * big_m * r.den, errc::construction,
            "no admissible block length at step " + std::to_string(k));
    out.n_k.push_back(n);
    out.N_k.push_back(out.N_k.back() + n);
    // r_{k+1} = (1 + 1/m^2) r_k m^{-N_k}
    BigUInt m_Nk = BigUInt::pow(uint64_t(m), uint64_t(out.N_k[std::size_t(k) - 1]));
    out.r_k.push_back(Rational(bump.num * r.num, bump.den * r.den * m_Nk));
  }
  return out;
}

// ------------------------------------------------------------------
// cylinder enumeration

// Distinct level-n cylinder endpoints S_sigma(0) with word multiplicities,
// exact over the common denominator m^{n + t_depth} (t truncated to
// n + t_depth digits).  Coincidences within one denominator unit are merged.
struct CylinderSet {
  int m = 3;
  int level = 0;
  int t_depth = 0;
  long denom_exp = 0;               // points are num / m^{denom_exp}
  std::vector<uint64_t> num;        // sorted distinct numerators
  std::vector<uint64_t> count;      // word multiplicities
  double diameter = 0.5;

  std::size_t distinct() const { return num.size(); }
  uint64_t words() const {
    uint64_t w = 0;
    for (uint64_t c : count) w += c;
    return w;
  }
  PointSet1D point_view() const {
    std::vector<double> pts(num.size());
    double scale = std::pow(double(m), -double(denom_exp));
    for (std::size_t i = 0; i < num.size(); ++i) pts[i] = double(num[i]) * scale;
    return PointSet1D::from_sorted(std::move(pts), scale);
  }
};

inline CylinderSet cylinder_points(const IFSSpec1D& spec, const std::optional<TParams>& t, int n,
                                   int t_depth, std::size_t budget = (1u << 22)) {
  require(n >= 0, errc::domain, "negative level");
  require(t_depth >= 0, errc::domain, "negative t depth");
  require(!spec.with_t || t.has_value(), errc::precondition, "spec uses t but no ledger was given");
  const int m = spec.m;
  require(double(n + t_depth) * std::log2(double(m)) < 62.0, errc::capacity,
          "denominator exceeds 64-bit exact range");
  const long T = t_depth;
  // S_sigma(0) = sum_i c_i m^{-i}; over the denominator m^{n+T} the plain
  // digit d at position i contributes d m^{n+T-i} and the t-map contributes
  // floor(t_num / m^i), t_num the (n+T)-digit truncation of t
  uint64_t t_num = 0;
  if (spec.with_t) {
    for (long j = 1; j <= long(n) + T; ++j) {
      t_num *= uint64_t(m);
      if (t->digit_one_at(j)) t_num += 1;
    }
  }

  struct Entry {
    uint64_t num;
    uint64_t count;
  };
  std::vector<Entry> cur{{0, 1}}, next;
  uint64_t place = 1;
  for (long i = 0; i < long(n) + T - 1; ++i) place *= uint64_t(m);  // m^{n+T-1}
  uint64_t t_shift = spec.with_t ? t_num / uint64_t(m) : 0;         // floor(t_num / m^1)
  for (int i = 1; i <= n; ++i) {
    next.clear();
    next.reserve(cur.size() * spec.map_count());
    for (const auto& e : cur) {
      for (uint64_t d : spec.plain_digits) next.push_back({e.num + d * place, e.count});
      if (spec.with_t) next.push_back({e.num + t_shift, e.count});
    }
    require(next.size() <= budget, errc::capacity, "cylinder budget exceeded");
    std::sort(next.begin(), next.end(), [](const Entry& a, const Entry& b) { return a.num < b.num; });
    // progressive exact dedup keeps the level sets small under overlaps
    cur.clear();
    for (const auto& e : next) {
      if (!cur.empty() && cur.back().num == e.num)
        cur.back().count += e.count;
      else
        cur.push_back(e);
    }
    place /= uint64_t(m);
    t_shift /= uint64_t(m);
  }
  // final merge at the stated tolerance: one denominator unit of t-truncation
  // noise; systems without t are exact and keep exact dedup
  CylinderSet out;
  out.m = m;
  out.level = n;
  out.t_depth = t_depth;
  out.denom_exp = long(n) + T;
  out.diameter = spec.diameter();
  const uint64_t tol = spec.with_t ? 1 : 0;
  for (const auto& e : cur) {
    if (!out.num.empty() && e.num - out.num.back() <= tol)
      out.count.back() += e.count;
    else {
      out.num.push_back(e.num);
      out.count.push_back(e.count);
    }
  }
  return out;
}

// ------------------------------------------------------------------
// overlap counts

struct MTildeResult {
  long value = 0;           // max word count within the window
  double window_constant;   // the c_w used
  double window_radius;     // (1 + c_w * diam) m^{-n}
};

// Sliding-window word count: max over centers (every distinct endpoint) of
// the words within distance (1 + c_w diam) m^{-n}.  The window constant is
// reported because the cylinder-intersection criterion depends on diam(K).
inline MTildeResult m_tilde(const CylinderSet& cyl, double c_w = 1.0) {
  require(c_w >= 0.0, errc::domain, "window constant must be nonnegative");
  MTildeResult res{0, c_w, 0.0};
  res.window_radius = (1.0 + c_w * cyl.diameter) * std::pow(double(cyl.m), -double(cyl.level));
  // radius in numerator units over m^{denom_exp}
  double unit = std::pow(double(cyl.m), double(cyl.denom_exp));
  double w_units = res.window_radius * unit;
  std::vector<uint64_t> prefix(cyl.count.size() + 1, 0);
  for (std::size_t i = 0; i < cyl.count.size(); ++i) prefix[i + 1] = prefix[i] + cyl.count[i];
  for (std::size_t i = 0; i < cyl.num.size(); ++i) {
    double lo = double(cyl.num[i]) - w_units, hi = double(cyl.num[i]) + w_units;
    std::size_t a = std::size_t(std::lower_bound(cyl.num.begin(), cyl.num.end(),
                                                 uint64_t(std::max(0.0, std::ceil(lo)))) -
                                cyl.num.begin());
    std::size_t b = std::size_t(std::upper_bound(cyl.num.begin(), cyl.num.end(),
                                                 uint64_t(std::max(0.0, std::floor(hi)))) -
                                cyl.num.begin());
    res.value = std::max(res.value, long(prefix[b] - prefix[a]));
  }
  return res;
}

// ------------------------------------------------------------------
// upper-bound verdict

struct UpperBoundReport {
  std::vector<double> statistic;  // log M~_n / (n phi(m^{-n})) per n
  double tail_max = 0.0;
  bool box_regime = false;  // tail below the threshold
  double threshold = 0.05;
};

inline UpperBoundReport upper_bound_report(const std::vector<long>& mtilde, int m, const DimFn& phi,
                                           double threshold = 0.05, double tail_fraction = 0.5) {
  require(!mtilde.empty(), errc::precondition, "empty overlap series");
  UpperBoundReport rep;
  rep.threshold = threshold;
  double logm = std::log(double(m));
  for (std::size_t i = 0; i < mtilde.size(); ++i) {
    long n = long(i) + 1;
    require(mtilde[i] >= 1, errc::domain, "overlap counts must be positive");
    double L = double(n) * logm;
    rep.statistic.push_back(std::log(double(mtilde[i])) / (double(n) * phi.eval_log(L)));
  }
  auto s = tail_sup(rep.statistic, [](double v) { return v; }, tail_fraction);
  rep.tail_max = s.sup;
  rep.box_regime = rep.tail_max < threshold;
  return rep;
}

// ------------------------------------------------------------------
// microsets

// One amplification step: an (r, eps)-microset plus a gap of the right size
// n levels down yields a ((1+c) rho^n r, eps/(1+c))-microset.
struct MicrosetState {
  double r = 1.0;
  double eps = 1.0;
};

inline MicrosetState microset_amplify(const MicrosetState& s, double c, double rho, long n) {
  require(c > 0.0 && c <= 1.0, errc::domain, "c must lie in (0,1]");
  require(rho > 0.0 && rho < 1.0, errc::domain, "rho must lie in (0,1)");
  require(n >= 1, errc::domain, "n must be positive");
  return {(1.0 + c) * std::pow(rho, double(n)) * s.r, s.eps / (1.0 + c)};
}

struct MicrosetStateExact {
  Rational r{1, 1};
  Rational eps{1, 1};
};

inline MicrosetStateExact microset_amplify(const MicrosetStateExact& s, uint64_t m, long n) {
  require(n >= 1, errc::domain, "n must be positive");
  // c = 1/m^2, rho = 1/m
  Rational bump(m * m + 1, m * m);
  return {Rational(bump.num * s.r.num, bump.den * s.r.den * BigUInt::pow(m, uint64_t(n))),
          Rational(s.eps.num * BigUInt(m * m), s.eps.den * BigUInt(m * m + 1))};
}

struct DensityCheck {
  double eps_claimed = 0.0;
  double measured_gap = 0.0;   // max gap of the rescaled copy inside [0,1]
  double resolution = 0.0;     // attainable precision at this depth
  std::size_t points_used = 0;
};

// Finite-depth density certificate for the k-th microset of the ledger:
// maps the level-`depth` endpoints through x -> x/r_k - t_k and measures
// the largest gap in [0,1].  The translation follows the amplification
// chain t' = (t + z_k m^{N_k} / r_k)/(1 + 1/m^2) with z_k the N_k-digit
// truncation of t.
inline DensityCheck microset_density_check(const TParams& tp, int k, int depth, int t_depth) {
  require(k >= 1 && k <= int(tp.r_k.size()), errc::domain, "k outside the ledger");
  const int m = tp.m;
  double r = 1.0, t = 0.0;
  for (int i = 1; i < k; ++i) {
    double z = 0.0;
    for (std::size_t a = 0; a < tp.N_k.size() && tp.N_k[a] <= tp.N_k[std::size_t(i) - 1]; ++a)
      z += std::pow(double(m), -double(tp.N_k[a]));
    double mNk = std::pow(double(m), double(tp.N_k[std::size_t(i) - 1]));
    double c = 1.0 / double(m * m);
    t = (t + z * mNk / r) / (1.0 + c);
    r = tp.r_k[std::size_t(i)].to_double();
  }
  DensityCheck out;
  out.eps_claimed = std::pow(1.0 + 1.0 / double(m * m), -double(k));
  IFSSpec1D spec;
  spec.m = m;
  auto cyl = cylinder_points(spec, tp, depth, t_depth);
  out.points_used = cyl.distinct();
  out.resolution = std::pow(double(m), -double(depth)) / double(m - 1);
  // map into microset coordinates and collect hits in [0,1]
  std::vector<double> ys;
  double scale = std::pow(double(m), -double(cyl.denom_exp));
  for (uint64_t numv : cyl.num) {
    double y = double(numv) * scale / r - t;
    if (y >= -1e-12 && y <= 1.0 + 1e-12) ys.push_back(std::clamp(y, 0.0, 1.0));
  }
  require(!ys.empty(), errc::resolution, "no endpoints land in the microset window at this depth");
  std::sort(ys.begin(), ys.end());
  double gap = std::max(ys.front() - 0.0, 1.0 - ys.back());
  for (std::size_t i = 1; i < ys.size(); ++i) gap = std::max(gap, ys[i] - ys[i - 1]);
  out.measured_gap = gap;
  return out;
}

// ------------------------------------------------------------------
// the threshold constant

inline double threshold_constant(int m) {
  require(m >= 3, errc::domain, "threshold constant needs m >= 3");
  return std::log(double(m)) / std::log1p(1.0 / (double(m) * double(m)));
}

// ------------------------------------------------------------------
// JSON serialization

inline nlohmann::json to_json(const TParams& tp) {
  nlohmann::json j{{"m", tp.m}, {"n_k", tp.n_k}, {"N_k", tp.N_k}};
  auto rs = nlohmann::json::array();
  for (const auto& r : tp.r_k) rs.push_back({{"num", r.num.to_string()}, {"den", r.den.to_string()}});
  j["r_k"] = rs;
  return j;
}

}  // namespace phidim::selfsim
