#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "phidim/common.hpp"
#include "phidim/cover.hpp"
#include "phidim/dimfun.hpp"
#include "phidim/rational.hpp"
#include "phidim/rng.hpp"

namespace phidim::gw {

using cover::SymbolicTree;
using dimfun::DimFn;

// ------------------------------------------------------------------
// offspring distributions

// Finitely supported offspring law theta_0..theta_N with theta_N > 0.
// Probabilities may carry an exact rational form for the big-integer
// distribution mode.
struct OffspringDist {
  std::vector<double> theta;
  std::vector<std::pair<uint64_t, uint64_t>> theta_rat;  // empty unless exact

  static OffspringDist from_probs(std::vector<double> probs) {
    OffspringDist d;
    while (probs.size() > 1 && probs.back() == 0.0) probs.pop_back();
    require(!probs.empty(), errc::domain, "empty offspring law");
    double sum = 0.0;
    for (double p : probs) {
      require(p >= 0.0, errc::domain, "negative offspring probability");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-12, errc::domain, "offspring probabilities must sum to 1");
    d.theta = std::move(probs);
    return d;
  }

  static OffspringDist from_rationals(std::vector<std::pair<uint64_t, uint64_t>> probs) {
    while (probs.size() > 1 && probs.back().first == 0) probs.pop_back();
    require(!probs.empty(), errc::domain, "empty offspring law");
    // exact sum check over the common denominator
    uint64_t den = 1;
    for (auto& [n, dd] : probs) {
      require(dd != 0, errc::domain, "zero denominator");
      uint64_t g = std::gcd(den, dd);
      require(den / g <= ~uint64_t(0) / dd, errc::capacity, "denominator overflow");
      den = den / g * dd;
    }
    unsigned __int128 total = 0;
    for (auto& [n, dd] : probs) total += (unsigned __int128)n * (den / dd);
    require(total == (unsigned __int128)den, errc::domain, "offspring probabilities must sum to 1");
    OffspringDist d;
    for (auto& [n, dd] : probs) d.theta.push_back(double(n) / double(dd));
    d.theta_rat = std::move(probs);
    return d;
  }

  int max_offspring() const { return int(theta.size()) - 1; }  // N

  double mean() const {
    double m = 0.0;
    for (std::size_t j = 1; j < theta.size(); ++j) m += double(j) * theta[j];
    return m;
  }

  // gamma with m^gamma = N; degenerate (gamma = 1) when X is constant N
  double gamma() const {
    double m = mean();
    require(m > 1.0, errc::domain, "gamma needs a supercritical law");
    return std::log(double(max_offspring())) / std::log(m);
  }

  // X identically 1: outside every supercritical statement
  bool degenerate_unit() const { return theta.size() == 2 && theta[1] == 1.0; }

  bool has_exact() const { return !theta_rat.empty(); }
};

// ------------------------------------------------------------------
// probability generating function

inline double pgf_eval(const OffspringDist& d, double s) {
  require(s >= 0.0, errc::domain, "pgf argument must be nonnegative");
  double acc = 0.0;  // Horner from the top coefficient
  for (std::size_t j = d.theta.size(); j-- > 0;) acc = acc * s + d.theta[j];
  return acc;
}

// log f(e^y) for y >= 0, switching to the top-coefficient expansion before
// e^y can overflow; monotone in y and never overflows at desk depths.
inline double pgf_log_eval(const OffspringDist& d, double y) {
  require(y >= 0.0, errc::domain, "log-domain pgf argument must be nonnegative");
  const int N = d.max_offspring();
  if (y <= 690.0 / double(N)) return std::log(pgf_eval(d, std::exp(y)));
  double corr = 0.0;
  for (int j = 0; j < N; ++j)
    if (d.theta[std::size_t(j)] > 0.0)
      corr += d.theta[std::size_t(j)] / d.theta[std::size_t(N)] * std::exp(double(j - N) * y);
  return double(N) * y + std::log(d.theta[std::size_t(N)]) + std::log1p(corr);
}

// log f_k(e^y): k-fold iteration of log f(e^.) in the log domain
inline double pgf_iterate_log(const OffspringDist& d, double y, int k) {
  require(k >= 0, errc::domain, "negative iteration count");
  for (int i = 0; i < k; ++i) y = pgf_log_eval(d, y);
  return y;
}

// Least fixed point of f on [0,1]; 1 when m <= 1 (the unit-growth law
// theta_1 = 1 is flagged degenerate by the distribution, not here).
inline double extinction_prob(const OffspringDist& d) {
  if (d.mean() <= 1.0) return 1.0;
  double q = 0.0;
  for (int it = 0; it < 1 << 20; ++it) {
    double next = pgf_eval(d, q);
    if (std::abs(next - q) < 1e-14) return next;
    q = next;
  }
  return q;
}

// ------------------------------------------------------------------
// exact generation distributions

struct Pmf {
  int level = 0;
  std::vector<double> p;  // support {0, ..., N^level}

  double mean() const {
    double m = 0.0;
    for (std::size_t s = 1; s < p.size(); ++s) m += double(s) * p[s];
    return m;
  }
  double sum() const { return std::accumulate(p.begin(), p.end(), 0.0); }
};

// P(Z_k = s) by direct offspring-law convolution per level; direct sums
// keep the far tail accurate at the e^{-30} scale the rate checks need.
inline Pmf z_distribution(const OffspringDist& d, int k, std::size_t support_cap = (1u << 20)) {
  require(k >= 0, errc::domain, "negative level");
  const int N = d.max_offspring();
  double width = std::pow(double(N), double(k));
  require(width + 1.0 <= double(support_cap), errc::capacity, "support cap exceeded");
  Pmf out;
  out.level = k;
  out.p = {0.0, 1.0};  // Z_0 = 1
  std::vector<double> conv, next;
  for (int lv = 1; lv <= k; ++lv) {
    const auto& prev = out.p;
    std::size_t size = (prev.size() - 1) * std::size_t(N) + 1;
    next.assign(size, 0.0);
    // conv powers of prev: C_0 = delta_0, C_x = C_{x-1} * prev
    std::vector<double> cx{1.0};
    if (d.theta[0] > 0.0) next[0] += d.theta[0];
    for (int x = 1; x <= N; ++x) {
      conv.assign((prev.size() - 1) * std::size_t(x) + 1, 0.0);
      for (std::size_t i = 0; i < cx.size(); ++i) {
        if (cx[i] == 0.0) continue;
        for (std::size_t j = 0; j < prev.size(); ++j) conv[i + j] += cx[i] * prev[j];
      }
      cx = conv;
      if (d.theta[std::size_t(x)] > 0.0)
        for (std::size_t s = 0; s < cx.size(); ++s) next[s] += d.theta[std::size_t(x)] * cx[s];
    }
    out.p = next;
    out.level = lv;
  }
  return out;
}

// Exact-rational twin of z_distribution: numerators over the common
// denominator den(k) = theta_den * den(k-1)^N.
struct ExactPmf {
  int level = 0;
  std::vector<BigUInt> num;
  BigUInt den = BigUInt(1);

  double value(std::size_t s) const { return big_ratio(num[s], den); }
};

inline ExactPmf z_distribution_exact(const OffspringDist& d, int k) {
  require(d.has_exact(), errc::precondition, "offspring law carries no exact rationals");
  require(k >= 0 && k <= 12, errc::capacity, "exact mode supports k <= 12");
  const int N = d.max_offspring();
  uint64_t tden = 1;
  for (auto& [n, dd] : d.theta_rat) {
    uint64_t g = std::gcd(tden, dd);
    tden = tden / g * dd;
  }
  std::vector<uint64_t> tnum(d.theta_rat.size());
  for (std::size_t j = 0; j < d.theta_rat.size(); ++j)
    tnum[j] = d.theta_rat[j].first * (tden / d.theta_rat[j].second);

  ExactPmf out;
  out.level = 0;
  out.num = {BigUInt(0), BigUInt(1)};
  out.den = BigUInt(1);
  for (int lv = 1; lv <= k; ++lv) {
    std::vector<BigUInt> den_pow(std::size_t(N) + 1);
    den_pow[0] = BigUInt(1);
    for (int i = 1; i <= N; ++i) den_pow[std::size_t(i)] = den_pow[std::size_t(i - 1)] * out.den;
    std::size_t size = (out.num.size() - 1) * std::size_t(N) + 1;
    std::vector<BigUInt> next(size, BigUInt(0));
    std::vector<BigUInt> cx{BigUInt(1)};
    if (tnum[0] != 0) next[0] = next[0] + BigUInt(tnum[0]) * den_pow[std::size_t(N)];
    for (int x = 1; x <= N; ++x) {
      std::vector<BigUInt> conv((out.num.size() - 1) * std::size_t(x) + 1, BigUInt(0));
      for (std::size_t i = 0; i < cx.size(); ++i) {
        if (cx[i].is_zero()) continue;
        for (std::size_t j = 0; j < out.num.size(); ++j) {
          if (out.num[j].is_zero()) continue;
          conv[i + j] = conv[i + j] + cx[i] * out.num[j];
        }
      }
      cx = std::move(conv);
      if (tnum[std::size_t(x)] != 0) {
        BigUInt scale = BigUInt(tnum[std::size_t(x)]) * den_pow[std::size_t(N - x)];
        for (std::size_t s = 0; s < cx.size(); ++s)
          if (!cx[s].is_zero()) next[s] = next[s] + cx[s] * scale;
      }
    }
    out.num = std::move(next);
    out.den = BigUInt(tden) * den_pow[std::size_t(N)];
    out.level = lv;
  }
  return out;
}

// ------------------------------------------------------------------
// tail probabilities and the large-deviation rate

inline double tail_prob(const Pmf& pmf, const OffspringDist& d, double t) {
  double thr = std::pow(d.mean(), t * double(pmf.level));
  if (thr > double(pmf.p.size() - 1)) return 0.0;
  std::size_t s_min = std::size_t(std::max(0.0, std::ceil(thr)));
  double sum = 0.0;  // ascending from the smallest terms in the far tail
  for (std::size_t s = pmf.p.size(); s-- > s_min;) sum += pmf.p[s];
  return sum;
}

inline double tail_prob(const OffspringDist& d, int k, double t, std::size_t support_cap = (1u << 20)) {
  return tail_prob(z_distribution(d, k, support_cap), d, t);
}

struct RateRow {
  int k = 0;
  double tail = 0.0;
  double rho = 0.0;  // log_m(-log tail)/k
};

struct RateProfile {
  std::vector<RateRow> rows;
  double target = 0.0;  // (t-1) gamma/(gamma-1)
  bool truncated = false;          // tail underflow stopped the range early
  bool tail_monotone_ok = true;    // rho nondecreasing on the trailing half
};

inline RateProfile large_dev_rate(const OffspringDist& d, double t, int k_lo, int k_hi,
                                  std::size_t support_cap = (1u << 20)) {
  double gamma = d.gamma();
  require(gamma > 1.0 + 1e-12, errc::domain, "t must be < gamma but gamma = 1 (constant offspring)");
  require(t > 1.0 && t < gamma, errc::domain, "t must lie in (1, gamma)");
  require(k_lo >= 1 && k_lo <= k_hi, errc::domain, "bad level range");
  RateProfile out;
  out.target = (t - 1.0) * gamma / (gamma - 1.0);
  double logm = std::log(d.mean());
  for (int k = k_lo; k <= k_hi; ++k) {
    double tail = tail_prob(d, k, t, support_cap);
    if (tail < 1e-300 || tail <= 0.0) {
      out.truncated = true;
      break;
    }
    out.rows.push_back({k, tail, std::log(-std::log(tail)) / logm / double(k)});
  }
  // monotonicity flag over the trailing half of the computed rows
  for (std::size_t i = out.rows.size() / 2; i + 1 < out.rows.size(); ++i)
    if (out.rows[i + 1].rho < out.rows[i].rho - 1e-12) out.tail_monotone_ok = false;
  return out;
}

// ------------------------------------------------------------------
// Monte Carlo checks

struct McEstimate {
  double p_hat = 0.0;
  double stderr_ = 0.0;
  long trials = 0;
};

// P(Z_k >= m^{tk} and at least threshold_frac * m^{tk} offspring processes
// survive); Z_k is drawn from its exact pmf and survivors are Binomial(Z_k,
// 1-q) since subtree survival events are independent.
inline McEstimate surviving_tail_mc(const OffspringDist& d, int k, double t, double threshold_frac,
                                    long trials, uint64_t seed) {
  require(trials > 0, errc::domain, "trial count must be positive");
  require(d.mean() > 1.0, errc::domain, "survival analysis needs a supercritical law");
  Pmf pmf = z_distribution(d, k);
  std::vector<double> cdf(pmf.p.size());
  double acc = 0.0;
  for (std::size_t s = 0; s < pmf.p.size(); ++s) cdf[s] = (acc += pmf.p[s]);
  double q = extinction_prob(d);
  double thr = std::pow(d.mean(), t * double(k));
  double surv_need = threshold_frac * thr;
  long hits = 0;
  for (long tr = 0; tr < trials; ++tr) {
    RngStream rng(seed, PathKey{}.child(uint64_t(tr)));
    double u = rng.next_double();
    std::size_t z = std::size_t(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (double(z) < thr) continue;
    long surv = 0;
    for (std::size_t i = 0; i < z; ++i) surv += rng.bernoulli(1.0 - q) ? 1 : 0;
    if (double(surv) >= surv_need) ++hits;
  }
  McEstimate e;
  e.trials = trials;
  e.p_hat = double(hits) / double(trials);
  e.stderr_ = std::sqrt(std::max(e.p_hat * (1.0 - e.p_hat), 1.0 / double(trials)) / double(trials));
  return e;
}

// frequency of "at least lambda*n of n iid Bernoulli(p) events occur"
inline McEstimate bound_low_check(double p, double lambda, long n, long trials, uint64_t seed) {
  require(p > 0.0 && p <= 1.0, errc::domain, "p must lie in (0,1]");
  require(lambda > 0.0 && lambda < p, errc::domain, "lambda must lie in (0,p)");
  require(n > 0 && trials > 0, errc::domain, "counts must be positive");
  long hits = 0;
  double need = lambda * double(n);
  for (long tr = 0; tr < trials; ++tr) {
    RngStream rng(seed, PathKey{}.child(uint64_t(tr)));
    long cnt = 0;
    for (long i = 0; i < n; ++i) cnt += rng.bernoulli(p) ? 1 : 0;
    if (double(cnt) >= need) ++hits;
  }
  McEstimate e;
  e.trials = trials;
  e.p_hat = double(hits) / double(trials);
  e.stderr_ = std::sqrt(std::max(e.p_hat * (1.0 - e.p_hat), 1.0 / double(trials)) / double(trials));
  return e;
}

// ------------------------------------------------------------------
// tree sampling

// Seeded realization to a fixed depth.  Offspring counts are keyed by the
// node's path, so the same (seed, dist, depth) always yields the same tree
// regardless of traversal order.
struct TreeSample {
  uint64_t seed = 0;
  int depth = 0;
  SymbolicTree tree;  // metric e^{-level}
};

inline TreeSample sample_tree(const OffspringDist& d, int depth, uint64_t seed,
                              std::size_t node_budget = (1u << 22)) {
  require(depth >= 1, errc::domain, "depth must be positive");
  TreeSample out;
  out.seed = seed;
  out.depth = depth;
  out.tree.log_base = 1.0;
  std::vector<double> cdf(d.theta.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < d.theta.size(); ++j) cdf[j] = (acc += d.theta[j]);
  std::vector<PathKey> keys{PathKey{}.child(seed)};
  std::size_t total = 1;
  for (int k = 0; k < depth; ++k) {
    std::vector<uint32_t> starts(keys.size() + 1, 0);
    std::vector<PathKey> next_keys;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      double u = path_uniform(seed, keys[i]);
      std::size_t x = std::size_t(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      starts[i + 1] = starts[i] + uint32_t(x);
      for (std::size_t c = 0; c < x; ++c) next_keys.push_back(keys[i].child(c));
    }
    total += next_keys.size();
    require(total <= node_budget, errc::capacity, "tree node budget exceeded");
    out.tree.child_start.push_back(std::move(starts));
    keys = std::move(next_keys);
    if (keys.empty() && k + 1 < depth) {
      // extinct: remaining levels are empty
      for (int rest = k + 1; rest < depth; ++rest)
        out.tree.child_start.push_back(std::vector<uint32_t>{0});
      break;
    }
  }
  out.tree.deepest_count = out.tree.child_start.back().back();
  return out;
}

// ------------------------------------------------------------------
// dimension formulas and profiles

// min(alpha, log N) scaled between the box endpoint log m and the Assouad
// endpoint log N.
inline double tree_dim_formula(const OffspringDist& d, double alpha) {
  require(alpha >= 0.0, errc::domain, "alpha must be nonnegative");
  double m = d.mean();
  require(m > 1.0, errc::domain, "dimension formula needs a supercritical law");
  double logN = std::log(double(d.max_offspring()));
  double logm = std::log(m);
  if (logN == logm) return logm;  // constant offspring: gamma = 1
  if (alpha >= logN) return logN;
  return alpha * (1.0 - logm / logN) + logm;
}

inline cover::DimProfile tree_phi_profile(const TreeSample& sample, const DimFn& phi,
                                          double tail_fraction = 0.5) {
  cover::ProfileOptions opt;
  opt.survivors_only = true;
  opt.tail_fraction = tail_fraction;
  return cover::phi_profile(sample.tree, phi, opt);
}

struct BcScan {
  std::vector<int> hit_levels;      // levels with a subtree exceeding m^{tn}
  std::vector<int> skipped_levels;  // levels the stored depth cannot certify
};

// Exhaustive finite-depth scan for levels k whose subtrees have at least
// m^{tn} descendants n = floor(log(k)/alpha) levels below; diagnostic only,
// the almost-sure statement is not finitely certifiable.
inline BcScan bc_event_scan(const TreeSample& sample, const OffspringDist& d, double t, double alpha) {
  require(alpha > 0.0, errc::domain, "alpha must be positive");
  BcScan out;
  double m = d.mean();
  for (int k = 1; k <= sample.depth; ++k) {
    int n = int(std::floor(std::log(double(k)) / alpha));
    if (n < 1) continue;
    if (k + n > sample.depth) {
      out.skipped_levels.push_back(k);
      continue;
    }
    double need = std::pow(m, t * double(n));
    bool hit = false;
    for (uint32_t i = 0; i < sample.tree.level_size(k) && !hit; ++i) {
      auto [lo, hi] = sample.tree.descendants(k, i, n);
      hit = double(hi - lo) >= need;
    }
    if (hit) out.hit_levels.push_back(k);
  }
  return out;
}

// ------------------------------------------------------------------
// JSON serialization

inline nlohmann::json to_json(const OffspringDist& d) {
  nlohmann::json j;
  if (d.has_exact()) {
    auto arr = nlohmann::json::array();
    for (auto& [n, dd] : d.theta_rat) arr.push_back(std::to_string(n) + "/" + std::to_string(dd));
    j["theta"] = arr;
    j["exact"] = true;
  } else {
    j["theta"] = d.theta;
    j["exact"] = false;
  }
  return j;
}

inline OffspringDist from_json_offspring(const nlohmann::json& j) {
  require(j.contains("theta"), errc::domain, "offspring JSON needs theta");
  const auto& arr = j.at("theta");
  bool exact = j.value("exact", false);
  bool any_string = false;
  for (const auto& v : arr)
    if (v.is_string()) any_string = true;
  if (exact || any_string) {
    std::vector<std::pair<uint64_t, uint64_t>> probs;
    for (const auto& v : arr) {
      if (v.is_string()) {
        std::string s = v.get<std::string>();
        auto slash = s.find('/');
        require(slash != std::string::npos, errc::domain, "rational theta must look like a/b");
        probs.emplace_back(std::stoull(s.substr(0, slash)), std::stoull(s.substr(slash + 1)));
      } else {
        double x = v.get<double>();
        // small-denominator rationals only; anything else must be a string
        uint64_t den = 1;
        while (den < (1u << 20) && std::abs(x * double(den) - std::round(x * double(den))) > 1e-9) den *= 2;
        require(std::abs(x * double(den) - std::round(x * double(den))) <= 1e-9, errc::domain,
                "cannot interpret theta entry as an exact rational; use \"a/b\"");
        probs.emplace_back(uint64_t(std::llround(x * double(den))), den);
      }
    }
    return OffspringDist::from_rationals(std::move(probs));
  }
  std::vector<double> probs;
  for (const auto& v : arr) probs.push_back(v.get<double>());
  return OffspringDist::from_probs(std::move(probs));
}

}  // namespace phidim::gw
