#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "phidim/common.hpp"
#include "phidim/cover.hpp"
#include "phidim/dimfun.hpp"
#include "phidim/gw.hpp"
#include "phidim/rng.hpp"

namespace phidim::perc {

using cover::GridSetD;
using cover::SymbolicTree;
using dimfun::DimFn;

// ------------------------------------------------------------------
// specification

struct PercSpec {
  int n = 2;          // subdivision per axis
  int d = 2;          // ambient dimension
  double p = 0.5;     // retention probability
  int condition_depth = 0;  // levels through which every subcube is retained

  uint64_t fanout() const {
    uint64_t f = 1;
    for (int a = 0; a < d; ++a) f *= uint64_t(n);
    return f;
  }
  void validate() const {
    require(n >= 2, errc::domain, "subdivision must be at least 2");
    require(d >= 1, errc::domain, "ambient dimension must be at least 1");
    require(p > 0.0 && p <= 1.0, errc::domain, "retention probability must lie in (0,1]");
    require(condition_depth >= 0, errc::domain, "conditioning depth must be nonnegative");
  }
  void require_supercritical() const {
    require(p * double(fanout()) > 1.0, errc::domain,
            "supercritical analysis needs p * n^d > 1");
  }
};

// ------------------------------------------------------------------
// reduction to the branching process

// Offspring law of the retained-subcube count: Binomial(n^d, p).
inline gw::OffspringDist to_offspring(const PercSpec& spec) {
  spec.validate();
  const int M = int(spec.fanout());
  std::vector<double> theta(std::size_t(M) + 1);
  // iterative binomial pmf, stable for the desk-sized M used here
  double q = 1.0 - spec.p;
  theta[0] = std::pow(q, M);
  for (int j = 1; j <= M; ++j) {
    if (q == 0.0) {
      theta[std::size_t(j)] = (j == M) ? 1.0 : 0.0;
      continue;
    }
    theta[std::size_t(j)] =
        std::exp(std::lgamma(M + 1.0) - std::lgamma(j + 1.0) - std::lgamma(M - j + 1.0) +
                 double(j) * std::log(spec.p) + double(M - j) * std::log(q));
  }
  // renormalize the last ulps so the law validates exactly
  double sum = 0.0;
  for (double v : theta) sum += v;
  for (double& v : theta) v /= sum;
  return gw::OffspringDist::from_probs(std::move(theta));
}

// ------------------------------------------------------------------
// sampling

// Seeded realization of the retained-cell hierarchy.  Retention of a cell
// is a pure function of (seed, cell path), so conditioned and unconditioned
// samples couple below the conditioning depth.
struct PercSample {
  PercSpec spec;
  uint64_t seed = 0;
  int depth = 0;
  std::vector<std::vector<uint64_t>> levels;  // sorted retained codes per level

  bool extinct() const { return levels.back().empty(); }

  // contiguous child-range tree view over the retained codes
  SymbolicTree tree_view() const {
    SymbolicTree t;
    t.log_base = std::log(double(spec.n));
    uint64_t f = spec.fanout();
    for (int k = 0; k + 1 <= depth; ++k) {
      const auto& cur = levels[std::size_t(k)];
      const auto& nxt = levels[std::size_t(k) + 1];
      std::vector<uint32_t> starts(cur.size() + 1, 0);
      for (std::size_t i = 0; i < cur.size(); ++i) {
        auto lo = std::lower_bound(nxt.begin(), nxt.end(), cur[i] * f);
        starts[i] = uint32_t(lo - nxt.begin());
      }
      starts.back() = uint32_t(nxt.size());
      t.child_start.push_back(std::move(starts));
    }
    t.deepest_count = uint32_t(levels.back().size());
    return t;
  }

  // occupied-cell view with uniform base-n geometry
  GridSetD grid_view() const {
    GridSetD g;
    g.d = spec.d;
    g.base = double(spec.n);
    g.uniform = true;
    g.levels = levels;
    for (int k = 0; k <= depth; ++k) g.level_log_scale.push_back(double(k) * std::log(double(spec.n)));
    return g;
  }
};

inline PercSample sample(const PercSpec& spec, int depth, uint64_t seed,
                         std::size_t cell_budget = (1u << 22)) {
  spec.validate();
  require(depth >= 1, errc::domain, "depth must be positive");
  {
    double expected = 1.0;
    for (int k = 0; k < depth; ++k) expected *= spec.p * double(spec.fanout());
    require(expected <= double(cell_budget), errc::capacity, "expected cell budget exceeded");
  }
  PercSample out;
  out.spec = spec;
  out.seed = seed;
  out.depth = depth;
  out.levels.assign(std::size_t(depth) + 1, {});
  out.levels[0] = {0};
  std::vector<PathKey> keys{PathKey{}};
  std::size_t total = 1;
  uint64_t f = spec.fanout();
  for (int k = 0; k < depth; ++k) {
    std::vector<PathKey> next_keys;
    auto& next = out.levels[std::size_t(k) + 1];
    for (std::size_t i = 0; i < out.levels[std::size_t(k)].size(); ++i) {
      uint64_t code = out.levels[std::size_t(k)][i];
      for (uint64_t c = 0; c < f; ++c) {
        PathKey ck = keys[i].child(c);
        bool keep = (k < spec.condition_depth) || path_uniform(seed, ck) < spec.p;
        if (keep) {
          next.push_back(code * f + c);
          next_keys.push_back(ck);
        }
      }
    }
    total += next.size();
    require(total <= cell_budget, errc::capacity, "cell budget exceeded");
    keys = std::move(next_keys);
    if (next.empty()) break;  // extinct; deeper levels stay empty
  }
  return out;
}

// ------------------------------------------------------------------
// dimension formula

// alpha log(1/p) / (d log^2 n) + log(p n^d)/log n, clipped to d at
// alpha >= log n^d; continuous at the junction.
inline double perc_dim_formula(const PercSpec& spec, double alpha) {
  spec.validate();
  spec.require_supercritical();
  require(alpha >= 0.0, errc::domain, "alpha must be nonnegative");
  double logn = std::log(double(spec.n));
  double logNd = double(spec.d) * logn;
  if (alpha >= logNd) return double(spec.d);
  return alpha * std::log(1.0 / spec.p) / (double(spec.d) * logn * logn) +
         std::log(spec.p * double(spec.fanout())) / logn;
}

inline cover::DimProfile perc_phi_profile(const PercSample& sample, const DimFn& phi,
                                          double tail_fraction = 0.5) {
  cover::ProfileOptions opt;
  opt.survivors_only = true;
  opt.tail_fraction = tail_fraction;
  return cover::phi_profile(sample.tree_view(), phi, opt);
}

// ------------------------------------------------------------------
// rendering

// Binary PGM (P5), one pixel_scale^2 block per retained level cell; d = 2
// only.  Retained cells are black on a white background.
inline std::string render(const PercSample& sample, int level, int pixel_scale) {
  require(sample.spec.d == 2, errc::domain, "rendering supports d = 2 only");
  require(level >= 0 && level <= sample.depth, errc::domain, "level outside the sampled depth");
  require(pixel_scale >= 1, errc::domain, "pixel scale must be positive");
  uint64_t side_cells = 1;
  for (int i = 0; i < level; ++i) side_cells *= uint64_t(sample.spec.n);
  uint64_t side = side_cells * uint64_t(pixel_scale);
  require(side <= 8192, errc::capacity, "render size too large");
  std::vector<uint8_t> img(side * side, 255);
  uint64_t f = sample.spec.fanout();
  uint64_t b = uint64_t(sample.spec.n);
  for (uint64_t code : sample.levels[std::size_t(level)]) {
    // decode per-axis coordinates, most significant digit first
    uint64_t x = 0, y = 0, rest = code;
    std::vector<uint64_t> digits(static_cast<std::size_t>(level));
    for (int s = level; s-- > 0;) {
      digits[std::size_t(s)] = rest % f;
      rest /= f;
    }
    for (int s = 0; s < level; ++s) {
      uint64_t child = digits[std::size_t(s)];
      x = x * b + child % b;
      y = y * b + (child / b) % b;
    }
    for (uint64_t py = 0; py < uint64_t(pixel_scale); ++py)
      for (uint64_t px = 0; px < uint64_t(pixel_scale); ++px)
        img[(y * uint64_t(pixel_scale) + py) * side + x * uint64_t(pixel_scale) + px] = 0;
  }
  std::string out = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data()), img.size());
  return out;
}

// ------------------------------------------------------------------
// JSON serialization

inline nlohmann::json to_json(const PercSpec& s) {
  nlohmann::json j{{"n", s.n}, {"d", s.d}, {"p", s.p}};
  if (s.condition_depth > 0) j["condition_depth"] = s.condition_depth;
  return j;
}

inline PercSpec from_json_perc(const nlohmann::json& j) {
  PercSpec s;
  s.n = j.at("n").get<int>();
  s.d = j.at("d").get<int>();
  s.p = j.at("p").get<double>();
  s.condition_depth = j.value("condition_depth", 0);
  s.validate();
  return s;
}

}  // namespace phidim::perc
