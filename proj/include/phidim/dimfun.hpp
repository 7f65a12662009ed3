#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "phidim/common.hpp"

namespace phidim::dimfun {

// Dimension functions are represented by closed-form descriptors rather than
// opaque callables so they can be serialized into run specs and composed
// symbolically.  All evaluation happens in the L = log(1/R) domain; the
// constructions in this library routinely reach scales like R = e^{-1e140}
// where R itself is not representable.

struct DimFn;

struct Constant {
  double c;
};
struct LogLogRatio {};  // phi(R) = loglog(1/R)/log(1/R)
struct PowerLog {
  double t;  // phi(R) = (log(1/R))^{-t}, t in (0,1)
};
struct Scaled {
  double alpha;  // phi(R) = inner(R)/alpha
  std::shared_ptr<const DimFn> inner;
};
// Piecewise linear in (L, g) coordinates with g(L) = phi(R)*L.  Below the
// first knot the function continues with constant phi = g_1/L_1; past the
// last knot it continues with the final slope, which keeps constructed
// functions total on (0, R_max).
struct PiecewiseLogLinear {
  std::vector<std::pair<double, double>> knots;  // (L_i, g_i), L_i strictly increasing
};

struct DimFn {
  std::variant<Constant, LogLogRatio, PowerLog, Scaled, PiecewiseLogLinear> node;

  // smallest admissible L (exclusive bound where positive)
  double min_log_scale() const;
  // L below which monotone decrease of phi is not promised
  double monotone_cutoff() const;
  double eval_log(double L) const;  // phi at R = e^{-L}
};

inline DimFn constant(double c) {
  require(c > 0.0, errc::domain, "constant dimension function needs c > 0");
  return DimFn{Constant{c}};
}
inline DimFn loglog_ratio() { return DimFn{LogLogRatio{}}; }
inline DimFn power_log(double t) {
  require(t > 0.0 && t < 1.0, errc::domain, "power_log exponent must lie in (0,1)");
  return DimFn{PowerLog{t}};
}
inline DimFn piecewise(std::vector<std::pair<double, double>> knots) {
  require(!knots.empty(), errc::domain, "piecewise dimension function needs at least one knot");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    require(knots[i].first > 0.0, errc::domain, "piecewise knot with nonpositive L");
    require(knots[i].second > 0.0, errc::domain, "piecewise knot with nonpositive g");
    if (i) require(knots[i].first > knots[i - 1].first, errc::domain, "piecewise knots must have increasing L");
  }
  return DimFn{PiecewiseLogLinear{std::move(knots)}};
}

// phi/alpha; alpha*eval(scale(phi,alpha),R) == eval(phi,R) exactly.
inline DimFn scale(DimFn phi, double alpha) {
  require(alpha > 0.0, errc::domain, "scale factor must be positive");
  if (auto* s = std::get_if<Scaled>(&phi.node)) {
    // collapse nested scalings so the group action stays exact
    return DimFn{Scaled{s->alpha * alpha, s->inner}};
  }
  return DimFn{Scaled{alpha, std::make_shared<DimFn>(std::move(phi))}};
}

inline double DimFn::min_log_scale() const {
  struct V {
    double operator()(const Constant&) const { return 0.0; }
    double operator()(const LogLogRatio&) const { return 1.0; }
    double operator()(const PowerLog&) const { return 0.0; }
    double operator()(const Scaled& s) const { return s.inner->min_log_scale(); }
    double operator()(const PiecewiseLogLinear&) const { return 0.0; }
  };
  return std::visit(V{}, node);
}

inline double DimFn::monotone_cutoff() const {
  struct V {
    double operator()(const Constant&) const { return 0.0; }
    double operator()(const LogLogRatio&) const { return std::exp(1.0); }
    double operator()(const PowerLog&) const { return 0.0; }
    double operator()(const Scaled& s) const { return s.inner->monotone_cutoff(); }
    double operator()(const PiecewiseLogLinear&) const { return 0.0; }
  };
  return std::visit(V{}, node);
}

inline double DimFn::eval_log(double L) const {
  require(L > 0.0, errc::domain, "scale outside (0,1)");
  struct V {
    double L;
    double operator()(const Constant& c) const { return c.c; }
    double operator()(const LogLogRatio&) const {
      require(L > 1.0, errc::domain, "loglog dimension function needs log(1/R) > 1");
      return std::log(L) / L;
    }
    double operator()(const PowerLog& p) const { return std::pow(L, -p.t); }
    double operator()(const Scaled& s) const { return s.inner->eval_log(L) / s.alpha; }
    double operator()(const PiecewiseLogLinear& pw) const {
      const auto& k = pw.knots;
      if (L <= k.front().first) return k.front().second / k.front().first;
      std::size_t hi = 1;
      while (hi < k.size() && k[hi].first < L) ++hi;
      double g;
      if (hi == k.size()) {
        double slope = k.size() == 1 ? k.back().second / k.back().first
                                     : (k[hi - 1].second - k[hi - 2].second) / (k[hi - 1].first - k[hi - 2].first);
        g = k.back().second + slope * (L - k.back().first);
      } else {
        double w = (L - k[hi - 1].first) / (k[hi].first - k[hi - 1].first);
        g = k[hi - 1].second + w * (k[hi].second - k[hi - 1].second);
      }
      require(g > 0.0, errc::domain, "piecewise dimension function evaluates nonpositive");
      return g / L;
    }
  };
  return std::visit(V{L}, node);
}

inline double eval(const DimFn& phi, double R) {
  require(R > 0.0 && R < 1.0, errc::domain, "scale outside (0,1)");
  return phi.eval_log(-std::log(R));
}

// ------------------------------------------------------------------
// scale grid

// Geometric grid of scales R_j = b^{-j}, j in [j_min, j_max].
struct ScaleGrid {
  double base = 2.0;
  int j_min = 1;
  int j_max = 40;

  ScaleGrid() = default;
  ScaleGrid(double b, int lo, int hi) : base(b), j_min(lo), j_max(hi) {
    require(b > 1.0, errc::domain, "grid base must exceed 1");
    require(lo <= hi, errc::domain, "empty scale grid");
    require(lo >= 1 || std::pow(b, -lo) < 1.0, errc::domain, "grid scales must lie in (0,1)");
  }

  int size() const { return j_max - j_min + 1; }
  double log_scale(int j) const { return double(j) * std::log(base); }  // log(1/R_j)
  double scale(int j) const { return std::pow(base, -double(j)); }
};

// ------------------------------------------------------------------
// validation

struct ValidationReport {
  bool cond_i_ok = true;        // g = phi*L nondecreasing and reaching the divergence witness
  bool cond_ii_ok = true;       // phi nonincreasing past the monotone cutoff
  std::optional<int> first_violation;  // grid index j of the first failure
  double witness_value = 0.0;   // g at j_max
};

// Divergence of g cannot be decided from samples; certification on a grid
// means monotone g plus g(L_max) >= witness_g.
struct ValidateOptions {
  double witness_g = 20.0;
  double slack = 1e-12;
};

inline ValidationReport validate(const DimFn& phi, const ScaleGrid& grid, const ValidateOptions& opt = {}) {
  ValidationReport rep;
  double cutoff = phi.monotone_cutoff();
  double prev_g = -std::numeric_limits<double>::infinity();
  double prev_phi = std::numeric_limits<double>::infinity();
  bool prev_phi_valid = false;
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double L = grid.log_scale(j);
    double p = phi.eval_log(L);
    double g = p * L;
    if (g < prev_g - opt.slack && rep.cond_i_ok) {
      rep.cond_i_ok = false;
      if (!rep.first_violation) rep.first_violation = j;
    }
    prev_g = std::max(prev_g, g);
    if (L >= cutoff) {
      if (prev_phi_valid && p > prev_phi + opt.slack && rep.cond_ii_ok) {
        rep.cond_ii_ok = false;
        if (!rep.first_violation) rep.first_violation = j;
      }
      prev_phi = prev_phi_valid ? std::min(prev_phi, p) : p;
      prev_phi_valid = true;
    }
    if (j == grid.j_max) rep.witness_value = g;
  }
  if (rep.witness_value < opt.witness_g && rep.cond_i_ok) {
    rep.cond_i_ok = false;
    if (!rep.first_violation) rep.first_violation = grid.j_max;
  }
  return rep;
}

// ------------------------------------------------------------------
// spectrum parameter algebra

// Solves 1/theta_alpha - 1 = (1/alpha)(1/theta - 1); strictly increasing in
// alpha with fixed point theta at alpha = 1.
inline double theta_alpha(double theta, double alpha) {
  require(theta > 0.0 && theta < 1.0, errc::domain, "theta must lie in (0,1)");
  require(alpha > 0.0, errc::domain, "alpha must be positive");
  return 1.0 / (1.0 + (1.0 / theta - 1.0) / alpha);
}

// ------------------------------------------------------------------
// ratio profile

struct RatioProfile {
  std::vector<double> ratios;  // phi(R_j)/psi(R_j) per grid index
  double tail_min = 0.0;
  double tail_max = 0.0;
};

inline RatioProfile ratio_profile(const DimFn& phi, const DimFn& psi, const ScaleGrid& grid,
                                  double tail_fraction = 0.5) {
  RatioProfile out;
  out.ratios.reserve(std::size_t(grid.size()));
  for (int j = grid.j_min; j <= grid.j_max; ++j) {
    double L = grid.log_scale(j);
    out.ratios.push_back(phi.eval_log(L) / psi.eval_log(L));
  }
  auto s = tail_sup(out.ratios, [](double v) { return v; }, tail_fraction);
  out.tail_max = s.sup;
  double mn = std::numeric_limits<double>::infinity();
  for (std::size_t i = s.tail_begin; i < out.ratios.size(); ++i) mn = std::min(mn, out.ratios[i]);
  out.tail_min = mn;
  return out;
}

// ------------------------------------------------------------------
// maximal dimension function below a sampled function

// Two-stage envelope: g0(L) = min over L' >= L of phi(L')*L', then the
// running minimum of g0(L')/L' from smaller L.  Plateaus are kept exactly.
// The result is the pointwise-largest grid-sampled dimension function below
// the input; applying the operation twice is idempotent.
inline DimFn maximal_dimfn_below(const std::vector<double>& phi_samples, const ScaleGrid& grid,
                                 double divergence_witness = 1.0) {
  require(int(phi_samples.size()) == grid.size(), errc::precondition, "sample count must match grid");
  const std::size_t n = phi_samples.size();
  std::vector<double> L(n), g(n);
  for (std::size_t i = 0; i < n; ++i) {
    L[i] = grid.log_scale(grid.j_min + int(i));
    require(phi_samples[i] > 0.0, errc::precondition, "sampled function must be positive");
    g[i] = phi_samples[i] * L[i];
  }
  require(g.back() >= divergence_witness, errc::precondition,
          "phi*log(1/R) does not diverge on the grid");
  // stage 1: suffix minimum of g
  std::vector<double> g0(n);
  double suffix = std::numeric_limits<double>::infinity();
  for (std::size_t i = n; i-- > 0;) {
    suffix = std::min(suffix, g[i]);
    g0[i] = suffix;
  }
  // stage 2: running minimum of psi0 = g0/L taken from larger scales
  std::vector<std::pair<double, double>> knots(n);
  double run = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    run = std::min(run, g0[i] / L[i]);
    knots[i] = {L[i], run * L[i]};
  }
  return piecewise(std::move(knots));
}

// ------------------------------------------------------------------
// JSON serialization

inline nlohmann::json to_json(const DimFn& phi) {
  struct V {
    nlohmann::json operator()(const Constant& c) const { return {{"kind", "constant"}, {"c", c.c}}; }
    nlohmann::json operator()(const LogLogRatio&) const { return {{"kind", "loglog"}}; }
    nlohmann::json operator()(const PowerLog& p) const { return {{"kind", "powerlog"}, {"t", p.t}}; }
    nlohmann::json operator()(const Scaled& s) const {
      return {{"kind", "scaled"}, {"alpha", s.alpha}, {"inner", to_json(*s.inner)}};
    }
    nlohmann::json operator()(const PiecewiseLogLinear& pw) const {
      nlohmann::json ks = nlohmann::json::array();
      for (auto& [l, gg] : pw.knots) ks.push_back({l, gg});
      return {{"kind", "piecewise"}, {"knots", ks}};
    }
  };
  return std::visit(V{}, phi.node);
}

inline DimFn from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("kind"), errc::domain, "dimension function JSON needs a kind");
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return constant(j.at("c").get<double>());
  if (kind == "loglog") return loglog_ratio();
  if (kind == "powerlog") return power_log(j.at("t").get<double>());
  if (kind == "scaled") return scale(from_json(j.at("inner")), j.at("alpha").get<double>());
  if (kind == "piecewise") {
    std::vector<std::pair<double, double>> ks;
    for (auto& k : j.at("knots")) ks.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
    return piecewise(std::move(ks));
  }
  fail(errc::domain, "unknown dimension function kind: " + kind);
}

}  // namespace phidim::dimfun
