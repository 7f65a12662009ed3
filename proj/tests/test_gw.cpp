#include <cmath>
#include <vector>

#include "doctest.h"
#include "phidim/gw.hpp"

using namespace phidim;
using namespace phidim::gw;

namespace {

OffspringDist half_half() { return OffspringDist::from_rationals({{0, 2}, {1, 2}, {1, 2}}); }
OffspringDist quarter_double() { return OffspringDist::from_rationals({{1, 4}, {0, 4}, {3, 4}}); }
OffspringDist constant_n(int n) {
  std::vector<std::pair<uint64_t, uint64_t>> probs(std::size_t(n) + 1, {0, 1});
  probs.back() = {1, 1};
  return OffspringDist::from_rationals(std::move(probs));
}

// coefficients of the k-fold composition of the offspring pgf, an
// independent polynomial-algebra route to the law of Z_k
std::vector<double> fk_coefficients(const OffspringDist& d, int k) {
  std::vector<double> fk{0.0, 1.0};  // identity polynomial
  for (int i = 0; i < k; ++i) {
    // compose f with fk: result = sum_j theta_j fk(s)^j via Horner on polynomials
    std::vector<double> res{d.theta.back()};
    for (std::size_t j = d.theta.size() - 1; j-- > 0;) {
      std::vector<double> mul((res.size() - 1) + (fk.size() - 1) + 1, 0.0);
      for (std::size_t a = 0; a < res.size(); ++a)
        for (std::size_t b = 0; b < fk.size(); ++b) mul[a + b] += res[a] * fk[b];
      mul[0] += d.theta[j];
      res = std::move(mul);
    }
    fk = std::move(res);
  }
  return fk;
}

}  // namespace

TEST_CASE("pgf evaluation and fixed points") {
  auto d = quarter_double();
  CHECK(pgf_eval(d, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pgf_eval(d, 0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(pgf_eval(d, 1.0 / 3.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(d.mean() == doctest::Approx(1.5).epsilon(1e-15));
  CHECK_THROWS_AS((void)pgf_eval(d, -0.1), error);
}

TEST_CASE("pgf log-domain iteration") {
  auto d = quarter_double();
  CHECK(pgf_iterate_log(d, 0.7, 0) == 0.7);  // identity at k = 0
  // X == N constant: log f_k(e^y) = N^k y exactly
  auto c3 = constant_n(3);
  for (int k : {1, 2, 5, 8}) {
    double y = 0.11;
    CHECK(pgf_iterate_log(c3, y, k) == doctest::Approx(std::pow(3.0, k) * y).epsilon(1e-12));
  }
  // against direct double evaluation while it still fits
  for (int k : {1, 2, 4, 8, 16}) {
    double y = 0.001;
    double direct = y;
    for (int i = 0; i < k; ++i) direct = std::log(pgf_eval(d, std::exp(direct)));
    CHECK(pgf_iterate_log(d, y, k) == doctest::Approx(direct).epsilon(1e-12));
  }
  // monotone in y
  CHECK(pgf_iterate_log(d, 0.2, 6) < pgf_iterate_log(d, 0.25, 6));
}

TEST_CASE("polybound statistic decays") {
  // N^{-(s+eps)k} log f_k(exp(m^{-(1-s)k})) for s=0.5, eps=0.2
  auto d = quarter_double();
  const double s = 0.5, eps = 0.2;
  const double N = 2.0, m = 1.5;
  double prev = std::numeric_limits<double>::infinity();
  double at40 = 0.0;
  for (int k = 5; k <= 40; ++k) {
    double y0 = std::pow(m, -(1.0 - s) * k);
    double stat = std::pow(N, -(s + eps) * k) * pgf_iterate_log(d, y0, k);
    CHECK(stat < prev);
    prev = stat;
    if (k == 40) at40 = stat;
  }
  CHECK(at40 < 0.05);
}

TEST_CASE("extinction probabilities") {
  CHECK(extinction_prob(quarter_double()) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  auto unit = OffspringDist::from_rationals({{0, 1}, {1, 1}});
  CHECK(unit.degenerate_unit());
  CHECK(extinction_prob(unit) == 1.0);  // m <= 1 rule, flagged degenerate
  CHECK(extinction_prob(constant_n(2)) == 0.0);
  CHECK_FALSE(constant_n(2).degenerate_unit());
}

TEST_CASE("z_distribution exact small cases") {
  auto pmf = z_distribution(half_half(), 2);
  REQUIRE(pmf.p.size() == 5);
  CHECK(pmf.p[0] == 0.0);
  CHECK(pmf.p[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(pmf.p[2] == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(pmf.p[3] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(pmf.p[4] == doctest::Approx(0.125).epsilon(1e-15));

  // deterministic doubling: point mass at 2^k
  auto d2 = z_distribution(constant_n(2), 6);
  for (std::size_t s = 0; s < d2.p.size(); ++s) CHECK(d2.p[s] == (s == 64 ? 1.0 : 0.0));

  CHECK_THROWS_AS((void)z_distribution(half_half(), 25), error);  // support cap
}

TEST_CASE("z_distribution invariants") {
  auto d = quarter_double();
  for (int k : {1, 2, 4, 8, 12}) {
    auto pmf = z_distribution(d, k);
    CHECK(pmf.sum() == doctest::Approx(1.0).epsilon(double(k) * 1e-12));
    CHECK(pmf.mean() == doctest::Approx(std::pow(1.5, k)).epsilon(1e-9));
    // extinction-by-k probability equals f_k(0)
    double fk0 = 0.0;
    for (int i = 0; i < k; ++i) fk0 = pgf_eval(d, fk0);
    CHECK(pmf.p[0] == doctest::Approx(fk0).epsilon(1e-12));
  }
  // f_12(0) approaches q = 1/3 geometrically
  auto p12 = z_distribution(d, 12);
  CHECK(std::abs(p12.p[0] - 1.0 / 3.0) < 1e-3);

  // coefficient oracle for k <= 6
  for (int k : {1, 2, 3, 6}) {
    auto pmf = z_distribution(d, k);
    auto coef = fk_coefficients(d, k);
    REQUIRE(coef.size() == pmf.p.size());
    for (std::size_t s = 0; s < coef.size(); ++s)
      CHECK(pmf.p[s] == doctest::Approx(coef[s]).epsilon(1e-12));
  }
}

TEST_CASE("exact-rational distribution agrees with floating mode") {
  auto d = quarter_double();
  auto ex = z_distribution_exact(d, 2);
  // hand values: (1/4) + (3/4) composed twice
  CHECK(ex.den.to_string() == "64");  // 4^(2^2 - 1)
  CHECK(big_ratio(ex.num[0], ex.den) == doctest::Approx(0.25 + 0.75 * 0.0625).epsilon(1e-15));
  for (int k : {1, 2, 5, 8, 10}) {
    auto exact = z_distribution_exact(d, k);
    auto fl = z_distribution(d, k);
    REQUIRE(exact.num.size() == fl.p.size());
    for (std::size_t s = 0; s < fl.p.size(); ++s) {
      double ev = exact.value(s);
      if (ev > 0.0)
        CHECK(fl.p[s] == doctest::Approx(ev).epsilon(1e-12));  // 12 significant digits
      else
        CHECK(fl.p[s] == 0.0);
    }
  }
}

TEST_CASE("tail probabilities") {
  auto d = half_half();
  // t = 0: P(Z_k >= 1) = 1 - f_k(0)
  for (int k : {3, 8, 12}) {
    double fk0 = 0.0;
    for (int i = 0; i < k; ++i) fk0 = pgf_eval(d, fk0);
    CHECK(tail_prob(d, k, 0.0) == doctest::Approx(1.0 - fk0).epsilon(1e-12));
  }
  // deterministic: threshold below/above N^k
  auto c2 = constant_n(2);
  CHECK(tail_prob(c2, 6, 1.0) == 1.0);
  CHECK(tail_prob(c2, 6, 1.2) == 0.0);
  // nonincreasing in t, Markov ceiling for t > 1
  auto pmf = z_distribution(d, 12);
  double prev = 2.0;
  for (double t : {0.5, 0.9, 1.0, 1.1, 1.2, 1.3}) {
    double tp = tail_prob(pmf, d, t);
    CHECK(tp <= prev + 1e-15);
    prev = tp;
    if (t > 1.0) CHECK(tp <= std::pow(1.5, (1.0 - t) * 12.0));
  }
}

TEST_CASE("large deviation rate profile") {
  auto d = half_half();
  CHECK(d.gamma() == doctest::Approx(std::log(2.0) / std::log(1.5)).epsilon(1e-12));
  auto prof = large_dev_rate(d, 1.3, 8, 12);
  REQUIRE(prof.rows.size() == 5);
  CHECK(prof.target == doctest::Approx(0.3 * d.gamma() / (d.gamma() - 1.0)).epsilon(1e-12));
  // nondecreasing rho over the computed range
  for (std::size_t i = 0; i + 1 < prof.rows.size(); ++i)
    CHECK(prof.rows[i + 1].rho >= prof.rows[i].rho - 1e-12);
  CHECK(std::abs(prof.rows.back().rho - 0.72293) / 0.72293 <= 0.35);
  CHECK(prof.tail_monotone_ok);

  CHECK_THROWS_AS((void)large_dev_rate(constant_n(2), 1.1, 4, 8), error);  // gamma = 1
  CHECK_THROWS_AS((void)large_dev_rate(d, 1.8, 4, 8), error);              // t >= gamma
}

TEST_CASE("surviving tail Monte Carlo") {
  // no extinction: the survivor condition is free and the estimate matches
  // the exact tail
  auto no_death = OffspringDist::from_rationals({{0, 2}, {1, 2}, {1, 2}});
  // shift mass away from zero: theta_1 = theta_2 = 1/2 already has theta_0 = 0
  double q = extinction_prob(no_death);
  CHECK(q == doctest::Approx(0.0).epsilon(1e-12));
  double tail = tail_prob(no_death, 8, 1.2);
  auto est = surviving_tail_mc(no_death, 8, 1.2, 0.5, 40000, 7);
  CHECK(est.p_hat >= tail - 3.0 * est.stderr_ - 1e-12);
  CHECK(est.p_hat <= tail + 3.0 * est.stderr_ + 1e-12);

  // supercritical law with extinction: survival sandwich bounds
  auto d = quarter_double();
  double q2 = extinction_prob(d);
  double tail2 = tail_prob(d, 9, 1.15);
  auto est2 = surviving_tail_mc(d, 9, 1.15, (1.0 - q2) / 2.0, 60000, 11);
  CHECK(est2.p_hat >= tail2 * (1.0 - q2) / (1.0 + q2) - 3.0 * est2.stderr_);
  CHECK(est2.p_hat <= tail2 + 3.0 * est2.stderr_);
}

TEST_CASE("bound_low_check frequencies") {
  auto full = bound_low_check(1.0, 0.5, 20, 2000, 3);
  CHECK(full.p_hat == 1.0);
  auto est = bound_low_check(0.6, 0.3, 50, 100000, 5);
  CHECK(est.p_hat >= (0.6 - 0.3) / (1.0 - 0.3) - 3.0 * est.stderr_);
  CHECK_THROWS_AS((void)bound_low_check(0.3, 0.5, 10, 100, 1), error);
}

TEST_CASE("tree sampling") {
  // constant laws give full trees and bare roots
  auto full = sample_tree(constant_n(3), 6, 42);
  for (int k = 0; k <= 6; ++k) CHECK(full.tree.level_size(k) == uint32_t(std::pow(3.0, k)));
  auto bare = sample_tree(OffspringDist::from_rationals({{1, 1}, {0, 1}, {0, 1}}), 4, 42);
  CHECK(bare.tree.level_size(1) == 0);

  // determinism: identical seeds give identical trees
  auto a = sample_tree(half_half(), 12, 99);
  auto b = sample_tree(half_half(), 12, 99);
  for (int k = 0; k < 12; ++k) CHECK(a.tree.child_start[std::size_t(k)] == b.tree.child_start[std::size_t(k)]);
  auto c = sample_tree(half_half(), 12, 100);
  bool same = true;
  for (int k = 0; k < 12 && same; ++k) same = a.tree.child_start[std::size_t(k)] == c.tree.child_start[std::size_t(k)];
  CHECK_FALSE(same);

  // mean level sizes track m^k across seeds
  const int seeds = 400, depth = 8;
  double m = half_half().mean();
  for (int k : {4, 8}) {
    double sum = 0.0, sumsq = 0.0;
    for (int s = 0; s < seeds; ++s) {
      auto t = sample_tree(half_half(), depth, uint64_t(1000 + s));
      double z = double(t.tree.level_size(k));
      sum += z;
      sumsq += z * z;
    }
    double mean = sum / seeds;
    double sd = std::sqrt(std::max(sumsq / seeds - mean * mean, 1e-9) / seeds);
    CHECK(std::abs(mean - std::pow(m, k)) <= 3.5 * sd + 0.05);
  }
}

TEST_CASE("tree profile and dimension formula") {
  auto full = sample_tree(constant_n(2), 12, 1);
  auto prof = tree_phi_profile(full, dimfun::constant(1.0));
  for (const auto& r : prof.rows) CHECK(r.local_dim == doctest::Approx(kLog2).epsilon(1e-12));

  auto d = half_half();
  auto t = sample_tree(d, 16, 5);
  auto p = tree_phi_profile(t, dimfun::constant(1.0));
  if (!p.extinct)
    for (const auto& r : p.rows) {
      CHECK(r.local_dim >= 0.0);
      CHECK(r.local_dim <= kLog2 + 1e-12);
    }

  CHECK(tree_dim_formula(d, 0.0) == doctest::Approx(std::log(1.5)).epsilon(1e-13));
  CHECK(tree_dim_formula(d, kLog2) == doctest::Approx(kLog2).epsilon(1e-13));
  CHECK(tree_dim_formula(d, 10.0) == doctest::Approx(kLog2).epsilon(1e-13));
  CHECK(tree_dim_formula(d, kLog2 / 2.0) ==
        doctest::Approx((kLog2 + std::log(1.5)) / 2.0).epsilon(1e-12));
  CHECK(tree_dim_formula(constant_n(4), 1.0) == doctest::Approx(std::log(4.0)).epsilon(1e-13));
}

TEST_CASE("Borel-Cantelli event scan") {
  auto full = sample_tree(constant_n(2), 14, 3);
  auto scan = bc_event_scan(full, constant_n(2), 1.0, kLog2);
  // every admissible level of the full tree qualifies (t <= 1 on a full tree)
  CHECK_FALSE(scan.hit_levels.empty());
  for (std::size_t i = 0; i < scan.hit_levels.size(); ++i) {
    int k = scan.hit_levels[std::size_t(i)];
    CHECK(int(std::floor(std::log(double(k)) / kLog2)) >= 1);
  }
  auto bare = sample_tree(OffspringDist::from_rationals({{1, 1}, {0, 1}, {0, 1}}), 6, 3);
  auto scan2 = bc_event_scan(bare, half_half(), 1.1, kLog2);
  CHECK(scan2.hit_levels.empty());

  // half/half trees show events on a majority of seeds (diagnostic band)
  int nonempty = 0;
  for (int s = 0; s < 40; ++s) {
    auto t = sample_tree(half_half(), 22, uint64_t(500 + s));
    auto sc = bc_event_scan(t, half_half(), 1.1, kLog2);
    if (!sc.hit_levels.empty()) ++nonempty;
  }
  CHECK(nonempty >= 20);
}

TEST_CASE("offspring JSON round trip") {
  auto d = quarter_double();
  auto j = to_json(d);
  auto back = from_json_offspring(j);
  CHECK(back.has_exact());
  CHECK(back.theta_rat == d.theta_rat);
  auto fl = from_json_offspring(nlohmann::json{{"theta", {0.25, 0.0, 0.75}}});
  CHECK(fl.theta[2] == 0.75);
  auto strs = from_json_offspring(nlohmann::json{{"theta", {"1/4", "0/4", "3/4"}}, {"exact", true}});
  CHECK(strs.theta_rat[2].first == 3);
  CHECK_THROWS_AS((void)from_json_offspring(nlohmann::json{{"theta", {0.5, 0.6}}}), error);
}
