#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "phidim/moran.hpp"

using namespace phidim;
using namespace phidim::moran;
using dimfun::constant;
using dimfun::loglog_ratio;
using dimfun::scale;
using dimfun::ScaleGrid;

namespace {

MoranSpec half_spec(int d) {
  return MoranSpec::from_ratios(d, {0.5}, PeriodicRule{{kLog2}});
}

MoranSpec alternating_spec(int d) {
  return MoranSpec::from_ratios(d, {}, PeriodicRule{{kLog2, 2 * kLog2}});
}

MoranSpec growing_blocks_spec() {
  BlocksRule b;
  b.neglog_ratios = {kLog2, 2 * kLog2};
  b.initial_len = 1;
  b.growth = 2.0;
  return MoranSpec::from_ratios(1, {}, b);
}

}  // namespace

TEST_CASE("exact_phi_dim on the full cube ladder") {
  for (double c : {1.0, 0.5}) {
    auto res = exact_phi_dim(half_spec(1), constant(c), 1000);
    CHECK(res.tail_sup <= 1.0 + 1e-9);
    CHECK(res.tail_sup >= 1.0 - 1.0 / 1000.0 - 1e-9);
    // every row is quantized below 1
    for (const auto& r : res.rows) CHECK(r.value <= 1.0 + 1e-9);
  }
  // d = 2 with the loglog window: slow upward convergence toward 2
  auto res = exact_phi_dim(half_spec(2), loglog_ratio(), 10000);
  CHECK(res.tail_sup <= 2.0 + 1e-12);
  CHECK(res.tail_sup >= 1.8);
}

TEST_CASE("exact_upper_phi_dim equals d on eventually constant ladders") {
  for (int d : {1, 2}) {
    auto up = exact_upper_phi_dim(half_spec(d), constant(1.0), 2000);
    for (const auto& r : up.rows) CHECK(r.value == doctest::Approx(double(d)).epsilon(1e-11));
    auto plain = exact_phi_dim(half_spec(d), constant(1.0), 2000);
    CHECK(std::abs(up.tail_sup - plain.tail_sup) <= 1.5 * double(d) / 2000.0);
    CHECK(up.tail_sup >= plain.tail_sup - 1e-12);
  }
  // loglog window on the same ladder
  auto up = exact_upper_phi_dim(half_spec(1), loglog_ratio(), 2000);
  for (const auto& r : up.rows) CHECK(r.value == doctest::Approx(1.0).epsilon(1e-11));
}

TEST_CASE("exact dims on the alternating ladder") {
  // ratios 1/2, 1/4 alternate: window slopes settle at 2/3
  auto up = exact_upper_phi_dim(alternating_spec(1), constant(1.0), 4000);
  CHECK(up.tail_sup == doctest::Approx(2.0 / 3.0).epsilon(5e-3));
  auto box = [&] {
    ScaleLadder lad(alternating_spec(1));
    return exact_box_dim(lad, 4000);
  }();
  CHECK(box.tail_sup == doctest::Approx(2.0 / 3.0).epsilon(5e-3));
}

TEST_CASE("materialize and count_cells cross-check") {
  // d=1, depth 3, ratios (1/2, 1/3, 1/2): 8 intervals of length 1/12
  auto spec = MoranSpec::from_ratios(1, {0.5, 1.0 / 3.0, 0.5});
  auto g = materialize(spec, 3);
  CHECK(g.levels[3].size() == 8);
  CHECK(g.level_log_scale[3] == doctest::Approx(std::log(12.0)).epsilon(1e-12));

  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 6; ++trial) {
    int d = 1 + int(gen() % 2);
    int depth = d == 1 ? 8 + int(gen() % 6) : 4 + int(gen() % 3);
    std::vector<double> ratios;
    for (int i = 0; i < depth; ++i) ratios.push_back(0.2 + 0.3 * double(gen() % 1000) / 1000.0);
    auto sp = MoranSpec::from_ratios(d, ratios);
    auto gs = materialize(sp, depth);
    for (int n = 0; n < depth; ++n) {
      for (int m = n; m <= depth; ++m) {
        uint64_t anchor = gen() % (uint64_t(1) << (n * d));
        CHECK(cover::count_cells(gs, n, anchor, m) == long(1) << (d * (m - n)));
      }
    }
  }
}

TEST_CASE("box_profile of the middle-half Cantor materialization") {
  auto spec = MoranSpec::from_ratios(1, {0.25}, PeriodicRule{{2 * kLog2}});
  auto g = materialize(spec, 10);
  auto prof = cover::box_profile(g, ScaleGrid(2.0, 2, 19));
  CHECK(std::abs(prof.tail_sup - 0.5) <= 0.05);
}

TEST_CASE("build_gap_moran separates the two windows") {
  auto phi = scale(loglog_ratio(), 2.0);
  auto psi = loglog_ratio();
  auto gm = build_gap_moran(phi, psi, 0.4, 2000);
  CHECK(gm.ledger.size() >= 5);
  ScaleLadder lad(gm.spec);
  auto dphi = exact_phi_dim(lad, phi, 2000);
  auto dpsi = exact_phi_dim(lad, psi, 2000);
  CHECK(dphi.tail_sup <= 1.0 + 1e-12);
  CHECK(dphi.tail_sup >= 0.97);
  CHECK(dpsi.tail_sup <= 0.65);

  // constant pair: dim under phi is 1, under psi at most the ratio bound
  auto gm2 = build_gap_moran(constant(0.5), constant(1.5), 0.4, 1500);
  ScaleLadder lad2(gm2.spec);
  CHECK(exact_phi_dim(lad2, constant(0.5), 1500).tail_sup >= 0.97);
  CHECK(exact_phi_dim(lad2, constant(1.5), 1500).tail_sup <= 2.0 / 3.0 + 0.05);

  // no witness scales when phi == psi
  CHECK_THROWS_AS((void)build_gap_moran(psi, psi, 0.4, 100), error);
}

TEST_CASE("upper dominates the pinned dimension on gap ladders") {
  auto phi = scale(loglog_ratio(), 2.0);
  auto gm = build_gap_moran(phi, loglog_ratio(), 0.4, 80);
  ScaleLadder lad(gm.spec);
  long n_max = 80;
  auto plain = exact_phi_dim(lad, phi, n_max);
  auto up = exact_upper_phi_dim(lad, phi, n_max);
  REQUIRE(plain.rows.size() == up.rows.size());
  for (std::size_t i = 0; i < plain.rows.size(); ++i)
    CHECK(up.rows[i].value >= plain.rows[i].value - 1e-12);
  // strict domination at burst levels: the sup hits the halving slope exactly
  int strict = 0;
  for (const auto& st : gm.ledger) {
    for (std::size_t i = 0; i < plain.rows.size(); ++i) {
      if (plain.rows[i].n == st.level && plain.rows[i].value < 1.0 - 1e-9) {
        CHECK(up.rows[i].value == doctest::Approx(1.0).epsilon(1e-9));
        ++strict;
      }
    }
  }
  CHECK(strict >= 3);
}

TEST_CASE("build_profile_moran from covering profiles") {
  // the unit interval: thresholds sit at 1/(2(2^{n+1}-1)), so the ratios
  // rise to 1/2 from below and never exceed it
  std::vector<double> v;
  for (int i = 0; i <= 4096; ++i) v.push_back(double(i) / 4096);
  auto interval = cover::PointSet1D::from_sorted(std::move(v), 1.0 / 4096);
  auto spec = build_profile_moran(interval, 8);
  REQUIRE(spec.prefix_neglog.size() >= 6);
  for (std::size_t i = 0; i < spec.prefix_neglog.size(); ++i) {
    double r = std::exp(-spec.prefix_neglog[i]);
    CHECK(r <= 0.5 + 1e-9);
    if (i >= 5) continue;  // deep thresholds feel the finite point spacing
    double expect = i == 0 ? 1.0 / 6.0
                           : (std::pow(2.0, double(i) + 1.0) - 1.0) / (std::pow(2.0, double(i) + 2.0) - 1.0);
    CHECK(r == doctest::Approx(expect).epsilon(1e-3));
  }

  // middle-half Cantor: ratios settle at 1/4 and the covering numbers of
  // set and Moran model sandwich within a factor 2^d
  auto cantor_spec = MoranSpec::from_ratios(1, {0.25}, PeriodicRule{{2 * kLog2}});
  ScaleLadder cl(cantor_spec);
  auto cantor_pts = materialize_points(cl, 9);
  auto prof_spec = build_profile_moran(cantor_pts, 7);
  REQUIRE(prof_spec.prefix_neglog.size() >= 5);
  for (std::size_t i = 1; i < prof_spec.prefix_neglog.size(); ++i)
    CHECK(std::exp(-prof_spec.prefix_neglog[i]) == doctest::Approx(0.25).epsilon(0.08));
  ScaleLadder pl(prof_spec);
  auto model_pts = materialize_points(pl, int(prof_spec.prefix_neglog.size()));
  double a = cantor_pts.points.front(), b = cantor_pts.points.back();
  for (int k = 0; k < 10; ++k) {
    double r = 0.3 * std::pow(0.55, k);
    if (r < std::max(cantor_pts.resolution, model_pts.resolution)) break;
    long nf = cover::count_cover_1d(cantor_pts, a, b, r);
    long nm = cover::count_cover_1d(model_pts, model_pts.points.front(), model_pts.points.back(), r);
    CHECK(nm >= (nf + 1) / 2);
    CHECK(nm <= 2 * nf);
  }

  // a single point never reaches 2^(2d) balls
  auto one = cover::PointSet1D::from_sorted({0.25}, 1e-9);
  CHECK_THROWS_AS((void)build_profile_moran(one, 4), error);
}

TEST_CASE("build_assouad_recover_dimfn hits the witnesses") {
  std::vector<Witness> w;
  for (int n = 1; n <= 8; ++n) w.push_back({double(n) * n, 1.0 / double(n)});
  auto phi = build_assouad_recover_dimfn(w);
  for (int n = 1; n <= 8; ++n)
    CHECK(phi.eval_log(double(n) * n) == doctest::Approx(1.0 / double(n)).epsilon(1e-12));
  // validates as a dimension function on a grid through the witness range
  dimfun::ValidateOptions vo;
  vo.witness_g = 7.5;  // g reaches theta_8 * 64 = 8 on this grid
  auto rep = dimfun::validate(phi, ScaleGrid(std::exp(1.0), 1, 64), vo);
  CHECK(rep.cond_i_ok);
  CHECK(rep.cond_ii_ok);

  // single witness: constant beyond R_1
  auto c = build_assouad_recover_dimfn({{4.0, 0.25}});
  CHECK(c.eval_log(16.0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(c.eval_log(2.0) == doctest::Approx(0.25).epsilon(1e-12));

  // non-monotone witnesses are rejected
  CHECK_THROWS_AS((void)build_assouad_recover_dimfn({{4.0, 0.5}, {9.0, 0.6}}), error);
  CHECK_THROWS_AS((void)build_assouad_recover_dimfn({{4.0, 0.5}, {3.0, 0.4}}), error);
}

namespace {

// bursts of 1/2-blocks of length ~sqrt(L) separated by closing drops with
// geometric L growth: blocks grow without bound but vanish relative to L,
// so every constant-window value collapses to the box dimension
MoranSpec sqrt_burst_spec(double L_cap = 2e6) {
  std::vector<double> nl;
  double L = 8.0;
  while (L < L_cap) {
    long block = std::max<long>(1, std::lround(std::sqrt(L) / kLog2));
    for (long i = 0; i < block; ++i) nl.push_back(kLog2);
    double L_next = 1.3 * L;
    double closing = L_next - (L + double(block) * kLog2);
    if (closing < kLog2) {
      L_next = L + double(block) * kLog2 + kLog2;
      closing = kLog2;
    }
    nl.push_back(closing);
    L = L_next;
  }
  MoranSpec s;
  s.d = 1;
  s.prefix_neglog = std::move(nl);
  return s;
}

}  // namespace

TEST_CASE("build_interpolating_dimfn: constant branch on block ladders") {
  // the 2^n-blocks ladder reaches 0.9 inside its constant-window range
  auto spec = growing_blocks_spec();
  ScaleLadder lad(spec);
  ScaleGrid grid(2.0, 4, 1400);
  auto res = build_interpolating_dimfn(lad, 0.9, grid);
  CHECK(res.branch == InterpolationBranch::constant_window);
  CHECK(std::abs(res.post_check - 0.9) <= 0.1);
  CHECK(res.box_value == doctest::Approx(0.75).epsilon(0.07));
  CHECK(res.assouad_value >= 0.95);

  // out-of-range targets
  ScaleLadder lad2(spec);
  CHECK_THROWS_AS((void)build_interpolating_dimfn(lad2, 0.5, grid), error);
  ScaleLadder lad3(spec);
  CHECK_THROWS_AS((void)build_interpolating_dimfn(lad3, 1.2, grid), error);

  // boundary target: delegate to the witness recovery of the top value
  ScaleLadder lad4(spec);
  auto top = build_interpolating_dimfn(lad4, res.assouad_value, grid);
  CHECK(top.branch == InterpolationBranch::assouad_witnesses);
  CHECK(top.post_check >= res.assouad_value - 0.15);
}

TEST_CASE("build_interpolating_dimfn: alternation on burst ladders") {
  auto spec = sqrt_burst_spec(2e5);
  ScaleLadder lad(spec);
  long levels = lad.depth();
  REQUIRE(levels > 1000);
  ScaleGrid grid(std::exp(2.0), 2, int(0.4 * lad.L(levels)));  // L steps of 2
  auto res = build_interpolating_dimfn(lad, 0.9, grid);
  CHECK(res.branch == InterpolationBranch::alternation);
  CHECK(std::abs(res.post_check - 0.9) <= 0.1);
  CHECK(res.box_value <= 0.1);
  CHECK(res.assouad_value >= 0.95);
  CHECK(res.ledger.size() >= 2);
  // theta increases along the ledger
  for (std::size_t i = 1; i < res.ledger.size(); ++i)
    CHECK(res.ledger[i].theta > res.ledger[i - 1].theta);
  // the emitted function is a dimension function on the working range
  dimfun::ValidateOptions vo;
  vo.witness_g = 1.0;
  auto rep = dimfun::validate(res.phi, ScaleGrid(2.0, 8, 1000), vo);
  CHECK(rep.cond_i_ok);
  CHECK(rep.cond_ii_ok);
}

TEST_CASE("window-bounds chain: gamma -> dim(phi/gamma)/gamma is nonincreasing") {
  auto phi = loglog_ratio();
  std::vector<MoranSpec> oracles{half_spec(1), alternating_spec(1), growing_blocks_spec(),
                                 MoranSpec::from_ratios(1, {0.25}, PeriodicRule{{2 * kLog2}})};
  for (auto& spec : oracles) {
    ScaleLadder lad(spec);
    double prev = std::numeric_limits<double>::infinity();
    for (double gamma : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      auto res = exact_phi_dim(lad, scale(phi, gamma), 4000);
      double v = res.tail_sup / gamma;
      CHECK(v <= prev + 0.05);
      prev = v;
    }
  }
}

TEST_CASE("moran spec JSON round trip") {
  auto spec = MoranSpec::from_ratios(2, {0.5, 0.25, 0.5}, PeriodicRule{{kLog2}});
  auto j = to_json(spec);
  auto back = from_json(j);
  CHECK(back.d == 2);
  REQUIRE(back.prefix_neglog.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(back.prefix_neglog[i] == doctest::Approx(spec.prefix_neglog[i]).epsilon(1e-12));
  CHECK(std::holds_alternative<PeriodicRule>(back.rule));

  // gap spec with astronomically small scales round-trips through neglog
  auto gm = build_gap_moran(scale(loglog_ratio(), 2.0), loglog_ratio(), 0.4, 400);
  auto j2 = to_json(gm.spec);
  CHECK(j2.contains("prefix_neglog"));
  auto back2 = from_json(j2);
  CHECK(back2.prefix_neglog.size() == gm.spec.prefix_neglog.size());

  CHECK_THROWS_AS((void)from_json(nlohmann::json{{"d", 1}}), error);
}
