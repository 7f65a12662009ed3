// phidim: command-line front end for the phi-Assouad dimension library.
// Subcommands mirror the library modules; inputs are JSON specs (inline or
// file paths), outputs are CSV/JSON/PGM with 12-significant-digit floats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "phidim/common.hpp"
#include "phidim/cover.hpp"
#include "phidim/dimfun.hpp"
#include "phidim/gw.hpp"
#include "phidim/moran.hpp"
#include "phidim/percolation.hpp"
#include "phidim/selfsim.hpp"
#include "phidim/seqset.hpp"

namespace {

using namespace phidim;

int exit_code_for(errc k) {
  switch (k) {
    case errc::domain:
    case errc::precondition:
    case errc::construction:
    case errc::inconsistency:
      return 2;
    case errc::io:
      return 4;
    default:
      return 3;
  }
}

// inline JSON or a file path
nlohmann::json json_arg(const std::string& arg) {
  std::string text = arg;
  if (!arg.empty() && arg[0] != '{' && arg[0] != '[') {
    std::ifstream in(arg);
    if (!in) fail(errc::io, "cannot open " + arg);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail(errc::domain, std::string("bad JSON: ") + e.what());
  }
}

struct Output {
  std::string path;  // empty: stdout
  bool force = false;

  void write(const std::string& content, bool binary = false) const {
    if (path.empty()) {
      std::fwrite(content.data(), 1, content.size(), stdout);
      return;
    }
    if (!force && std::filesystem::exists(path))
      fail(errc::io, path + " exists (pass --force to overwrite)");
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) fail(errc::io, "cannot write " + path);
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) fail(errc::io, "short write to " + path);
  }
};

void add_output(CLI::App* cmd, Output& out) {
  cmd->add_option("-o,--out", out.path, "output file (default: stdout)");
  cmd->add_flag("--force", out.force, "overwrite existing output files");
}

struct GridArgs {
  double base = 2.0;
  int j_min = 4;
  int j_max = 40;
  double tail = 0.5;

  dimfun::ScaleGrid grid() const { return dimfun::ScaleGrid(base, j_min, j_max); }
};

void add_grid(CLI::App* cmd, GridArgs& g) {
  cmd->add_option("--base", g.base, "scale grid base b, scales R_j = b^-j");
  cmd->add_option("--jmin", g.j_min, "first grid index");
  cmd->add_option("--jmax", g.j_max, "last grid index");
  cmd->add_option("--tail", g.tail, "trailing fraction used for summaries");
}

gw::OffspringDist dist_from(const std::string& theta_csv, const std::string& dist_json) {
  if (!dist_json.empty()) return gw::from_json_offspring(json_arg(dist_json));
  require(!theta_csv.empty(), errc::domain, "pass --theta or --dist");
  std::vector<std::string> parts;
  std::stringstream ss(theta_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) parts.push_back(tok);
  bool rational = false;
  for (auto& p : parts)
    if (p.find('/') != std::string::npos) rational = true;
  if (rational) {
    std::vector<std::pair<uint64_t, uint64_t>> probs;
    for (auto& p : parts) {
      auto slash = p.find('/');
      require(slash != std::string::npos, errc::domain, "mixed rational/decimal theta list");
      probs.emplace_back(std::stoull(p.substr(0, slash)), std::stoull(p.substr(slash + 1)));
    }
    return gw::OffspringDist::from_rationals(std::move(probs));
  }
  std::vector<double> probs;
  for (auto& p : parts) probs.push_back(std::stod(p));
  return gw::OffspringDist::from_probs(std::move(probs));
}

std::string moran_rows_csv(const moran::ExactDim& res) {
  std::string csv = "n,m_n,value\n";
  for (const auto& r : res.rows)
    csv += std::to_string(r.n) + "," + std::to_string(r.m_n) + "," + fmt_g12(r.value) + "\n";
  return csv;
}

long threads_setting(long flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("PHIDIM_THREADS")) {
    long v = std::atol(env);
    if (v > 0) return v;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phidim: exact formulas, constructions, and covering checks for phi-Assouad dimensions"};
  app.require_subcommand(1);
  long threads_flag = 0;
  app.add_option("--threads", threads_flag,
                 "cap on internal parallelism (env PHIDIM_THREADS; reductions are deterministic, so "
                 "results do not depend on the cap)");

  std::vector<std::function<void()>> actions;
  auto on = [&](CLI::App* cmd, std::function<void()> fn) {
    cmd->callback([&actions, fn]() { actions.push_back(fn); });
  };

  // ---------------- dimfn ----------------
  auto* dimfn_cmd = app.add_subcommand("dimfn", "dimension-function algebra and validation");
  dimfn_cmd->require_subcommand(1);
  {
    static std::string phi_arg, psi_arg;
    static GridArgs grid;
    static double witness = 20.0;
    static Output out;

    auto* validate = dimfn_cmd->add_subcommand(
        "validate", "certify the two dimension-function conditions (gap exponent increasing to "
                    "a divergence witness, function nonincreasing) on a scale grid");
    validate->add_option("--phi", phi_arg, "dimension function (JSON or path)")->required();
    add_grid(validate, grid);
    validate->add_option("--witness", witness, "divergence witness threshold for phi*log(1/R)");
    on(validate, [&]() {
      auto phi = dimfun::from_json(json_arg(phi_arg));
      dimfun::ValidateOptions opt;
      opt.witness_g = witness;
      auto rep = dimfun::validate(phi, grid.grid(), opt);
      std::printf("cond_i_ok %s\ncond_ii_ok %s\nwitness_value %s\n", rep.cond_i_ok ? "true" : "false",
                  rep.cond_ii_ok ? "true" : "false", fmt_g12(rep.witness_value).c_str());
      if (rep.first_violation) std::printf("first_violation %d\n", *rep.first_violation);
    });

    auto* ratio = dimfn_cmd->add_subcommand(
        "ratio", "per-scale ratio phi/psi with tail extrema; classifies same-window, sub-window "
                 "and super-window relations numerically");
    ratio->add_option("--phi", phi_arg, "numerator function (JSON or path)")->required();
    ratio->add_option("--psi", psi_arg, "denominator function (JSON or path)")->required();
    add_grid(ratio, grid);
    add_output(ratio, out);
    on(ratio, [&]() {
      auto phi = dimfun::from_json(json_arg(phi_arg));
      auto psi = dimfun::from_json(json_arg(psi_arg));
      auto prof = dimfun::ratio_profile(phi, psi, grid.grid(), grid.tail);
      std::string csv = "scale_index,neg_log_R,ratio\n";
      for (std::size_t i = 0; i < prof.ratios.size(); ++i) {
        int j = grid.j_min + int(i);
        csv += std::to_string(j) + "," + fmt_g12(grid.grid().log_scale(j)) + "," +
               fmt_g12(prof.ratios[i]) + "\n";
      }
      out.write(csv);
      std::printf("tail_min %s\ntail_max %s\n", fmt_g12(prof.tail_min).c_str(),
                  fmt_g12(prof.tail_max).c_str());
    });

    auto* envelope = dimfn_cmd->add_subcommand(
        "envelope", "maximal dimension function below a sampled function (two-stage infimum "
                    "envelope with exact plateaus)");
    envelope->add_option("--phi", phi_arg, "function to dominate (JSON or path)")->required();
    add_grid(envelope, grid);
    add_output(envelope, out);
    on(envelope, [&]() {
      auto phi = dimfun::from_json(json_arg(phi_arg));
      std::vector<double> samples;
      for (int j = grid.j_min; j <= grid.j_max; ++j)
        samples.push_back(phi.eval_log(grid.grid().log_scale(j)));
      auto env = dimfun::maximal_dimfn_below(samples, grid.grid());
      out.write(dimfun::to_json(env).dump(2) + "\n");
    });
  }

  // ---------------- moran ----------------
  auto* moran_cmd =
      app.add_subcommand("moran", "homogeneous Moran sets: exact dimension formulas and constructions");
  moran_cmd->require_subcommand(1);
  {
    static std::string spec_arg, phi_arg, psi_arg, wit_arg, points_arg, ledger_path;
    static GridArgs grid;
    static long n_max = 2000;
    static double eps = 0.4, alpha = 0.9, resolution = 1e-9;
    static long levels = 2000;
    static int d = 1, profile_levels = 12;
    static Output out;

    auto* dim = moran_cmd->add_subcommand(
        "dim", "exact per-level values (m_n - n) d log2 / (phi(rho_n) log(1/rho_n)) and tail sup");
    dim->add_option("--spec", spec_arg, "Moran spec (JSON or path)")->required();
    dim->add_option("--phi", phi_arg, "dimension function (JSON or path)")->required();
    dim->add_option("--nmax", n_max, "deepest level evaluated");
    dim->add_option("--tail", grid.tail, "trailing fraction for the summary");
    add_output(dim, out);
    on(dim, [&]() {
      auto res = moran::exact_phi_dim(moran::from_json(json_arg(spec_arg)),
                                      dimfun::from_json(json_arg(phi_arg)), n_max, {grid.tail, 0});
      out.write(moran_rows_csv(res));
      std::printf("tail_sup %s\nargmax_n %ld\n", fmt_g12(res.tail_sup).c_str(), res.argmax_n);
    });

    auto* upper = moran_cmd->add_subcommand(
        "upper", "exact upper variant: per-level sup over deeper scales of the window exponent");
    upper->add_option("--spec", spec_arg, "Moran spec (JSON or path)")->required();
    upper->add_option("--phi", phi_arg, "dimension function (JSON or path)")->required();
    upper->add_option("--nmax", n_max, "deepest level evaluated");
    upper->add_option("--tail", grid.tail, "trailing fraction for the summary");
    add_output(upper, out);
    on(upper, [&]() {
      auto res = moran::exact_upper_phi_dim(moran::from_json(json_arg(spec_arg)),
                                            dimfun::from_json(json_arg(phi_arg)), n_max,
                                            {grid.tail, 0});
      out.write(moran_rows_csv(res));
      std::printf("tail_sup %s\nargmax_n %ld\n", fmt_g12(res.tail_sup).c_str(), res.argmax_n);
    });

    auto* gap = moran_cmd->add_subcommand(
        "build-gap", "Moran set whose covering numbers burst at the phi window but collapse at "
                     "the psi window (witness scales with phi/psi < 1-eps)");
    gap->add_option("--phi", phi_arg, "burst window (JSON or path)")->required();
    gap->add_option("--psi", psi_arg, "collapsed window (JSON or path)")->required();
    gap->add_option("--eps", eps, "window separation, phi/psi < 1-eps at witness scales");
    gap->add_option("--levels", levels, "ladder levels to build");
    gap->add_option("--d", d, "ambient dimension");
    gap->add_option("--ledger", ledger_path, "stage ledger CSV path");
    add_output(gap, out);
    on(gap, [&]() {
      auto gm = moran::build_gap_moran(dimfun::from_json(json_arg(phi_arg)),
                                       dimfun::from_json(json_arg(psi_arg)), eps, levels, d);
      out.write(moran::to_json(gm.spec).dump(2) + "\n");
      if (!ledger_path.empty()) {
        std::string csv = "stage,level,neg_log_R,block_len\n";
        for (const auto& st : gm.ledger)
          csv += std::to_string(st.stage) + "," + std::to_string(st.level) + "," +
                 fmt_g12(st.neg_log_R) + "," + std::to_string(st.block_len) + "\n";
        Output lout{ledger_path, out.force};
        lout.write(csv);
      }
      std::printf("stages %zu\nlevels %zu\n", gm.ledger.size(), gm.spec.prefix_neglog.size());
    });

    auto* prof = moran_cmd->add_subcommand(
        "build-profile", "Moran spec matching the covering-number profile of a 1-d point set "
                         "(threshold scales by bisection, sandwich within a factor 2^d)");
    prof->add_option("--points", points_arg, "JSON array of reals (inline or path)")->required();
    prof->add_option("--resolution", resolution, "trusted scale of the point set");
    prof->add_option("--levels", profile_levels, "profile levels to derive");
    add_output(prof, out);
    on(prof, [&]() {
      std::vector<double> pts;
      for (double v : json_arg(points_arg)) pts.push_back(v);
      std::sort(pts.begin(), pts.end());
      pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
      auto set = cover::PointSet1D::from_sorted(std::move(pts), resolution);
      auto spec = moran::build_profile_moran(set, profile_levels);
      out.write(moran::to_json(spec).dump(2) + "\n");
    });

    auto* recover = moran_cmd->add_subcommand(
        "recover", "smallest dimension function through witness pairs (R_n, theta_n), recovering "
                   "the Assouad value along arbitrarily close scale pairs");
    recover->add_option("--witnesses", wit_arg, "JSON [[neg_log_R, theta], ...]")->required();
    add_output(recover, out);
    on(recover, [&]() {
      std::vector<moran::Witness> ws;
      for (auto& w : json_arg(wit_arg)) ws.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
      out.write(dimfun::to_json(moran::build_assouad_recover_dimfn(ws)).dump(2) + "\n");
    });

    auto* interp = moran_cmd->add_subcommand(
        "interpolate", "dimension function realizing a target value strictly between the box and "
                       "Assouad tail values of an exact Moran ladder");
    interp->add_option("--spec", spec_arg, "Moran spec (JSON or path)")->required();
    interp->add_option("--alpha", alpha, "target dimension value")->required();
    add_grid(interp, grid);
    interp->add_option("--ledger", ledger_path, "stage ledger CSV path");
    add_output(interp, out);
    on(interp, [&]() {
      moran::ScaleLadder lad(moran::from_json(json_arg(spec_arg)));
      auto res = moran::build_interpolating_dimfn(lad, alpha, grid.grid());
      out.write(dimfun::to_json(res.phi).dump(2) + "\n");
      if (!ledger_path.empty()) {
        std::string csv = "stage,theta,neg_log_R,neg_log_R_prime\n";
        for (const auto& st : res.ledger)
          csv += std::to_string(st.stage) + "," + fmt_g12(st.theta) + "," + fmt_g12(st.neg_log_R) +
                 "," + fmt_g12(st.neg_log_R_prime) + "\n";
        Output lout{ledger_path, out.force};
        lout.write(csv);
      }
      std::printf("branch %s\nbox %s\nassouad %s\npost_check %s\n",
                  res.branch == moran::InterpolationBranch::constant_window      ? "constant"
                  : res.branch == moran::InterpolationBranch::assouad_witnesses ? "assouad"
                                                                                : "alternation",
                  fmt_g12(res.box_value).c_str(), fmt_g12(res.assouad_value).c_str(),
                  fmt_g12(res.post_check).c_str());
    });
  }

  // ---------------- gw ----------------
  auto* gw_cmd = app.add_subcommand("gw", "Galton-Watson processes: exact laws, deviations, trees");
  gw_cmd->require_subcommand(1);
  {
    static std::string theta_csv, dist_arg, phi_arg;
    static int k = 8, depth = 12, k_lo = 4, k_hi = 12;
    static double t = 1.2, s_param = 0.5, eps = 0.2, alpha = kLog2, frac = -1.0, p = 0.5,
                  lambda = 0.25;
    static long trials = 100000, n_events = 50;
    static uint64_t seed = 0;
    static bool exact = false;
    static double tail_fraction = 0.5;
    static Output out;

    auto add_dist = [&](CLI::App* cmd) {
      cmd->add_option("--theta", theta_csv,
                      "offspring probabilities theta_0,theta_1,... (decimals or a/b rationals)");
      cmd->add_option("--dist", dist_arg, "offspring law JSON {\"theta\": [...]} (inline or path)");
    };

    auto* pmf = gw_cmd->add_subcommand(
        "pmf", "exact law of the generation size Z_k by offspring-law convolution");
    add_dist(pmf);
    pmf->add_option("--k", k, "generation");
    pmf->add_flag("--exact", exact, "add big-rational numerators over the common denominator");
    add_output(pmf, out);
    on(pmf, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      auto pm = gw::z_distribution(d, k);
      std::string csv = exact ? "s,p,num,den\n" : "s,p\n";
      std::optional<gw::ExactPmf> ex;
      if (exact) ex = gw::z_distribution_exact(d, k);
      for (std::size_t s = 0; s < pm.p.size(); ++s) {
        csv += std::to_string(s) + "," + fmt_g12(pm.p[s]);
        if (exact) csv += "," + ex->num[s].to_string() + "," + ex->den.to_string();
        csv += "\n";
      }
      out.write(csv);
      std::printf("mean %s\nextinct_by_k %s\n", fmt_g12(pm.mean()).c_str(), fmt_g12(pm.p[0]).c_str());
    });

    auto* tail = gw_cmd->add_subcommand(
        "tail", "exact deviation tail P(Z_k >= m^{tk}) and its rate entry log_m(-log tail)/k");
    add_dist(tail);
    tail->add_option("--k", k, "generation");
    tail->add_option("--t", t, "deviation exponent");
    on(tail, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      double tp = gw::tail_prob(d, k, t);
      double m = d.mean();
      double rho = (tp > 0.0 && tp < 1.0 && m > 0.0)
                       ? std::log(-std::log(tp)) / std::log(m) / double(k)
                       : std::numeric_limits<double>::quiet_NaN();
      std::printf("k %d\ntail %s\nrho_k %s\n", k, fmt_g12(tp).c_str(), fmt_g12(rho).c_str());
    });

    auto* rate = gw_cmd->add_subcommand(
        "rate", "tail-rate profile against the large-deviation target (t-1)gamma/(gamma-1), "
                "gamma = log N / log m");
    add_dist(rate);
    rate->add_option("--t", t, "deviation exponent, 1 < t < gamma");
    rate->add_option("--klo", k_lo, "first generation");
    rate->add_option("--khi", k_hi, "last generation");
    add_output(rate, out);
    on(rate, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      auto prof = gw::large_dev_rate(d, t, k_lo, k_hi);
      std::string csv = "k,tail,rho\n";
      for (const auto& r : prof.rows)
        csv += std::to_string(r.k) + "," + fmt_g12(r.tail) + "," + fmt_g12(r.rho) + "\n";
      out.write(csv);
      std::printf("target %s\ntail_monotone %s\ntruncated %s\n", fmt_g12(prof.target).c_str(),
                  prof.tail_monotone_ok ? "true" : "false", prof.truncated ? "true" : "false");
    });

    auto* poly = gw_cmd->add_subcommand(
        "polybound", "decay of N^{-(s+eps)k} log f_k(exp(m^{-(1-s)k})) for the iterated "
                     "generating function of bounded degree");
    add_dist(poly);
    poly->add_option("--s", s_param, "exponent s in (0,1)");
    poly->add_option("--eps", eps, "slack eps > 0");
    poly->add_option("--klo", k_lo, "first k");
    poly->add_option("--khi", k_hi, "last k");
    add_output(poly, out);
    on(poly, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      double N = double(d.max_offspring()), m = d.mean();
      std::string csv = "k,statistic\n";
      for (int kk = k_lo; kk <= k_hi; ++kk) {
        double y0 = std::pow(m, -(1.0 - s_param) * kk);
        double stat = std::pow(N, -(s_param + eps) * kk) * gw::pgf_iterate_log(d, y0, kk);
        csv += std::to_string(kk) + "," + fmt_g12(stat) + "\n";
      }
      out.write(csv);
    });

    auto* ext = gw_cmd->add_subcommand("extinction",
                                       "least fixed point of the generating function on [0,1]");
    add_dist(ext);
    on(ext, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      std::printf("q %s\n", fmt_g12(gw::extinction_prob(d)).c_str());
      if (d.degenerate_unit()) std::printf("degenerate unit-growth law\n");
    });

    auto* samp = gw_cmd->add_subcommand(
        "sample", "seeded tree realization; offspring counts are keyed by node path, so equal "
                  "seeds give equal trees");
    add_dist(samp);
    samp->add_option("--depth", depth, "tree depth");
    samp->add_option("--seed", seed, "64-bit seed");
    add_output(samp, out);
    on(samp, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      auto tr = gw::sample_tree(d, depth, seed);
      std::string csv = "level,size\n";
      for (int kk = 0; kk <= depth; ++kk)
        csv += std::to_string(kk) + "," + std::to_string(tr.tree.level_size(kk)) + "\n";
      out.write(csv);
    });

    auto* profile = gw_cmd->add_subcommand(
        "profile", "covering profile of a sampled tree boundary at the phi-pinned scales, "
                   "centers restricted to surviving branches");
    add_dist(profile);
    profile->add_option("--depth", depth, "tree depth");
    profile->add_option("--seed", seed, "64-bit seed");
    profile->add_option("--phi", phi_arg, "dimension function (JSON or path)")->required();
    profile->add_option("--tail", tail_fraction, "trailing fraction for the summary");
    add_output(profile, out);
    on(profile, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      auto tr = gw::sample_tree(d, depth, seed);
      auto prof = gw::tree_phi_profile(tr, dimfun::from_json(json_arg(phi_arg)), tail_fraction);
      out.write(prof.to_csv(true));
    });

    auto* scan = gw_cmd->add_subcommand(
        "scan", "finite-depth scan for levels whose subtrees exceed m^{tn} descendants "
                "n = floor(log k / alpha) levels below");
    add_dist(scan);
    scan->add_option("--depth", depth, "tree depth");
    scan->add_option("--seed", seed, "64-bit seed");
    scan->add_option("--t", t, "deviation exponent");
    scan->add_option("--alpha", alpha, "window ratio alpha");
    on(scan, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      auto tr = gw::sample_tree(d, depth, seed);
      auto sc = gw::bc_event_scan(tr, d, t, alpha);
      std::printf("hits");
      for (int kk : sc.hit_levels) std::printf(" %d", kk);
      std::printf("\nskipped %zu\n", sc.skipped_levels.size());
    });

    auto* mcs = gw_cmd->add_subcommand(
        "mc-surviving", "Monte Carlo for the surviving-offspring deviation event: Z_k >= m^{tk} "
                        "with a fraction of independent subtrees surviving");
    add_dist(mcs);
    mcs->add_option("--k", k, "generation");
    mcs->add_option("--t", t, "deviation exponent");
    mcs->add_option("--frac", frac, "survivor fraction threshold (default (1-q)/2)");
    mcs->add_option("--trials", trials, "Monte Carlo trials");
    mcs->add_option("--seed", seed, "64-bit seed");
    on(mcs, [&]() {
      auto d = dist_from(theta_csv, dist_arg);
      double q = gw::extinction_prob(d);
      double f = frac > 0.0 ? frac : (1.0 - q) / 2.0;
      auto est = gw::surviving_tail_mc(d, k, t, f, trials, seed);
      double tp = gw::tail_prob(d, k, t);
      std::printf("estimate %s\nstderr %s\ntail %s\nq %s\n", fmt_g12(est.p_hat).c_str(),
                  fmt_g12(est.stderr_).c_str(), fmt_g12(tp).c_str(), fmt_g12(q).c_str());
    });

    auto* mcb = gw_cmd->add_subcommand(
        "mc-boundlow", "Monte Carlo for the correlation-free lower bound: at least lambda*n of n "
                       "events of probability p occur with frequency >= (p-lambda)/(1-lambda)");
    mcb->add_option("--p", p, "event probability");
    mcb->add_option("--lambda", lambda, "required fraction");
    mcb->add_option("--n", n_events, "event count");
    mcb->add_option("--trials", trials, "Monte Carlo trials");
    mcb->add_option("--seed", seed, "64-bit seed");
    on(mcb, [&]() {
      auto est = gw::bound_low_check(p, lambda, n_events, trials, seed);
      std::printf("frequency %s\nstderr %s\nbound %s\n", fmt_g12(est.p_hat).c_str(),
                  fmt_g12(est.stderr_).c_str(), fmt_g12((p - lambda) / (1.0 - lambda)).c_str());
    });
  }

  // ---------------- perc ----------------
  auto* perc_cmd = app.add_subcommand("perc", "Mandelbrot percolation of the unit cube");
  perc_cmd->require_subcommand(1);
  {
    static std::string spec_arg, phi_arg;
    static int n = 2, d = 2, depth = 8, level = -1, pixel_scale = 4, condition = 0;
    static double p = 0.65, alpha = 0.0, tail_fraction = 0.5;
    static uint64_t seed = 0;
    static Output out;

    auto add_spec = [&](CLI::App* cmd) {
      cmd->add_option("--spec", spec_arg, "percolation spec JSON (inline or path)");
      cmd->add_option("--n", n, "subdivision per axis");
      cmd->add_option("--d", d, "ambient dimension");
      cmd->add_option("--p", p, "retention probability");
      cmd->add_option("--condition", condition, "retain everything through this depth");
    };
    auto get_spec = [&]() {
      if (!spec_arg.empty()) return perc::from_json_perc(json_arg(spec_arg));
      perc::PercSpec s{n, d, p, condition};
      s.validate();
      return s;
    };

    auto* samp = perc_cmd->add_subcommand(
        "sample", "seeded retention hierarchy; cell decisions are keyed by cell path, coupling "
                  "conditioned and unconditioned runs");
    add_spec(samp);
    samp->add_option("--depth", depth, "subdivision depth");
    samp->add_option("--seed", seed, "64-bit seed");
    add_output(samp, out);
    on(samp, [&]() {
      auto s = perc::sample(get_spec(), depth, seed);
      std::string csv = "level,cells\n";
      for (int kk = 0; kk <= s.depth; ++kk)
        csv += std::to_string(kk) + "," + std::to_string(s.levels[std::size_t(kk)].size()) + "\n";
      out.write(csv);
      std::printf("extinct %s\n", s.extinct() ? "true" : "false");
    });

    auto* render = perc_cmd->add_subcommand(
        "render", "binary PGM raster of the retained cells at one level (d = 2 only)");
    add_spec(render);
    render->add_option("--depth", depth, "subdivision depth");
    render->add_option("--seed", seed, "64-bit seed");
    render->add_option("--level", level, "rendered level (default: depth)");
    render->add_option("--scale", pixel_scale, "pixels per cell side");
    add_output(render, out);
    on(render, [&]() {
      require(!out.path.empty(), errc::io, "render needs --out (binary PGM)");
      auto s = perc::sample(get_spec(), depth, seed);
      out.write(perc::render(s, level < 0 ? depth : level, pixel_scale), true);
    });

    auto* formula = perc_cmd->add_subcommand(
        "formula", "closed-form dimension alpha log(1/p)/(d log^2 n) + log(p n^d)/log n, clipped "
                   "to d past alpha = log n^d");
    add_spec(formula);
    formula->add_option("--alpha", alpha, "window ratio alpha");
    on(formula, [&]() {
      std::printf("%s\n", fmt_g12(perc::perc_dim_formula(get_spec(), alpha)).c_str());
    });

    auto* profile = perc_cmd->add_subcommand(
        "profile", "covering profile of a sampled percolation set at the phi-pinned base-n scales");
    add_spec(profile);
    profile->add_option("--depth", depth, "subdivision depth");
    profile->add_option("--seed", seed, "64-bit seed");
    profile->add_option("--phi", phi_arg, "dimension function (JSON or path)")->required();
    profile->add_option("--tail", tail_fraction, "trailing fraction for the summary");
    add_output(profile, out);
    on(profile, [&]() {
      auto s = perc::sample(get_spec(), depth, seed);
      auto prof = perc::perc_phi_profile(s, dimfun::from_json(json_arg(phi_arg)), tail_fraction);
      out.write(prof.to_csv(true));
    });
  }

  // ---------------- selfsim ----------------
  auto* ss_cmd = app.add_subcommand("selfsim", "overlapping self-similar sets on the line");
  ss_cmd->require_subcommand(1);
  {
    static int m = 3, K = 8, level = 8, t_depth = 10, k_index = 2, depth = 12, n_max = 12;
    static double c_w = 1.0;
    static Output out;

    auto* nk = ss_cmd->add_subcommand(
        "nk", "exact block-length ledger: minimal n_{k+1} with m^n in [m/r_k, m^2/r_k] and "
              "r_{k+1} = (1+1/m^2) r_k m^{-N_k}");
    nk->add_option("--m", m, "contraction denominator, m >= 3");
    nk->add_option("--K", K, "ledger length");
    add_output(nk, out);
    on(nk, [&]() {
      auto tp = selfsim::build_nk_sequence(m, K);
      std::string csv = "k,n_k,N_k,r_num,r_den,neg_log_r\n";
      for (std::size_t i = 0; i < tp.n_k.size(); ++i)
        csv += std::to_string(i + 1) + "," + std::to_string(tp.n_k[i]) + "," +
               std::to_string(tp.N_k[i]) + "," + tp.r_k[i].num.to_string() + "," +
               tp.r_k[i].den.to_string() + "," + fmt_g12(-tp.r_k[i].log_value()) + "\n";
      out.write(csv);
    });

    auto* pts = ss_cmd->add_subcommand(
        "points", "distinct cylinder endpoints S_sigma(0) with word multiplicities, exact over "
                  "m^{level+tdepth}");
    pts->add_option("--m", m, "contraction denominator");
    pts->add_option("--K", K, "ledger length for t");
    pts->add_option("--level", level, "cylinder level");
    pts->add_option("--tdepth", t_depth, "extra digits of t kept");
    add_output(pts, out);
    on(pts, [&]() {
      auto tp = selfsim::build_nk_sequence(m, K);
      selfsim::IFSSpec1D spec;
      spec.m = m;
      auto cyl = selfsim::cylinder_points(spec, tp, level, t_depth);
      std::string csv = "num,den_exp,count\n";
      for (std::size_t i = 0; i < cyl.num.size(); ++i)
        csv += std::to_string(cyl.num[i]) + "," + std::to_string(cyl.denom_exp) + "," +
               std::to_string(cyl.count[i]) + "\n";
      out.write(csv);
      std::printf("distinct %zu\nwords %llu\n", cyl.distinct(), (unsigned long long)cyl.words());
    });

    auto* mt = ss_cmd->add_subcommand(
        "mtilde", "sliding-window overlap counts: max words within (1 + c_w diam) m^{-n} of a "
                  "cylinder endpoint, per level");
    mt->add_option("--m", m, "contraction denominator");
    mt->add_option("--K", K, "ledger length for t");
    mt->add_option("--nmax", n_max, "deepest level");
    mt->add_option("--tdepth", t_depth, "extra digits of t kept");
    mt->add_option("--cw", c_w, "window constant");
    add_output(mt, out);
    on(mt, [&]() {
      auto tp = selfsim::build_nk_sequence(m, K);
      selfsim::IFSSpec1D spec;
      spec.m = m;
      std::string csv = "n,mtilde\n";
      for (int nn = 1; nn <= n_max; ++nn) {
        auto cyl = selfsim::cylinder_points(spec, tp, nn, t_depth);
        csv += std::to_string(nn) + "," + std::to_string(selfsim::m_tilde(cyl, c_w).value) + "\n";
      }
      out.write(csv);
      std::printf("window_constant %s\n", fmt_g12(c_w).c_str());
    });

    auto* thr =
        ss_cmd->add_subcommand("threshold", "the window threshold constant log m / log(1 + 1/m^2)");
    thr->add_option("--m", m, "contraction denominator");
    on(thr, [&]() { std::printf("%s\n", fmt_g12(selfsim::threshold_constant(m)).c_str()); });

    auto* micro = ss_cmd->add_subcommand(
        "microset", "finite-depth density certificate for the k-th ledger microset");
    micro->add_option("--m", m, "contraction denominator");
    micro->add_option("--K", K, "ledger length");
    micro->add_option("--k", k_index, "microset index");
    micro->add_option("--depth", depth, "cylinder level used");
    micro->add_option("--tdepth", t_depth, "extra digits of t kept");
    on(micro, [&]() {
      auto tp = selfsim::build_nk_sequence(m, K);
      auto res = selfsim::microset_density_check(tp, k_index, depth, t_depth);
      std::printf("eps_claimed %s\nmeasured_gap %s\nresolution %s\npoints %zu\n",
                  fmt_g12(res.eps_claimed).c_str(), fmt_g12(res.measured_gap).c_str(),
                  fmt_g12(res.resolution).c_str(), res.points_used);
    });
  }

  // ---------------- seq ----------------
  auto* seq_cmd = app.add_subcommand("seq", "decreasing sequences with decreasing gaps");
  seq_cmd->require_subcommand(1);
  {
    static std::string spec_arg, phi_arg;
    static double x_lo = 10.0, x_hi = 1e6;
    static long n_max = 1000;
    static GridArgs grid{2.0, 7, 26, 0.5};
    static Output out;

    auto* val = seq_cmd->add_subcommand(
        "validate", "certify the regular-gaps conditions and the gap-to-derivative ratio");
    val->add_option("--spec", spec_arg, "sequence spec JSON (inline or path)")->required();
    val->add_option("--xlo", x_lo, "range start");
    val->add_option("--xhi", x_hi, "range end");
    on(val, [&]() {
      auto rep =
          seqset::validate_regular_gaps(seqset::from_json_seq(json_arg(spec_arg)), x_lo, x_hi);
      std::printf("f_decreasing %s\nfprime_increasing %s\nratio_to_one %s\nfinal_ratio %s\n"
                  "final_gap_ratio %s\nx_hi_effective %s\n",
                  rep.f_decreasing_to_zero ? "true" : "false",
                  rep.fprime_increasing_to_zero ? "true" : "false",
                  rep.fprime_ratio_increasing_to_one ? "true" : "false",
                  fmt_g12(rep.final_ratio).c_str(), fmt_g12(rep.final_gap_ratio).c_str(),
                  fmt_g12(rep.x_hi_effective).c_str());
    });

    auto* pts = seq_cmd->add_subcommand("points", "the set {f(n)} plus the accumulation point 0");
    pts->add_option("--spec", spec_arg, "sequence spec JSON (inline or path)")->required();
    pts->add_option("--nmax", n_max, "deepest index");
    add_output(pts, out);
    on(pts, [&]() {
      auto sp = seqset::build_points(seqset::from_json_seq(json_arg(spec_arg)), n_max);
      std::string csv = "x\n";
      for (double v : sp.points.points) csv += fmt_g12(v) + "\n";
      out.write(csv);
      if (sp.underflow_capped) std::printf("underflow_capped true\n");
    });

    auto* formula = seq_cmd->add_subcommand(
        "formula", "closed-form window values through the derivative inverse, with the "
                   "gap-versus-scale branch classifier");
    formula->add_option("--spec", spec_arg, "sequence spec JSON (inline or path)")->required();
    formula->add_option("--phi", phi_arg, "dimension function (JSON or path)")->required();
    add_grid(formula, grid);
    add_output(formula, out);
    on(formula, [&]() {
      auto res = seqset::seq_dim_formula(seqset::from_json_seq(json_arg(spec_arg)),
                                         dimfun::from_json(json_arg(phi_arg)), grid.grid());
      std::string csv = "R,x_star,count_est,value\n";
      for (const auto& r : res.rows)
        csv += fmt_g12(r.R) + "," + fmt_g12(r.x_star) + "," + fmt_g12(r.count_est) + "," +
               fmt_g12(r.value) + "\n";
      out.write(csv);
      std::printf("dimension_one %s\ntail_sup %s\n", res.dimension_one ? "true" : "false",
                  fmt_g12(res.tail_sup).c_str());
    });

    auto* profile = seq_cmd->add_subcommand(
        "profile", "direct covering profile with windows anchored at the accumulation point, "
                   "plus the full-center consistency sweep");
    profile->add_option("--spec", spec_arg, "sequence spec JSON (inline or path)")->required();
    profile->add_option("--phi", phi_arg, "dimension function (JSON or path)")->required();
    profile->add_option("--nmax", n_max, "points used");
    add_grid(profile, grid);
    add_output(profile, out);
    on(profile, [&]() {
      auto sp = seqset::build_points(seqset::from_json_seq(json_arg(spec_arg)), n_max);
      auto prof =
          seqset::seq_direct_profile(sp.points, dimfun::from_json(json_arg(phi_arg)), grid.grid());
      out.write(prof.anchored.to_csv(true));
      std::printf("sweep_tail_sup %s\n", fmt_g12(prof.sweep.tail_sup).c_str());
    });
  }

  try {
    app.parse(argc, argv);
    (void)threads_setting(threads_flag);
    for (auto& fn : actions) fn();
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
