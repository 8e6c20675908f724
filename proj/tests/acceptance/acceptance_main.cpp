// Copyright 2026 The Bandit Music Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "bandit_music/approx_bayes.hpp"
#include "bandit_music/exact_bayes.hpp"
#include "bandit_music/experiment.hpp"
#include "bandit_music/novelty.hpp"
#include "bandit_music/simulation.hpp"
#include "bandit_music/stats.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bandit_music;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// Shared by criteria 1 and 2.
struct ViSuite {
  std::vector<fixtures::Instance> instances;
  std::vector<VariationalState> states;
  double seconds = 0.0;
};

const ViSuite& vi_suite() {
  static const ViSuite suite = [] {
    ViSuite s;
    ViOptions o;
    o.monotonic_slack = std::numeric_limits<double>::infinity();
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      s.instances.push_back(fixtures::random_instance(seed, 5, 4, 50));
      s.states.push_back(vi_fit(s.instances.back().data, s.instances.back().priors, o));
    }
    s.seconds = seconds_since(t0);
    return s;
  }();
  return suite;
}

Outcome criterion1() {
  const auto& s = vi_suite();
  double worst = 0.0;
  int sweeps = 0;
  for (const auto& st : s.states) {
    sweeps += static_cast<int>(st.elbo_trace.size());
    for (std::size_t i = 1; i < st.elbo_trace.size(); ++i) {
      worst = std::max(worst, st.elbo_trace[i - 1] - st.elbo_trace[i]);
    }
  }
  return {worst <= 1e-8 && s.seconds < 30.0,
          "100 instances, " + std::to_string(sweeps) + " sweeps, largest decrease " +
              fmt(worst) + ", " + fmt(s.seconds) + " s"};
}

Outcome criterion2() {
  const auto& s = vi_suite();
  double worst = 0.0;
  for (std::size_t i = 0; i < s.states.size(); ++i) {
    const auto& in = s.instances[i];
    const double want =
        (in.priors.p() + in.priors.basis_size() + static_cast<double>(in.data.n())) / 2.0 +
        in.priors.a0;
    worst = std::max(worst, std::abs(s.states[i].a_n - want) / want);
  }
  return {worst <= 4 * std::numeric_limits<double>::epsilon(),
          "largest relative error " + fmt(worst)};
}

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto vi_priors = fixtures::scalar_priors();
  const ExactPriors exact;
  bool pass = true;
  double vi_worst = 0.0, mcmc_worst_z = 0.0;
  std::string worst_at;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = fixtures::scalar_instance(seed);
    const auto grid = oracles::approx_posterior_grid(
        inst.x, inst.basis, inst.r, vi_priors.d0(0, 0), vi_priors.e0(0, 0),
        vi_priors.mu_theta0(0), vi_priors.mu_beta0(0), vi_priors.a0, vi_priors.b0,
        {-8.0, 8.0, 801}, {-1.0, 3.0, 801});
    const auto m = moments(vi_fit(inst.data(), vi_priors));
    const double dv = std::max(std::abs(m.theta_mean(0) - grid.mean_a),
                               std::abs(m.beta_mean(0) - grid.mean_b));
    vi_worst = std::max(vi_worst, dv);
    pass = pass && dv < 0.05 && grid.edge_mass < 1e-6;

    const auto eg = oracles::exact_posterior_grid(inst.x, inst.t, inst.r, exact,
                                                  {-10.0, 10.0, 801}, {0.5, 3000.0, 1200});
    McmcConfig cfg;
    cfg.iters = 41000;
    cfg.burn_in = 1000;
    cfg.seed = seed;
    const auto chain = mcmc_infer(inst.history(), 1, exact, cfg);
    const std::vector<double> th(chain.theta.data(), chain.theta.data() + chain.size());
    const std::vector<double> sv(chain.s.data(), chain.s.data() + chain.size());
    const auto et = oracles::batch_means(th), es = oracles::batch_means(sv);
    const double zt = std::abs(et.mean - eg.mean_a) / et.se;
    const double zs = std::abs(es.mean - eg.mean_b) / es.se;
    const double z = std::max(zt, zs);
    if (z > mcmc_worst_z) {
      mcmc_worst_z = z;
      worst_at = " (instance " + std::to_string(seed) + ", " + (zt > zs ? "theta" : "s") + ")";
    }
    pass = pass && z < 2.0 && eg.edge_mass < 1e-3;
  }
  const double secs = seconds_since(t0);
  return {pass && secs < 120.0, "variational largest |error| " + fmt(vi_worst) +
                                    ", MCMC largest |z| " + fmt(mcmc_worst_z) + worst_at + ", " +
                                    fmt(secs) + " s"};
}

Outcome criterion4() {
  boost::random::mt19937_64 rng(404);
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_real_distribution<double> log_t(0.0, std::log(43200.0));
  const int p = 3, n = 50;
  const double s = 350.0;
  const Eigen::Vector3d theta(0.9, -0.4, 1.3);
  History h;
  Eigen::MatrixXd z(n, p);
  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) {
    HistoryRecord rec;
    rec.x = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
    rec.t_raw = std::exp(log_t(rng));
    rec.rating = theta.dot(rec.x) * novelty(rec.t_raw, s) + 0.5 * normal(rng);
    z.row(i) = rec.x.transpose() * novelty(rec.t_raw, s);
    r(i) = rec.rating;
    h.push_back(rec);
  }
  const ExactPriors pr;
  McmcConfig cfg;
  cfg.iters = 21000;
  cfg.burn_in = 1000;
  cfg.seed = 4;
  cfg.fixed_s = s;
  const auto chain = mcmc_infer(h, p, pr, cfg);
  const Eigen::VectorXd want = oracles::conjugate_theta_mean(z, r, pr.a0);
  double worst = 0.0;
  for (int j = 0; j < p; ++j) {
    const std::vector<double> col(chain.theta.col(j).data(),
                                  chain.theta.col(j).data() + chain.size());
    const auto e = oracles::batch_means(col);
    worst = std::max(worst, std::abs(e.mean - want(j)) / e.se);
  }
  return {worst < 2.0, "largest |z| over " + std::to_string(p) + " coordinates " + fmt(worst)};
}

// Desk-scale run shared by criteria 5, 6 and 9.
struct DeskRun {
  ExperimentConfig config;
  ExperimentResult result;
  double seconds = 0.0;
};

const DeskRun& desk_run() {
  static const DeskRun run = [] {
    DeskRun d;
    d.config = desk_scale_config();
    d.config.episode.uncertainty_every = 50;
    const auto t0 = std::chrono::steady_clock::now();
    const Catalog cat = build_catalog(d.config.catalog);
    d.result = run_experiment(d.config, cat);
    d.seconds = seconds_since(t0);
    return d;
  }();
  return run;
}

Outcome criterion5() {
  const auto& d = desk_run();
  const auto a = compare_final_regret(d.result, "random", "linucb_c");
  const auto b = compare_final_regret(d.result, "greedy_cn", "bayes_ucb_cn_v");
  std::string detail;
  for (const char* name : {"random", "linucb_c", "greedy_cn", "bayes_ucb_cn_v"}) {
    detail += std::string(name) + " " + fmt(sample_mean(d.result.final_regret(name))) + ", ";
  }
  detail += "p(random > linucb_c) " + fmt(a.p_value) + ", p(greedy_cn > bayes_ucb_cn_v) " +
            fmt(b.p_value) + ", " + fmt(d.seconds) + " s";
  return {a.p_value < 0.05 && b.p_value < 0.05 && d.seconds < 900.0, detail};
}

Outcome criterion6() {
  const auto& d = desk_run();
  auto mean_zipf = [&](const char* name) {
    double slope = 0.0, r2 = 0.0;
    const auto& traces = d.result.traces.at(name);
    for (const auto& t : traces) {
      const auto z = zipf_analysis(t);
      slope += z.slope / traces.size();
      r2 += z.r_squared / traces.size();
    }
    return std::pair{slope, r2};
  };
  const auto [bs, br] = mean_zipf("bayes_ucb_cn_v");
  const auto [gs, gr] = mean_zipf("greedy_cn");
  const auto [rs, rr] = mean_zipf("random");
  const bool pass = bs < -0.5 && br >= 0.8 && gs < -0.5 && gr >= 0.8 && std::abs(rs) < 0.2;
  return {pass, "mean slope / R^2: bayes_ucb_cn_v " + fmt(bs) + " / " + fmt(br) +
                    ", greedy_cn " + fmt(gs) + " / " + fmt(gr) + ", random " + fmt(rs) +
                    " / " + fmt(rr)};
}

Outcome criterion7() {
  boost::random::mt19937_64 rng(7);
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_real_distribution<double> log_t(0.0, std::log(43200.0));
  const int n = 1000, p = 91, dd = 5;
  const auto knots = NoveltyKnots::doubling_ladder();
  const int k = knots.basis_size();
  Eigen::VectorXd theta(p);
  for (int j = 0; j < p; ++j) theta(j) = normal(rng);
  FactorData data{Eigen::MatrixXd(n, p), Eigen::MatrixXd(n, k), Eigen::VectorXd(n)};
  Eigen::MatrixXd d(n, dd);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) data.x(i, j) = normal(rng);
    const double t = std::exp(log_t(rng));
    data.basis.row(i) = time_basis(t, knots).transpose();
    data.r(i) = theta.dot(data.x.row(i)) * novelty(t, 300.0) + 0.5 * normal(rng);
    for (int j = 0; j < dd; ++j) d(i, j) = 1.0 + 0.1 * normal(rng);
  }
  const auto priors = ApproxPriors::isotropic(p, k);

  auto t0 = std::chrono::steady_clock::now();
  const auto st = vi_fit(data, priors);
  const double full = seconds_since(t0);

  ViOptions fixed;
  fixed.tol = 0.0;
  fixed.max_iter = 20;
  fixed.monotonic_slack = std::numeric_limits<double>::infinity();
  t0 = std::chrono::steady_clock::now();
  vi_fit(data, priors, fixed);
  const double two = seconds_since(t0);
  ThreeFactorPriors tp{priors, 1e-2 * Eigen::MatrixXd::Identity(dd, dd),
                       Eigen::VectorXd::Ones(dd)};
  t0 = std::chrono::steady_clock::now();
  vi_fit_three_factor({data, d}, tp, fixed);
  const double three = seconds_since(t0);
  const double ratio = three / two;
  return {full <= 2.0 && ratio <= 1.5,
          "two-factor fit " + fmt(full) + " s in " + std::to_string(st.iterations) +
              " sweeps (" + (st.converged ? "converged" : "sweep limit") + "), 20 sweeps: two-factor " + fmt(two) + " s, three-factor " +
              fmt(three) + " s, ratio " + fmt(ratio)};
}

Outcome criterion8() {
  const auto knots = NoveltyKnots::doubling_ladder();
  const auto grid = log_grid(1e-3, 4096.0, 4000);
  double worst = 0.0;
  std::string detail;
  for (double s : {100.0, 300.0, 1000.0}) {
    const Eigen::VectorXd beta = fit_piecewise(s, knots, grid);
    double err = 0.0;
    for (int i = 0; i <= 204800; ++i) {
      const double t = 2048.0 * i / 204800.0;
      err = std::max(err, std::abs(evaluate_piecewise(beta, t, knots) - novelty(t, s)));
    }
    worst = std::max(worst, err);
    detail += "s=" + fmt(s) + " max error " + fmt(err) + ", ";
  }
  detail.resize(detail.size() - 2);
  return {worst <= 0.05, detail};
}

Outcome criterion9() {
  const auto& d = desk_run();
  auto mean_at_50 = [&](const char* name) {
    double total = 0.0;
    const auto& traces = d.result.traces.at(name);
    for (const auto& t : traces) total += t.records.at(49).uncertainty;
    return total / traces.size();
  };
  const double b = mean_at_50("bayes_ucb_cn_v");
  const double g = mean_at_50("greedy_cn");
  return {std::isfinite(b) && std::isfinite(g) && b < g,
          "mean uncertainty at n=50: bayes_ucb_cn_v " + fmt(b) + ", greedy_cn " + fmt(g)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"1 bound monotonicity", criterion1},
      {"2 a_N exactness", criterion2},
      {"3 oracle agreement", criterion3},
      {"4 conjugate block", criterion4},
      {"5 regret ordering", criterion5},
      {"6 Zipf rank-frequency", criterion6},
      {"7 efficiency", criterion7},
      {"8 piecewise novelty", criterion8},
      {"9 uncertainty decay", criterion9},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %s: %s (%s)\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
