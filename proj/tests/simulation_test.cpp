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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bandit_music/errors.hpp"
#include "bandit_music/experiment.hpp"
#include "bandit_music/simulation.hpp"
#include "doctest.h"

using namespace bandit_music;

namespace {

Catalog make_catalog(const std::vector<std::vector<double>>& rows) {
  std::vector<SongFeatures> songs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SongFeatures s;
    s.song_id = "s" + std::to_string(i);
    s.raw = Eigen::Map<const Eigen::VectorXd>(rows[i].data(),
                                              static_cast<Eigen::Index>(rows[i].size()));
    s.reduced = s.raw;
    songs.push_back(std::move(s));
  }
  return Catalog(std::move(songs));
}

EpisodeTrace trace_of(const std::vector<int>& songs) {
  EpisodeTrace t;
  for (std::size_t i = 0; i < songs.size(); ++i) {
    TraceRecord r;
    r.step = i + 1;
    r.song_id = "s" + std::to_string(songs[i]);
    t.records.push_back(r);
  }
  return t;
}

}  // namespace

TEST_CASE("sampled users") {
  Rng rng(7);
  const int p = 4;
  double total = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto u = sample_user(rng, p, 0.5);
    CHECK(u.s_star >= 100.0);
    CHECK(u.s_star <= 1000.0);
    CHECK(u.theta_star.size() == p);
    total += u.theta_star.sum();
  }
  CHECK(std::abs(total / (10000.0 * p)) < 3.0 / std::sqrt(10000.0 * p));
  Rng a(3), b(3);
  const auto ua = sample_user(a, 5, 0.5), ub = sample_user(b, 5, 0.5);
  CHECK(ua.theta_star == ub.theta_star);
  CHECK(ua.s_star == ub.s_star);
}

TEST_CASE("true expected rating") {
  SimulatedUser u{Eigen::VectorXd::Constant(1, 2.0), 300.0, 0.5};
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.5);
  CHECK(true_expected_rating(u, x, 0.0) == 0.0);
  CHECK(std::abs(true_expected_rating(u, x, 1e9) - 3.0) < 1e-9);
  CHECK(true_expected_rating(u, x, 300.0) == doctest::Approx(1.8963616765).epsilon(1e-9));
}

TEST_CASE("rating draws") {
  SimulatedUser u{Eigen::Vector2d(1.0, -0.5), 200.0, 0.0};
  const Eigen::Vector2d x(0.4, 1.2);
  Rng rng(1);
  const double mean = true_expected_rating(u, x, 150.0);
  CHECK(draw_rating(u, x, 150.0, rng) == mean);
  u.sigma_r = 0.5;
  const int n = 100000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = draw_rating(u, x, 150.0, rng);
    s += r;
    ss += r * r;
  }
  const double m = s / n;
  const double var = (ss - n * m * m) / (n - 1);
  CHECK(std::abs(m - mean) < 3.0 * 0.5 / std::sqrt(n));
  CHECK(std::abs(var - 0.25) < 0.05 * 0.25);
}

TEST_CASE("session clock") {
  const SessionClock c;
  CHECK(c.time_of(1) == 0.0);
  CHECK(c.time_of(2) == doctest::Approx(50.0 / 60.0));
  CHECK(c.time_of(20) == doctest::Approx(19 * 50.0 / 60.0));
  CHECK(c.time_of(21) == doctest::Approx(20 * 50.0 / 60.0 + 4.0));
  CHECK(c.time_of(41) == doctest::Approx(40 * 50.0 / 60.0 + 8.0));
}

TEST_CASE("oracle policy has zero regret") {
  const Catalog cat = Catalog::synthetic(30, 3, 4);
  Rng rng(9);
  const auto user = sample_user(rng, 3, 0.5);
  std::vector<std::optional<double>> last(cat.size());
  auto t_of = [&](std::size_t k, double now) {
    return last[k] ? now - *last[k] : kNeverPlayedMinutes;
  };
  const auto trace = run_episode_with(
      user, cat, 60, 5,
      [&](double now) {
        std::size_t best = 0;
        double bu = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cat.size(); ++k) {
          const double u = true_expected_rating(user, cat[k].reduced, t_of(k, now));
          if (u > bu) bu = u, best = k;
        }
        return best;
      },
      [&](std::size_t k, double, double now) { last[k] = now; });
  CHECK(trace.records.size() == 60);
  for (double r : regret(trace)) CHECK(r == 0.0);
}

TEST_CASE("repeating a song records the clock step") {
  const Catalog cat = make_catalog({{1.0}, {2.0}});
  SimulatedUser user{Eigen::VectorXd::Ones(1), 300.0, 0.5};
  const auto trace = run_episode_with(
      user, cat, 3, 1, [](double) { return std::size_t{1}; },
      [](std::size_t, double, double) {});
  CHECK(trace.records[0].t_raw == kNeverPlayedMinutes);
  CHECK(trace.records[1].t_raw == doctest::Approx(50.0 / 60.0));
  CHECK(trace.records[2].t_raw == doctest::Approx(50.0 / 60.0));
}

TEST_CASE("regret curves") {
  EpisodeTrace t;
  TraceRecord r;
  r.best_u = 1.0;
  r.true_u = 0.7;
  t.records.push_back(r);
  const auto one = regret(t);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == doctest::Approx(0.3));

  // Two songs with frozen novelty: uniform choice costs gap / 2 per step.
  const Catalog cat = make_catalog({{1.0}, {0.7}});
  SimulatedUser user{Eigen::VectorXd::Ones(1), 1e-3, 0.5};
  const auto tr = run_episode(PolicyKind::kRandom, user, cat, 10000, 3, PolicyConfig{});
  const auto curve = regret(tr);
  CHECK(std::abs(curve.back() / 10000.0 - 0.15) < 0.05 * 0.15);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] >= curve[i - 1]);
}

TEST_CASE("uncertainty metric") {
  CHECK(uncertainty_metric(std::vector<double>{0.0, 0.0, 0.0}) == 0.0);
  CHECK(uncertainty_metric(std::vector<double>{0.2, 0.4}) == doctest::Approx(0.3));
  CHECK(uncertainty_metric(std::vector<double>{0.6, 1.2}) == doctest::Approx(3.0 * 0.3));
  CHECK_THROWS_AS(uncertainty_metric(std::vector<double>{}), ValidationError);
}

TEST_CASE("zipf analysis") {
  const auto flat = zipf_analysis(trace_of({0, 1, 2, 3, 4, 5}));
  CHECK(std::abs(flat.slope) < 1e-9);
  CHECK_FALSE(flat.degenerate);

  const auto single = zipf_analysis(trace_of({3, 3, 3, 3}));
  CHECK(single.degenerate);
  CHECK(single.slope == 0.0);
  REQUIRE(single.frequency.size() == 1);
  CHECK(single.frequency[0] == 4.0);

  std::vector<double> counts;
  for (int rank = 20; rank >= 1; --rank) counts.push_back(100.0 / rank);
  const auto power = zipf_from_counts(counts);
  CHECK(std::abs(power.slope + 1.0) < 0.01);
  CHECK(power.r_squared > 0.999);
  CHECK(power.frequency.front() == 100.0);

  const std::vector<EpisodeTrace> two{trace_of({0, 0, 1}), trace_of({0, 2})};
  const auto pooled = zipf_pooled(two);
  CHECK(pooled.frequency == std::vector<double>{3.0, 1.0, 1.0});
}

TEST_CASE("episodes are reproducible and regret is monotone") {
  const Catalog cat = Catalog::synthetic(40, 3, 5);
  const auto user = user_for_seed(2, 3, 0.5);
  PolicyConfig cfg;
  cfg.mcmc.iters = 300;
  cfg.mcmc.burn_in = 100;
  for (PolicyKind kind : all_policy_kinds()) {
    const auto a = run_episode(kind, user, cat, 25, 2, cfg);
    const auto b = run_episode(kind, user, cat, 25, 2, cfg);
    REQUIRE(a.records.size() == 25);
    for (std::size_t i = 0; i < 25; ++i) {
      CHECK(a.records[i].song_index == b.records[i].song_index);
      CHECK(a.records[i].rating == b.records[i].rating);
    }
    const auto curve = regret(a);
    CHECK(curve.front() >= 0.0);
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] >= curve[i - 1]);
  }
}

TEST_CASE("uncertainty of the variational policy falls on average") {
  const Catalog cat = Catalog::synthetic(200, 10, 7);
  EpisodeOptions opts;
  opts.uncertainty_every = 10;
  const int n = 100, seeds = 10;
  std::vector<double> mean(n / 10, 0.0);
  for (int seed = 1; seed <= seeds; ++seed) {
    const auto user = user_for_seed(seed, 10, 0.5);
    const auto tr = run_episode(PolicyKind::kBayesUcbCnV, user, cat, n, seed, PolicyConfig{}, opts);
    for (int c = 0; c < n / 10; ++c) mean[c] += tr.records[10 * c + 9].uncertainty / seeds;
    CHECK(std::isnan(tr.records[0].uncertainty));
  }
  for (std::size_t c = 1; c < mean.size(); ++c) CHECK(mean[c] <= mean[c - 1]);
}

TEST_CASE("experiment config parsing") {
  const auto j = nlohmann::json::parse(R"({
    "catalog": {"synthetic": {"songs": 30, "p": 4, "seed": 3}},
    "policies": ["random", "greedy_cn"],
    "n": 12, "seeds": [1, 2], "sigma_r": 0.25, "threads": 1,
    "priors": {"approx": {"d0": 0.5, "e0": 0.25, "a0": 3, "b0": 1}},
    "uncertainty_every": 4
  })");
  const auto cfg = ExperimentConfig::from_json(j);
  CHECK(cfg.catalog.songs == 30);
  CHECK(cfg.policies.size() == 2);
  CHECK(cfg.n == 12);
  CHECK(cfg.sigma_r == 0.25);
  CHECK(cfg.episode.uncertainty_every == 4);
  const Catalog cat = build_catalog(cfg.catalog);
  CHECK(cat.size() == 30);
  const auto pc = resolve_policy_config(cfg, cat);
  CHECK(pc.approx.d0.isApprox(0.5 * Eigen::MatrixXd::Identity(4, 4)));
  CHECK(pc.approx.e0.rows() == pc.knots.basis_size());
  CHECK(pc.approx.a0 == 3.0);

  const auto back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.n == cfg.n);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.policies == cfg.policies);

  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"policies", {"nope"}}}),
                  ValidationError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"n", "many"}}), ParseError);
}

TEST_CASE("experiment runs write their outputs") {
  auto cfg = ExperimentConfig::from_json(nlohmann::json::parse(R"({
    "catalog": {"synthetic": {"songs": 20, "p": 3, "seed": 3}},
    "policies": ["random", "linucb_c"], "n": 15, "seeds": [1, 2, 3], "threads": 2
  })"));
  const Catalog cat = build_catalog(cfg.catalog);
  const auto res = run_experiment(cfg, cat);
  CHECK(res.traces.at("random").size() == 3);
  CHECK(res.final_regret("linucb_c").size() == 3);
  // Same users for every policy.
  CHECK(res.traces.at("random")[1].records[0].best_u ==
        res.traces.at("linucb_c")[1].records[0].best_u);

  const auto dir = std::filesystem::temp_directory_path() / "bandit_music_sim_test";
  std::filesystem::remove_all(dir);
  write_outputs(dir, cfg, res);
  CHECK(std::filesystem::exists(dir / "runs" / "random_seed2.csv"));
  CHECK(std::filesystem::exists(dir / "aggregate.csv"));
  std::ifstream run(dir / "runs" / "linucb_c_seed1.csv");
  std::string header;
  std::getline(run, header);
  CHECK(header == "step,song,rating,regret,t_raw,true_u,best_u,uncertainty");
  int lines = 0;
  for (std::string line; std::getline(run, line);) ++lines;
  CHECK(lines == 15);
  std::ifstream sj(dir / "summary.json");
  const auto summary = nlohmann::json::parse(sj);
  CHECK(summary.contains("paired_tests"));
  CHECK(summary["policies"]["random"]["final_regret"].size() == 3);
  std::filesystem::remove_all(dir);
}
