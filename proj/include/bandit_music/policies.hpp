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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bandit_music/approx_bayes.hpp"
#include "bandit_music/catalog.hpp"
#include "bandit_music/exact_bayes.hpp"
#include "bandit_music/history.hpp"
#include "bandit_music/novelty.hpp"
#include "json.hpp"

namespace bandit_music {

enum class PolicyKind {
  kRandom,
  kGreedyCn,
  kLinUcbC,
  kLinUcbCn,
  kBayesUcbCn,
  kBayesUcbCnV,
};

std::string_view to_string(PolicyKind kind);
// Throws ValidationError for names outside the six kinds.
PolicyKind parse_policy_kind(std::string_view name);
const std::vector<PolicyKind>& all_policy_kinds();

// Quantile level used when choosing the l-th recommendation: 1 - 1/(l+1).
double quantile_level(std::size_t l);

struct GreedyOptions {
  std::vector<double> start_s = {100.0, 300.0, 1000.0};
  int max_iterations = 500;
};

struct GreedyFit {
  Eigen::VectorXd theta;
  double s = 300.0;
  double objective = 0.0;
  // Set when no start reached the optimizer's convergence test.
  bool warning = false;
  // Objective after each optimizer iteration of the winning start.
  std::vector<double> cost_trace;
};

// Least-squares fit of r = theta' x (1 - exp(-t/s)) over theta and log s.
GreedyFit greedy_fit(std::span<const HistoryRecord> history, int p,
                     const GreedyOptions& options = {});

struct PolicyConfig {
  NoveltyKnots knots = NoveltyKnots::doubling_ladder();
  // Zero-sized matrices select the isotropic defaults for the catalog's p.
  ApproxPriors approx;
  ExactPriors exact;
  // 1000 kept draws per refit.
  McmcConfig mcmc = [] {
    McmcConfig m;
    m.iters = 1500;
    m.burn_in = 500;
    return m;
  }();
  ViOptions vi;
  int predictive_samples = 1000;
  double linucb_lambda = 1.0;
  double linucb_alpha = 1.0;
  GreedyOptions greedy;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static PolicyConfig from_json(const nlohmann::json& j);
};

struct SelectionReport {
  std::size_t chosen = 0;
  std::string chosen_id;
  double alpha = 0.5;
  // Quantile for Bayes-UCB, upper bound for LinUCB, point estimate for Greedy.
  std::vector<double> score;
  // Predictive mean and sd of U per song; empty for policies without one.
  std::vector<double> mean;
  std::vector<double> sd;

  nlohmann::json to_json(const Catalog& catalog) const;
};

struct SongPosterior {
  double mean = 0.0;
  double sd = 0.0;
  double quantile = 0.0;
};

// One user's recommendation state: history, last play times and the fitted
// model of one of the six policies. Not thread-safe.
class Policy {
 public:
  Policy(PolicyKind kind, const Catalog& catalog, PolicyConfig config);

  PolicyKind kind() const { return kind_; }
  const PolicyConfig& config() const { return config_; }
  const Catalog& catalog() const { return *catalog_; }
  const History& history() const { return history_; }
  // Recommendations rated so far.
  std::size_t step() const { return history_.size(); }
  const std::vector<std::optional<double>>& last_played() const {
    return last_played_;
  }

  // Minutes since song k was last played, or one month if never.
  double elapsed(std::size_t k, double now) const;

  SelectionReport select(double now) const;

  // Appends the rating of song_id recommended at `now` and refits.
  void record_feedback(const std::string& song_id, double rating, double now);

  // Predictive summary of U for every song at `now`, quantile at the level of
  // the next selection. Policies without a posterior of their own report a
  // variational fit of their history.
  std::vector<SongPosterior> posterior(double now) const;
  // Mean predictive sd over the catalog.
  double uncertainty(double now) const;

  const std::optional<VariationalState>& vi_state() const { return vi_; }
  const std::optional<PosteriorSamples>& mcmc_samples() const { return mcmc_; }
  const std::optional<GreedyFit>& greedy_state() const { return greedy_; }
  const Eigen::MatrixXd& linucb_a() const { return lin_a_; }
  const Eigen::VectorXd& linucb_b() const { return lin_b_; }

  // History, last play times and the variational state; other models are
  // refit from the history on restore.
  nlohmann::json snapshot() const;
  static Policy restore(const nlohmann::json& j, const Catalog& catalog);

 private:
  void append(HistoryRecord rec);
  void refit();
  Eigen::VectorXd linucb_features(std::size_t k, double t) const;
  const VariationalState& variational_view() const;
  std::vector<SongPosterior> sampled_summary(double now, std::size_t l,
                                             bool want_quantile) const;

  PolicyKind kind_;
  const Catalog* catalog_;
  PolicyConfig config_;
  History history_;
  std::vector<std::optional<double>> last_played_;

  std::optional<VariationalState> vi_;
  std::optional<PosteriorSamples> mcmc_;
  std::optional<GreedyFit> greedy_;
  Eigen::MatrixXd lin_a_;
  Eigen::VectorXd lin_b_;
  mutable std::optional<VariationalState> shadow_;
};

}  // namespace bandit_music
