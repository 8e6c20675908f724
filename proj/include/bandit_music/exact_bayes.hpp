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

#include <cstdint>
#include <optional>
#include <span>

#include <Eigen/Dense>

#include "bandit_music/history.hpp"
#include "json.hpp"

namespace bandit_music {

// Exact rating model
//   r | x, t, theta, s, tau ~ N(theta' x (1 - exp(-t/s)), 1/tau)
//   theta | tau ~ N(0, (a0/tau) I),  s ~ Gamma(b0, c0),  tau ~ Gamma(f0, h0)
// Gammas are shape/rate.
struct ExactPriors {
  double a0 = 10.0;
  double b0 = 3.0;
  double c0 = 1e-2;
  double f0 = 1e-3;
  double h0 = 1e-3;

  void validate() const;
};

struct McmcConfig {
  int iters = 3000;
  int burn_in = 1000;
  int thin = 1;
  std::uint64_t seed = 1;
  // Initial random-walk scale on log s; adapted during burn-in.
  double log_s_step = 0.5;
  // Pins s (point-mass prior) when set.
  std::optional<double> fixed_s;
  // Pins tau when set; theta then draws from a fixed conditional.
  std::optional<double> fixed_tau;
};

struct ChainDiagnostics {
  double s_acceptance = 0.0;      // over kept iterations
  double burn_in_acceptance = 0.0;
  double final_log_s_step = 0.0;
  int kept = 0;

  nlohmann::json to_json() const;
};

struct PosteriorSamples {
  Eigen::MatrixXd theta;  // M x p, one draw per row
  Eigen::VectorXd s;
  Eigen::VectorXd tau;
  ChainDiagnostics diagnostics;

  int size() const { return static_cast<int>(s.size()); }
  // Means and standard deviations of every parameter, for reports.
  nlohmann::json summary_json() const;
};

// Log joint density log p(theta, s, tau) + sum_i log N(r_i | mean_i, 1/tau).
// Returns -infinity outside the support (s <= 0 or tau <= 0).
double log_unnorm_posterior(const Eigen::VectorXd& theta, double s, double tau,
                            std::span<const HistoryRecord> data,
                            const ExactPriors& priors);

// Metropolis-within-Gibbs: theta and tau from their conjugate conditionals,
// log s by adaptive random-walk Metropolis.
PosteriorSamples mcmc_infer(std::span<const HistoryRecord> data, int p,
                            const ExactPriors& priors, const McmcConfig& config);

// U = theta' x (1 - exp(-t/s)) for every posterior draw.
Eigen::VectorXd posterior_u_samples(const PosteriorSamples& samples,
                                    const Eigen::VectorXd& x, double t_raw);

}  // namespace bandit_music
