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
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bandit_music/history.hpp"
#include "json.hpp"

namespace bandit_music {

// Piecewise-linear rating model
//   r | x, t, theta, beta, tau ~ N((theta' x)(beta' t), 1/tau)
//   theta | tau ~ N(mu_theta0, D0 / tau),  beta | tau ~ N(mu_beta0, E0 / tau)
//   tau ~ Gamma(a0, b0)   (shape / rate)
struct ApproxPriors {
  Eigen::MatrixXd d0;
  Eigen::MatrixXd e0;
  Eigen::VectorXd mu_theta0;
  Eigen::VectorXd mu_beta0;
  double a0 = 2.0;
  double b0 = 2e-8;

  // D0 = d0_scale * I, E0 = e0_scale * I, zero means.
  static ApproxPriors isotropic(int p, int basis_size, double d0_scale = 1e-2,
                                double e0_scale = 1e-2, double a0 = 2.0,
                                double b0 = 2e-8);
  int p() const { return static_cast<int>(mu_theta0.size()); }
  int basis_size() const { return static_cast<int>(mu_beta0.size()); }
  void validate() const;
};

// Training data in matrix form: row i of `x` and `basis` belong to rating r(i).
struct FactorData {
  Eigen::MatrixXd x;
  Eigen::MatrixXd basis;
  Eigen::VectorXd r;

  static FactorData from_history(std::span<const HistoryRecord> data, int p,
                                 int basis_size);
  Eigen::Index n() const { return r.size(); }
};

// Natural parameters of q(theta) q(beta) q(tau).
struct VariationalState {
  Eigen::MatrixXd lambda_theta;
  Eigen::VectorXd eta_theta;
  Eigen::MatrixXd lambda_beta;
  Eigen::VectorXd eta_beta;
  double a_n = 0.0;
  double b_n = 0.0;
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;

  nlohmann::json to_json() const;
  static VariationalState from_json(const nlohmann::json& j);
};

struct Moments {
  Eigen::VectorXd theta_mean;
  Eigen::MatrixXd theta_second;  // E[theta theta']
  Eigen::VectorXd beta_mean;
  Eigen::MatrixXd beta_second;
  double tau_mean = 0.0;
};

Moments moments(const VariationalState& state);

struct ViOptions {
  double tol = 1e-6;  // relative lower-bound change
  int max_iter = 200;
  // Allowed decrease of the bound between sweeps before reporting a bug.
  double monotonic_slack = 1e-8;
};

// Coordinate ascent over q(theta), q(beta), q(tau) until the lower bound
// settles. elbo_trace holds the bound after every sweep.
VariationalState vi_fit(const FactorData& data, const ApproxPriors& priors,
                        const ViOptions& options = {});
VariationalState vi_fit(std::span<const HistoryRecord> data,
                        const ApproxPriors& priors, const ViOptions& options = {});

// Variational lower bound of `state` on `data`.
double elbo(const VariationalState& state, const FactorData& data,
            const ApproxPriors& priors);

// Monte Carlo approximation of p(U | x, t, D) as the elementwise product of
// independent draws of theta'x and beta't.
class PredictiveDistribution {
 public:
  explicit PredictiveDistribution(Eigen::VectorXd samples);

  const Eigen::VectorXd& samples() const { return samples_; }
  double mean() const { return mean_; }
  double sd() const { return sd_; }
  double quantile(double alpha) const;

 private:
  Eigen::VectorXd samples_;
  double mean_ = 0.0;
  double sd_ = 0.0;
};

// Gaussian marginals of the two linear factors for one song.
struct FactorMarginals {
  double content_mean = 0.0;
  double content_var = 0.0;
  double novelty_mean = 0.0;
  double novelty_var = 0.0;

  double product_mean() const { return content_mean * novelty_mean; }
  // Variance of the product of two independent normals.
  double product_var() const;
};

FactorMarginals factor_marginals(const VariationalState& state,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& basis);

// Evaluates factor_marginals for many songs under one state, factorizing the
// posterior precisions once.
class MarginalEvaluator {
 public:
  explicit MarginalEvaluator(const VariationalState& state);
  FactorMarginals operator()(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& basis) const;

 private:
  Eigen::LLT<Eigen::MatrixXd> theta_llt_;
  Eigen::LLT<Eigen::MatrixXd> beta_llt_;
  Eigen::VectorXd theta_mean_;
  Eigen::VectorXd beta_mean_;
};

// n_samples draws of a * b with a, b independent normals given by `m`.
PredictiveDistribution sample_product(const FactorMarginals& m, int n_samples,
                                      std::uint64_t seed);

PredictiveDistribution predict_u(const VariationalState& state,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& basis, int n_samples,
                                 std::uint64_t seed);

// Three-factor extension: r ~ N((theta'x)(beta't)(gamma'd), 1/tau) with
// gamma | tau ~ N(mu_gamma0, F0 / tau).
struct ThreeFactorPriors {
  ApproxPriors base;
  Eigen::MatrixXd f0;
  Eigen::VectorXd mu_gamma0;
};

struct ThreeFactorData {
  FactorData base;
  Eigen::MatrixXd d;
};

struct ThreeFactorState {
  VariationalState base;  // theta, beta, tau and the bound trace
  Eigen::MatrixXd lambda_gamma;
  Eigen::VectorXd eta_gamma;

  Eigen::VectorXd gamma_mean() const;
};

ThreeFactorState vi_fit_three_factor(const ThreeFactorData& data,
                                     const ThreeFactorPriors& priors,
                                     const ViOptions& options = {});

}  // namespace bandit_music
