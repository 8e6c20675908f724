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

// Seeded problem instances shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "bandit_music/approx_bayes.hpp"
#include "bandit_music/history.hpp"

namespace fixtures {

struct Instance {
  bandit_music::FactorData data;
  bandit_music::ApproxPriors priors;
};

// Random two-factor problem with p <= max_p, basis length <= max_k, N <= max_n.
// Priors are random SPD matrices and means so every code path is exercised.
inline Instance random_instance(std::uint64_t seed, int max_p = 5, int max_k = 4,
                                int max_n = 50) {
  boost::random::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_real_distribution<double> unif(0.0, 1.0);
  const int p = boost::random::uniform_int_distribution<int>(1, max_p)(rng);
  const int k = boost::random::uniform_int_distribution<int>(1, max_k)(rng);
  const int n = boost::random::uniform_int_distribution<int>(0, max_n)(rng);

  auto spd = [&](int d) {
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
    return Eigen::MatrixXd(a * a.transpose() / d +
                           (0.05 + unif(rng)) * Eigen::MatrixXd::Identity(d, d));
  };
  auto vec = [&](int d, double scale) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = scale * normal(rng);
    return v;
  };

  Instance in;
  in.priors.d0 = spd(p);
  in.priors.e0 = spd(k);
  in.priors.mu_theta0 = vec(p, 0.5);
  in.priors.mu_beta0 = vec(k, 0.5);
  in.priors.a0 = 0.5 + 3.0 * unif(rng);
  in.priors.b0 = 0.1 + 2.0 * unif(rng);

  const Eigen::VectorXd theta = vec(p, 1.0);
  const Eigen::VectorXd beta = vec(k, 1.0);
  in.data.x.resize(n, p);
  in.data.basis.resize(n, k);
  in.data.r.resize(n);
  for (int i = 0; i < n; ++i) {
    in.data.x.row(i) = vec(p, 1.0).transpose();
    in.data.basis.row(i) = vec(k, 1.0).cwiseAbs().transpose();
    in.data.r(i) = in.data.x.row(i).dot(theta) * in.data.basis.row(i).dot(beta) +
                   0.3 * normal(rng);
  }
  return in;
}

// One-dimensional instance shared by the exact and approximate oracles:
// x ~ N(0, 1), t log-uniform on [1, 43200] minutes, basis b = 1 - exp(-t/300),
// r = theta x (1 - exp(-t/s)) + noise.
struct ScalarInstance {
  std::vector<double> x, t, basis, r;

  bandit_music::FactorData data() const {
    bandit_music::FactorData d;
    const auto n = static_cast<Eigen::Index>(r.size());
    d.x = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, 1);
    d.basis = Eigen::Map<const Eigen::MatrixXd>(basis.data(), n, 1);
    d.r = Eigen::Map<const Eigen::VectorXd>(r.data(), n);
    return d;
  }
  bandit_music::History history() const {
    bandit_music::History h;
    for (std::size_t i = 0; i < r.size(); ++i) {
      bandit_music::HistoryRecord rec;
      rec.x = Eigen::VectorXd::Constant(1, x[i]);
      rec.t_raw = t[i];
      rec.basis = Eigen::VectorXd::Constant(1, basis[i]);
      rec.rating = r[i];
      h.push_back(rec);
    }
    return h;
  }
};

inline ScalarInstance scalar_instance(std::uint64_t seed, int n = 20, double theta = 1.5,
                                      double s = 300.0, double noise_sd = 0.5) {
  boost::random::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_real_distribution<double> log_t(0.0, std::log(43200.0));
  ScalarInstance out;
  for (int i = 0; i < n; ++i) {
    const double x = normal(rng);
    const double t = std::exp(log_t(rng));
    out.x.push_back(x);
    out.t.push_back(t);
    out.basis.push_back(1.0 - std::exp(-t / 300.0));
    out.r.push_back(theta * x * (1.0 - std::exp(-t / s)) + noise_sd * normal(rng));
  }
  return out;
}

// Priors for the one-dimensional approximate oracle. The informative beta
// prior removes the (theta, beta) -> (-theta, -beta) symmetry of the product.
inline bandit_music::ApproxPriors scalar_priors() {
  bandit_music::ApproxPriors pr;
  pr.d0 = Eigen::MatrixXd::Constant(1, 1, 10.0);
  pr.e0 = Eigen::MatrixXd::Constant(1, 1, 0.05);
  pr.mu_theta0 = Eigen::VectorXd::Zero(1);
  pr.mu_beta0 = Eigen::VectorXd::Ones(1);
  return pr;
}

}  // namespace fixtures
