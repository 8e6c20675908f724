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

#include "bandit_music/exact_bayes.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "bandit_music/errors.hpp"
#include "bandit_music/random.hpp"

namespace bandit_music {
namespace {

struct Design {
  Eigen::MatrixXd x;  // N x p
  Eigen::VectorXd t;
  Eigen::VectorXd r;
};

Design pack(std::span<const HistoryRecord> data, int p) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Design d{Eigen::MatrixXd(n, p), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = data[static_cast<std::size_t>(i)];
    if (rec.x.size() != p) {
      throw ValidationError("mcmc: record " + std::to_string(i) +
                            " has feature dimension " +
                            std::to_string(rec.x.size()) + ", expected " +
                            std::to_string(p));
    }
    if (!std::isfinite(rec.rating)) {
      throw ValidationError("mcmc: record " + std::to_string(i) +
                            " has a non-finite rating");
    }
    if (!(rec.t_raw >= 0.0)) {
      throw ValidationError("mcmc: record " + std::to_string(i) +
                            " has negative elapsed time");
    }
    d.x.row(i) = rec.x.transpose();
    d.t(i) = rec.t_raw;
    d.r(i) = rec.rating;
  }
  return d;
}

Eigen::VectorXd novelty_vector(const Eigen::VectorXd& t, double s) {
  return (-(-t.array() / s).expm1()).matrix();
}

double sum_squared_residuals(const Design& d, const Eigen::VectorXd& theta,
                             double s) {
  if (d.r.size() == 0) return 0.0;
  Eigen::VectorXd pred = (d.x * theta).cwiseProduct(novelty_vector(d.t, s));
  return (d.r - pred).squaredNorm();
}

double log_gamma_density(double v, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(v) -
         rate * v;
}

double mean_of(const Eigen::VectorXd& v) { return v.size() ? v.mean() : 0.0; }

double sd_of(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().sum() / (v.size() - 1));
}

}  // namespace

void ExactPriors::validate() const {
  if (!(a0 > 0 && b0 > 0 && c0 > 0 && f0 > 0 && h0 > 0)) {
    throw ValidationError("exact priors: all hyperparameters must be positive");
  }
}

nlohmann::json ChainDiagnostics::to_json() const {
  return {{"s_acceptance", s_acceptance},
          {"burn_in_acceptance", burn_in_acceptance},
          {"final_log_s_step", final_log_s_step},
          {"kept", kept}};
}

nlohmann::json PosteriorSamples::summary_json() const {
  nlohmann::json theta_mean = nlohmann::json::array();
  nlohmann::json theta_sd = nlohmann::json::array();
  for (Eigen::Index j = 0; j < theta.cols(); ++j) {
    Eigen::VectorXd col = theta.col(j);
    theta_mean.push_back(mean_of(col));
    theta_sd.push_back(sd_of(col));
  }
  return {{"samples", size()},
          {"theta_mean", theta_mean},
          {"theta_sd", theta_sd},
          {"s_mean", mean_of(s)},
          {"s_sd", sd_of(s)},
          {"tau_mean", mean_of(tau)},
          {"tau_sd", sd_of(tau)},
          {"diagnostics", diagnostics.to_json()}};
}

double log_unnorm_posterior(const Eigen::VectorXd& theta, double s, double tau,
                            std::span<const HistoryRecord> data,
                            const ExactPriors& priors) {
  if (!(s > 0.0) || !(tau > 0.0)) return -std::numeric_limits<double>::infinity();
  const double p = static_cast<double>(theta.size());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double prior_var = priors.a0 / tau;

  double lp = -0.5 * p * (log2pi + std::log(prior_var)) -
              0.5 * theta.squaredNorm() / prior_var;
  lp += log_gamma_density(s, priors.b0, priors.c0);
  lp += log_gamma_density(tau, priors.f0, priors.h0);
  for (const auto& rec : data) {
    const double mean = -theta.dot(rec.x) * std::expm1(-rec.t_raw / s);
    const double resid = rec.rating - mean;
    lp += 0.5 * (std::log(tau) - log2pi) - 0.5 * tau * resid * resid;
  }
  return lp;
}

PosteriorSamples mcmc_infer(std::span<const HistoryRecord> data, int p,
                            const ExactPriors& priors, const McmcConfig& config) {
  priors.validate();
  if (p < 1) throw ValidationError("mcmc: feature dimension must be positive");
  if (!(config.iters > config.burn_in && config.burn_in >= 0 && config.thin >= 1)) {
    throw ValidationError("mcmc: need iters > burn_in >= 0 and thin >= 1");
  }
  if (config.fixed_s && !(*config.fixed_s > 0.0)) {
    throw ValidationError("mcmc: fixed_s must be positive");
  }
  const Design d = pack(data, p);
  const auto n = static_cast<double>(d.r.size());

  Rng rng(config.seed);
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_01<double> unif;

  double s = config.fixed_s.value_or(priors.b0 / priors.c0);
  if (config.fixed_tau && !(*config.fixed_tau > 0.0)) {
    throw ValidationError("mcmc: fixed_tau must be positive");
  }
  double tau = config.fixed_tau.value_or(priors.f0 / priors.h0);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  double step = config.log_s_step;

  const int kept = (config.iters - config.burn_in + config.thin - 1) / config.thin;
  PosteriorSamples out;
  out.theta.resize(kept, p);
  out.s.resize(kept);
  out.tau.resize(kept);

  const Eigen::MatrixXd prior_precision =
      Eigen::MatrixXd::Identity(p, p) / priors.a0;
  Eigen::VectorXd eps(p);
  int window_accept = 0, window_total = 0;
  int burn_accept = 0, kept_accept = 0, kept_proposals = 0;
  int row = 0;

  for (int it = 0; it < config.iters; ++it) {
    // theta | s, tau ~ N(A^-1 Z'r, A^-1 / tau) with A = I/a0 + Z'Z.
    const Eigen::VectorXd g = novelty_vector(d.t, s);
    const Eigen::MatrixXd z = d.x.array().colwise() * g.array();
    Eigen::MatrixXd a = prior_precision;
    if (d.r.size() > 0) a.noalias() += z.transpose() * z;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("mcmc: theta conditional precision not positive definite");
    }
    const Eigen::VectorXd mean =
        d.r.size() > 0 ? Eigen::VectorXd(llt.solve(z.transpose() * d.r))
                       : Eigen::VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) eps(j) = normal(rng);
    theta = mean + llt.matrixU().solve(eps) / std::sqrt(tau);

    // tau | theta, s ~ Gamma(f0 + (N+p)/2, h0 + (SSR + |theta|^2/a0)/2).
    const double ssr = d.r.size() > 0 ? (d.r - z * theta).squaredNorm() : 0.0;
    const double shape = priors.f0 + 0.5 * (n + p);
    const double rate = priors.h0 + 0.5 * (ssr + theta.squaredNorm() / priors.a0);
    if (!config.fixed_tau) {
      tau = boost::random::gamma_distribution<double>(shape, 1.0 / rate)(rng);
      if (!(tau > 0.0)) tau = std::numeric_limits<double>::min();
    }

    // log s random walk. Density of u = log s carries the Jacobian s.
    if (!config.fixed_s) {
      auto log_target = [&](double u) {
        const double sv = std::exp(u);
        return priors.b0 * u - priors.c0 * sv -
               0.5 * tau * sum_squared_residuals(d, theta, sv);
      };
      const double u = std::log(s);
      const double proposal = u + step * normal(rng);
      const bool accept = std::log(unif(rng)) < log_target(proposal) - log_target(u);
      if (accept) s = std::exp(proposal);

      if (it < config.burn_in) {
        burn_accept += accept;
        window_accept += accept;
        if (++window_total == 50) {
          const double rate_w = window_accept / 50.0;
          if (rate_w < 0.3) step *= 0.8;
          else if (rate_w > 0.5) step *= 1.25;
          window_accept = window_total = 0;
        }
      } else {
        kept_accept += accept;
        ++kept_proposals;
      }
    }

    if (it >= config.burn_in && (it - config.burn_in) % config.thin == 0) {
      out.theta.row(row) = theta.transpose();
      out.s(row) = s;
      out.tau(row) = tau;
      ++row;
    }
  }

  out.diagnostics.kept = kept;
  out.diagnostics.final_log_s_step = step;
  if (config.fixed_s) {
    out.diagnostics.s_acceptance = out.diagnostics.burn_in_acceptance = 1.0;
  } else {
    out.diagnostics.s_acceptance =
        kept_proposals ? static_cast<double>(kept_accept) / kept_proposals : 0.0;
    out.diagnostics.burn_in_acceptance =
        config.burn_in ? static_cast<double>(burn_accept) / config.burn_in : 0.0;
  }
  return out;
}

Eigen::VectorXd posterior_u_samples(const PosteriorSamples& samples,
                                    const Eigen::VectorXd& x, double t_raw) {
  if (samples.size() == 0) throw ValidationError("posterior_u_samples: no samples");
  if (x.size() != samples.theta.cols()) {
    throw ValidationError("posterior_u_samples: feature dimension mismatch");
  }
  if (!(t_raw >= 0.0)) throw DomainError("posterior_u_samples: negative elapsed time");
  const Eigen::VectorXd content = samples.theta * x;
  const Eigen::VectorXd nov = (-(-t_raw / samples.s.array()).expm1()).matrix();
  return content.cwiseProduct(nov);
}

}  // namespace bandit_music
