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

#include "bandit_music/approx_bayes.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/random/normal_distribution.hpp>

#include "bandit_music/errors.hpp"
#include "bandit_music/random.hpp"
#include "bandit_music/stats.hpp"

namespace bandit_music {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Prior of one linear factor w | tau ~ N(mean, cov / tau), kept as the unit
// precision cov^-1.
struct FactorPrior {
  Eigen::MatrixXd precision;
  Eigen::VectorXd mean;
  double log_det_precision = 0.0;
};

FactorPrior make_prior(const Eigen::MatrixXd& cov, const Eigen::VectorXd& mean,
                       const char* name) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    throw ValidationError(std::string("prior ") + name + ": shape mismatch");
  }
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success || !sym.allFinite()) {
    throw ValidationError(std::string("prior ") + name +
                          " covariance is not positive definite");
  }
  FactorPrior p;
  p.precision = llt.solve(Eigen::MatrixXd::Identity(sym.rows(), sym.cols()));
  p.precision = 0.5 * (p.precision + p.precision.transpose());
  p.mean = mean;
  p.log_det_precision = -2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return p;
}

// q(w) in natural parameters plus the moments derived from them.
struct FactorPosterior {
  Eigen::MatrixXd lambda;
  Eigen::VectorXd eta;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd second;
  double log_det_cov = 0.0;
  // Per-record E[z_i' w] and E[(z_i' w)^2].
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;

  void set_natural(Eigen::MatrixXd lam, Eigen::VectorXd et, const char* name) {
    lambda = 0.5 * (lam + lam.transpose());
    eta = std::move(et);
    Eigen::LLT<Eigen::MatrixXd> llt(lambda);
    if (llt.info() != Eigen::Success) {
      throw NumericalError(std::string("q(") + name +
                           ") precision is not positive definite");
    }
    mean = llt.solve(eta);
    cov = llt.solve(Eigen::MatrixXd::Identity(lambda.rows(), lambda.cols()));
    cov = 0.5 * (cov + cov.transpose());
    second = cov + mean * mean.transpose();
    log_det_cov = -2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }

  void refresh_record_moments(const Eigen::MatrixXd& z) {
    if (z.rows() == 0) {
      first_moment.resize(0);
      second_moment.resize(0);
      return;
    }
    first_moment = z * mean;
    second_moment = (z * second).cwiseProduct(z).rowwise().sum();
  }
};

// Mean-field coordinate ascent for r ~ N(prod_j z_ij' w_j, 1/tau) with
// conjugate Gaussian factors and a Gamma precision.
class MeanField {
 public:
  MeanField(std::vector<const Eigen::MatrixXd*> designs, const Eigen::VectorXd& r,
            std::vector<FactorPrior> priors, std::vector<const char*> names,
            double a0, double b0)
      : designs_(std::move(designs)), r_(r), priors_(std::move(priors)),
        names_(std::move(names)), a0_(a0), b0_(b0) {
    factors_.resize(designs_.size());
    for (std::size_t j = 0; j < designs_.size(); ++j) {
      if (designs_[j]->rows() != r_.size() ||
          designs_[j]->cols() != priors_[j].mean.size()) {
        throw ValidationError(std::string("design for ") + names_[j] +
                              " does not match data/prior dimensions");
      }
    }
    if (!r_.allFinite()) throw ValidationError("vi: non-finite rating");
  }

  // Factors at their priors scaled by the prior E[tau]; zero prior means after
  // the first factor get their last coordinate seeded at 1.
  void init_at_prior() {
    a_n_ = a0_;
    b_n_ = b0_;
    const double tau = a0_ / b0_;
    for (std::size_t j = 0; j < factors_.size(); ++j) {
      Eigen::VectorXd m = priors_[j].mean;
      if (j > 0 && m.size() > 0 && m.isZero(0.0)) m(m.size() - 1) = 1.0;
      Eigen::MatrixXd lam = tau * priors_[j].precision;
      set_factor(j, lam, lam * m);
    }
  }

  void set_factor(std::size_t j, const Eigen::MatrixXd& lambda,
                  const Eigen::VectorXd& eta) {
    factors_[j].set_natural(lambda, eta, names_[j]);
    factors_[j].refresh_record_moments(*designs_[j]);
  }

  void set_tau(double a_n, double b_n) {
    a_n_ = a_n;
    b_n_ = b_n;
  }

  void update_factor(std::size_t j) {
    const Eigen::Index n = r_.size();
    Eigen::VectorXd weight = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd coef = Eigen::VectorXd::Ones(n);
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      if (k == j) continue;
      weight.array() *= factors_[k].second_moment.array();
      coef.array() *= factors_[k].first_moment.array();
    }
    const Eigen::MatrixXd& z = *designs_[j];
    const double tau = tau_mean();
    Eigen::MatrixXd gram = priors_[j].precision;
    Eigen::VectorXd lin = priors_[j].precision * priors_[j].mean;
    if (n > 0) {
      const Eigen::MatrixXd zw =
          z.array().colwise() * weight.array().max(0.0).sqrt();
      gram.selfadjointView<Eigen::Lower>().rankUpdate(zw.transpose());
      gram = gram.selfadjointView<Eigen::Lower>();
      lin += z.transpose() * r_.cwiseProduct(coef);
    }
    set_factor(j, tau * gram, tau * lin);
  }

  void update_tau() {
    double dims = 0.0;
    double b = b0_;
    for (std::size_t j = 0; j < factors_.size(); ++j) {
      const auto& f = factors_[j];
      const auto& pr = priors_[j];
      dims += static_cast<double>(pr.mean.size());
      b += 0.5 * ((pr.precision * f.second).trace() +
                  (pr.mean - 2.0 * f.mean).dot(pr.precision * pr.mean));
    }
    b += 0.5 * expected_sse();
    a_n_ = 0.5 * (dims + static_cast<double>(r_.size())) + a0_;
    b_n_ = b;
  }

  // sum_i E[(r_i - prod_j z_ij' w_j)^2]
  double expected_sse() const {
    Eigen::VectorXd first = Eigen::VectorXd::Ones(r_.size());
    Eigen::VectorXd second = Eigen::VectorXd::Ones(r_.size());
    for (const auto& f : factors_) {
      first.array() *= f.first_moment.array();
      second.array() *= f.second_moment.array();
    }
    return r_.squaredNorm() - 2.0 * r_.dot(first) + second.sum();
  }

  double elbo() const {
    const double e_tau = tau_mean();
    const double e_log_tau = boost::math::digamma(a_n_) - std::log(b_n_);
    const double n = static_cast<double>(r_.size());
    auto check = [](double v, const std::string& term) {
      if (!std::isfinite(v)) {
        throw NumericalError("elbo: non-finite term " + term);
      }
      return v;
    };

    double total = check(a0_ * std::log(b0_) - std::lgamma(a0_) +
                             (a0_ - 1.0) * e_log_tau - b0_ * e_tau,
                         "E[ln p(tau)]");
    for (std::size_t j = 0; j < factors_.size(); ++j) {
      const auto& f = factors_[j];
      const auto& pr = priors_[j];
      const double d = static_cast<double>(pr.mean.size());
      const Eigen::VectorXd diff = pr.mean - f.mean;
      total += check(-0.5 * d * kLog2Pi + 0.5 * pr.log_det_precision +
                         0.5 * d * e_log_tau -
                         0.5 * e_tau *
                             ((pr.precision * f.cov).trace() +
                              diff.dot(pr.precision * diff)),
                     std::string("E[ln p(") + names_[j] + "|tau)]");
      total += check(0.5 * d * (1.0 + kLog2Pi) + 0.5 * f.log_det_cov,
                     std::string("H[q(") + names_[j] + ")]");
    }
    total += check(-0.5 * n * kLog2Pi + 0.5 * n * e_log_tau -
                       0.5 * e_tau * expected_sse(),
                   "E[ln p(r|...)]");
    total += check(a_n_ - std::log(b_n_) + std::lgamma(a_n_) +
                       (1.0 - a_n_) * boost::math::digamma(a_n_),
                   "H[q(tau)]");
    return total;
  }

  double tau_mean() const { return a_n_ / b_n_; }
  double a_n() const { return a_n_; }
  double b_n() const { return b_n_; }
  const FactorPosterior& factor(std::size_t j) const { return factors_[j]; }
  std::size_t factor_count() const { return factors_.size(); }

  // Runs sweeps until the relative bound change drops below tol.
  void run(const ViOptions& options, std::vector<double>& trace, int& iterations,
           bool& converged) {
    if (!(options.tol >= 0.0)) throw ValidationError("vi: tol must be non-negative");
    converged = false;
    for (iterations = 1; iterations <= options.max_iter; ++iterations) {
      for (std::size_t j = 0; j < factors_.size(); ++j) update_factor(j);
      update_tau();
      const double value = elbo();
      if (!trace.empty()) {
        const double prev = trace.back();
        if (value < prev - options.monotonic_slack) {
          std::ostringstream msg;
          msg.precision(17);
          msg << "vi: lower bound decreased at sweep " << iterations << " from "
              << prev << " to " << value << " (a_N=" << a_n_ << ", b_N=" << b_n_;
          for (std::size_t j = 0; j < factors_.size(); ++j) {
            msg << ", E[" << names_[j] << "]=" << factors_[j].mean.transpose();
          }
          msg << ")";
          throw InternalError(msg.str());
        }
        trace.push_back(value);
        if (std::abs(value - prev) < options.tol * std::max(1.0, std::abs(value))) {
          converged = true;
          return;
        }
      } else {
        trace.push_back(value);
      }
    }
    iterations = options.max_iter;
  }

 private:
  std::vector<const Eigen::MatrixXd*> designs_;
  const Eigen::VectorXd& r_;
  std::vector<FactorPrior> priors_;
  std::vector<const char*> names_;
  double a0_;
  double b0_;
  std::vector<FactorPosterior> factors_;
  double a_n_ = 0.0;
  double b_n_ = 0.0;
};

void check_data(const FactorData& data, const ApproxPriors& priors) {
  if (data.x.rows() != data.r.size() || data.basis.rows() != data.r.size()) {
    throw ValidationError("vi: data matrices disagree on record count");
  }
  if (data.x.cols() != priors.p()) {
    throw ValidationError("vi: feature dimension does not match priors");
  }
  if (data.basis.cols() != priors.basis_size()) {
    throw ValidationError("vi: basis vectors must all have length " +
                          std::to_string(priors.basis_size()));
  }
}

MeanField two_factor_engine(const FactorData& data, const ApproxPriors& priors) {
  priors.validate();
  check_data(data, priors);
  return MeanField({&data.x, &data.basis}, data.r,
                   {make_prior(priors.d0, priors.mu_theta0, "theta"),
                    make_prior(priors.e0, priors.mu_beta0, "beta")},
                   {"theta", "beta"}, priors.a0, priors.b0);
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = j[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != m.cols()) {
      throw ParseError("matrix rows have unequal length");
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = row[c];
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

ApproxPriors ApproxPriors::isotropic(int p, int basis_size, double d0_scale,
                                     double e0_scale, double a0, double b0) {
  ApproxPriors pr;
  pr.d0 = d0_scale * Eigen::MatrixXd::Identity(p, p);
  pr.e0 = e0_scale * Eigen::MatrixXd::Identity(basis_size, basis_size);
  pr.mu_theta0 = Eigen::VectorXd::Zero(p);
  pr.mu_beta0 = Eigen::VectorXd::Zero(basis_size);
  pr.a0 = a0;
  pr.b0 = b0;
  return pr;
}

void ApproxPriors::validate() const {
  if (!(a0 > 0.0 && b0 > 0.0)) {
    throw ValidationError("approx priors: a0 and b0 must be positive");
  }
  make_prior(d0, mu_theta0, "theta");
  make_prior(e0, mu_beta0, "beta");
}

FactorData FactorData::from_history(std::span<const HistoryRecord> data, int p,
                                    int basis_size) {
  const auto n = static_cast<Eigen::Index>(data.size());
  FactorData out{Eigen::MatrixXd(n, p), Eigen::MatrixXd(n, basis_size),
                 Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = data[static_cast<std::size_t>(i)];
    if (rec.x.size() != p || rec.basis.size() != basis_size) {
      throw ValidationError("vi: record " + std::to_string(i) +
                            " has inconsistent feature or basis length");
    }
    out.x.row(i) = rec.x.transpose();
    out.basis.row(i) = rec.basis.transpose();
    out.r(i) = rec.rating;
  }
  return out;
}

nlohmann::json VariationalState::to_json() const {
  return {{"lambda_theta", matrix_json(lambda_theta)},
          {"eta_theta", to_std(eta_theta)},
          {"lambda_beta", matrix_json(lambda_beta)},
          {"eta_beta", to_std(eta_beta)},
          {"a_n", a_n},
          {"b_n", b_n},
          {"elbo_trace", elbo_trace},
          {"iterations", iterations},
          {"converged", converged}};
}

VariationalState VariationalState::from_json(const nlohmann::json& j) {
  VariationalState s;
  try {
    s.lambda_theta = matrix_from_json(j.at("lambda_theta"));
    s.eta_theta = vector_from_json(j.at("eta_theta"));
    s.lambda_beta = matrix_from_json(j.at("lambda_beta"));
    s.eta_beta = vector_from_json(j.at("eta_beta"));
    s.a_n = j.at("a_n").get<double>();
    s.b_n = j.at("b_n").get<double>();
    s.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    s.iterations = j.value("iterations", 0);
    s.converged = j.value("converged", false);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("variational state JSON: ") + e.what());
  }
  return s;
}

Moments moments(const VariationalState& state) {
  auto solve = [](const Eigen::MatrixXd& lambda, const Eigen::VectorXd& eta,
                  Eigen::VectorXd& mean, Eigen::MatrixXd& second,
                  const char* name) {
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (lambda + lambda.transpose()));
    if (llt.info() != Eigen::Success) {
      throw NumericalError(std::string("moments: Lambda_") + name + " is singular");
    }
    mean = llt.solve(eta);
    second = llt.solve(Eigen::MatrixXd::Identity(lambda.rows(), lambda.cols())) +
             mean * mean.transpose();
  };
  Moments m;
  solve(state.lambda_theta, state.eta_theta, m.theta_mean, m.theta_second, "theta");
  solve(state.lambda_beta, state.eta_beta, m.beta_mean, m.beta_second, "beta");
  if (!(state.b_n > 0.0)) throw NumericalError("moments: b_N must be positive");
  m.tau_mean = state.a_n / state.b_n;
  return m;
}

VariationalState vi_fit(const FactorData& data, const ApproxPriors& priors,
                        const ViOptions& options) {
  MeanField engine = two_factor_engine(data, priors);
  engine.init_at_prior();
  VariationalState state;
  engine.run(options, state.elbo_trace, state.iterations, state.converged);
  state.lambda_theta = engine.factor(0).lambda;
  state.eta_theta = engine.factor(0).eta;
  state.lambda_beta = engine.factor(1).lambda;
  state.eta_beta = engine.factor(1).eta;
  state.a_n = engine.a_n();
  state.b_n = engine.b_n();
  return state;
}

VariationalState vi_fit(std::span<const HistoryRecord> data,
                        const ApproxPriors& priors, const ViOptions& options) {
  return vi_fit(FactorData::from_history(data, priors.p(), priors.basis_size()),
                priors, options);
}

double elbo(const VariationalState& state, const FactorData& data,
            const ApproxPriors& priors) {
  MeanField engine = two_factor_engine(data, priors);
  engine.set_factor(0, state.lambda_theta, state.eta_theta);
  engine.set_factor(1, state.lambda_beta, state.eta_beta);
  engine.set_tau(state.a_n, state.b_n);
  return engine.elbo();
}

PredictiveDistribution::PredictiveDistribution(Eigen::VectorXd samples)
    : samples_(std::move(samples)) {
  if (samples_.size() == 0) throw ValidationError("predictive: no samples");
  std::span<const double> view(samples_.data(), static_cast<std::size_t>(samples_.size()));
  mean_ = sample_mean(view);
  sd_ = sample_sd(view);
}

double PredictiveDistribution::quantile(double alpha) const {
  return empirical_quantile(
      std::span<const double>(samples_.data(), static_cast<std::size_t>(samples_.size())),
      alpha);
}

double FactorMarginals::product_var() const {
  return content_mean * content_mean * novelty_var +
         novelty_mean * novelty_mean * content_var + content_var * novelty_var;
}

MarginalEvaluator::MarginalEvaluator(const VariationalState& state) {
  auto factor = [](const Eigen::MatrixXd& lambda, const Eigen::VectorXd& eta,
                   Eigen::LLT<Eigen::MatrixXd>& llt, Eigen::VectorXd& mean) {
    if (lambda.rows() != eta.size() || lambda.cols() != eta.size()) {
      throw ValidationError("predict: malformed variational state");
    }
    llt.compute(0.5 * (lambda + lambda.transpose()));
    if (llt.info() != Eigen::Success) {
      throw NumericalError("predict: posterior precision is singular");
    }
    mean = llt.solve(eta);
  };
  factor(state.lambda_theta, state.eta_theta, theta_llt_, theta_mean_);
  factor(state.lambda_beta, state.eta_beta, beta_llt_, beta_mean_);
}

FactorMarginals MarginalEvaluator::operator()(const Eigen::VectorXd& x,
                                              const Eigen::VectorXd& basis) const {
  if (x.size() != theta_mean_.size() || basis.size() != beta_mean_.size()) {
    throw ValidationError("predict: feature or basis dimension mismatch");
  }
  FactorMarginals m;
  m.content_mean = x.dot(theta_mean_);
  m.content_var = theta_llt_.matrixL().solve(x).squaredNorm();
  m.novelty_mean = basis.dot(beta_mean_);
  m.novelty_var = beta_llt_.matrixL().solve(basis).squaredNorm();
  if (!std::isfinite(m.content_mean + m.content_var + m.novelty_mean +
                     m.novelty_var)) {
    throw NumericalError("predict: non-finite factor marginal");
  }
  return m;
}

FactorMarginals factor_marginals(const VariationalState& state,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& basis) {
  return MarginalEvaluator(state)(x, basis);
}

PredictiveDistribution sample_product(const FactorMarginals& m, int n_samples,
                                      std::uint64_t seed) {
  if (n_samples < 2) throw ValidationError("predict: need at least 2 samples");
  Rng rng(seed);
  boost::random::normal_distribution<double> normal;
  const double sd1 = std::sqrt(m.content_var);
  const double sd2 = std::sqrt(m.novelty_var);
  Eigen::VectorXd out(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const double a = m.content_mean + sd1 * normal(rng);
    const double b = m.novelty_mean + sd2 * normal(rng);
    out(i) = a * b;
  }
  return PredictiveDistribution(std::move(out));
}

PredictiveDistribution predict_u(const VariationalState& state,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& basis, int n_samples,
                                 std::uint64_t seed) {
  if (n_samples < 100) throw ValidationError("predict_u: need at least 100 samples");
  return sample_product(factor_marginals(state, x, basis), n_samples, seed);
}

Eigen::VectorXd ThreeFactorState::gamma_mean() const {
  return Eigen::LLT<Eigen::MatrixXd>(lambda_gamma).solve(eta_gamma);
}

ThreeFactorState vi_fit_three_factor(const ThreeFactorData& data,
                                     const ThreeFactorPriors& priors,
                                     const ViOptions& options) {
  priors.base.validate();
  check_data(data.base, priors.base);
  if (data.d.rows() != data.base.r.size() || data.d.cols() != priors.mu_gamma0.size()) {
    throw ValidationError("vi: diversity vectors must all have length " +
                          std::to_string(priors.mu_gamma0.size()));
  }
  MeanField engine({&data.base.x, &data.base.basis, &data.d}, data.base.r,
                   {make_prior(priors.base.d0, priors.base.mu_theta0, "theta"),
                    make_prior(priors.base.e0, priors.base.mu_beta0, "beta"),
                    make_prior(priors.f0, priors.mu_gamma0, "gamma")},
                   {"theta", "beta", "gamma"}, priors.base.a0, priors.base.b0);
  engine.init_at_prior();
  ThreeFactorState state;
  engine.run(options, state.base.elbo_trace, state.base.iterations,
             state.base.converged);
  state.base.lambda_theta = engine.factor(0).lambda;
  state.base.eta_theta = engine.factor(0).eta;
  state.base.lambda_beta = engine.factor(1).lambda;
  state.base.eta_beta = engine.factor(1).eta;
  state.lambda_gamma = engine.factor(2).lambda;
  state.eta_gamma = engine.factor(2).eta;
  state.base.a_n = engine.a_n();
  state.base.b_n = engine.b_n();
  return state;
}

}  // namespace bandit_music
