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

#include "bandit_music/policies.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include <boost/random/uniform_int_distribution.hpp>

#include "bandit_music/errors.hpp"
#include "bandit_music/random.hpp"
#include "bandit_music/stats.hpp"

namespace bandit_music {
namespace {

struct KindName {
  PolicyKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {PolicyKind::kRandom, "random"},
    {PolicyKind::kGreedyCn, "greedy_cn"},
    {PolicyKind::kLinUcbC, "linucb_c"},
    {PolicyKind::kLinUcbCn, "linucb_cn"},
    {PolicyKind::kBayesUcbCn, "bayes_ucb_cn"},
    {PolicyKind::kBayesUcbCnV, "bayes_ucb_cn_v"},
};

constexpr double kMinutesPerDay = 1440.0;

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(to_vector(m.row(i).transpose()));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto row = j[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError("config: matrix rows have unequal length");
    }
    m.row(i) = from_vector(row).transpose();
  }
  return m;
}

bool approx_unset(const ApproxPriors& pr) {
  return pr.d0.size() == 0 && pr.e0.size() == 0 && pr.mu_theta0.size() == 0 &&
         pr.mu_beta0.size() == 0;
}

}  // namespace

std::string_view to_string(PolicyKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  throw InternalError("unknown policy kind");
}

PolicyKind parse_policy_kind(std::string_view name) {
  for (const auto& kn : kKindNames) {
    if (kn.name == name) return kn.kind;
  }
  throw ValidationError("unknown policy kind \"" + std::string(name) + "\"");
}

const std::vector<PolicyKind>& all_policy_kinds() {
  static const std::vector<PolicyKind> kinds = [] {
    std::vector<PolicyKind> v;
    for (const auto& kn : kKindNames) v.push_back(kn.kind);
    return v;
  }();
  return kinds;
}

double quantile_level(std::size_t l) {
  return 1.0 - 1.0 / (static_cast<double>(l) + 1.0);
}

nlohmann::json PolicyConfig::to_json() const {
  nlohmann::json j;
  j["knots"] = knots.minutes();
  if (!approx_unset(approx)) {
    j["approx"] = {{"d0", matrix_rows(approx.d0)},
                   {"e0", matrix_rows(approx.e0)},
                   {"mu_theta0", to_vector(approx.mu_theta0)},
                   {"mu_beta0", to_vector(approx.mu_beta0)},
                   {"a0", approx.a0},
                   {"b0", approx.b0}};
  }
  j["exact"] = {{"a0", exact.a0}, {"b0", exact.b0}, {"c0", exact.c0},
                {"f0", exact.f0}, {"h0", exact.h0}};
  j["mcmc"] = {{"iters", mcmc.iters},
               {"burn_in", mcmc.burn_in},
               {"thin", mcmc.thin},
               {"seed", mcmc.seed},
               {"log_s_step", mcmc.log_s_step}};
  if (mcmc.fixed_s) j["mcmc"]["fixed_s"] = *mcmc.fixed_s;
  j["vi"] = {{"tol", vi.tol},
             {"max_iter", vi.max_iter},
             {"monotonic_slack", vi.monotonic_slack}};
  j["predictive_samples"] = predictive_samples;
  j["linucb"] = {{"lambda", linucb_lambda}, {"alpha", linucb_alpha}};
  j["greedy"] = {{"start_s", greedy.start_s},
                 {"max_iterations", greedy.max_iterations}};
  j["seed"] = seed;
  return j;
}

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
  PolicyConfig c;
  try {
    if (j.contains("knots")) {
      c.knots = NoveltyKnots(j.at("knots").get<std::vector<double>>());
    }
    if (j.contains("approx")) {
      const auto& a = j.at("approx");
      if (a.contains("d0")) c.approx.d0 = matrix_from_rows(a.at("d0"));
      if (a.contains("e0")) c.approx.e0 = matrix_from_rows(a.at("e0"));
      if (a.contains("mu_theta0")) {
        c.approx.mu_theta0 = from_vector(a.at("mu_theta0").get<std::vector<double>>());
      }
      if (a.contains("mu_beta0")) {
        c.approx.mu_beta0 = from_vector(a.at("mu_beta0").get<std::vector<double>>());
      }
      c.approx.a0 = a.value("a0", c.approx.a0);
      c.approx.b0 = a.value("b0", c.approx.b0);
    }
    if (j.contains("exact")) {
      const auto& e = j.at("exact");
      c.exact.a0 = e.value("a0", c.exact.a0);
      c.exact.b0 = e.value("b0", c.exact.b0);
      c.exact.c0 = e.value("c0", c.exact.c0);
      c.exact.f0 = e.value("f0", c.exact.f0);
      c.exact.h0 = e.value("h0", c.exact.h0);
    }
    if (j.contains("mcmc")) {
      const auto& m = j.at("mcmc");
      c.mcmc.iters = m.value("iters", c.mcmc.iters);
      c.mcmc.burn_in = m.value("burn_in", c.mcmc.burn_in);
      c.mcmc.thin = m.value("thin", c.mcmc.thin);
      c.mcmc.seed = m.value("seed", c.mcmc.seed);
      c.mcmc.log_s_step = m.value("log_s_step", c.mcmc.log_s_step);
      if (m.contains("fixed_s")) c.mcmc.fixed_s = m.at("fixed_s").get<double>();
    }
    if (j.contains("vi")) {
      const auto& v = j.at("vi");
      c.vi.tol = v.value("tol", c.vi.tol);
      c.vi.max_iter = v.value("max_iter", c.vi.max_iter);
      c.vi.monotonic_slack = v.value("monotonic_slack", c.vi.monotonic_slack);
    }
    c.predictive_samples = j.value("predictive_samples", c.predictive_samples);
    if (j.contains("linucb")) {
      c.linucb_lambda = j.at("linucb").value("lambda", c.linucb_lambda);
      c.linucb_alpha = j.at("linucb").value("alpha", c.linucb_alpha);
    }
    if (j.contains("greedy")) {
      c.greedy.start_s = j.at("greedy").value("start_s", c.greedy.start_s);
      c.greedy.max_iterations =
          j.at("greedy").value("max_iterations", c.greedy.max_iterations);
    }
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("policy config: ") + e.what());
  }
  return c;
}

nlohmann::json SelectionReport::to_json(const Catalog& catalog) const {
  nlohmann::json songs = nlohmann::json::array();
  for (std::size_t k = 0; k < score.size(); ++k) {
    nlohmann::json s = {{"song_id", catalog[k].song_id}, {"score", score[k]}};
    if (!mean.empty()) {
      s["mean"] = mean[k];
      s["sd"] = sd[k];
    }
    songs.push_back(std::move(s));
  }
  return {{"chosen", chosen_id}, {"alpha", alpha}, {"songs", std::move(songs)}};
}

Policy::Policy(PolicyKind kind, const Catalog& catalog, PolicyConfig config)
    : kind_(kind), catalog_(&catalog), config_(std::move(config)),
      last_played_(catalog.size()) {
  if (catalog.empty()) throw ValidationError("policy: catalog is empty");
  const int p = catalog.dim();
  const int kb = config_.knots.basis_size();
  if (approx_unset(config_.approx)) {
    config_.approx = ApproxPriors::isotropic(p, kb);
  } else if (config_.approx.p() != p || config_.approx.basis_size() != kb) {
    throw ValidationError("policy: approx priors must have p = " +
                          std::to_string(p) + " and basis length " +
                          std::to_string(kb));
  }
  config_.approx.validate();
  config_.exact.validate();
  if (config_.predictive_samples < 100) {
    throw ValidationError("policy: predictive_samples must be at least 100");
  }
  if (!(config_.linucb_lambda > 0.0) || !(config_.linucb_alpha >= 0.0)) {
    throw ValidationError("policy: linucb lambda must be positive and alpha non-negative");
  }
  refit();
}

double Policy::elapsed(std::size_t k, double now) const {
  const auto& last = last_played_.at(k);
  if (!last) return kNeverPlayedMinutes;
  if (now < *last) {
    throw ValidationError("policy: clock went backwards (" + std::to_string(now) +
                          " < " + std::to_string(*last) + ")");
  }
  return now - *last;
}

Eigen::VectorXd Policy::linucb_features(std::size_t k, double t) const {
  const Eigen::VectorXd& x = (*catalog_)[k].reduced;
  if (kind_ == PolicyKind::kLinUcbC) return x;
  Eigen::VectorXd z(x.size() + 1);
  z << x, t / kMinutesPerDay;
  return z;
}

const VariationalState& Policy::variational_view() const {
  if (vi_) return *vi_;
  if (!shadow_) shadow_ = vi_fit(history_, config_.approx, config_.vi);
  return *shadow_;
}

std::vector<SongPosterior> Policy::sampled_summary(double now, std::size_t l,
                                                   bool want_quantile) const {
  const std::size_t n = catalog_->size();
  const double alpha = quantile_level(l);
  std::vector<SongPosterior> out(n);
  if (kind_ == PolicyKind::kBayesUcbCn) {
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::VectorXd u =
          posterior_u_samples(*mcmc_, (*catalog_)[k].reduced, elapsed(k, now));
      std::span<const double> view(u.data(), static_cast<std::size_t>(u.size()));
      out[k] = {sample_mean(view), sample_sd(view),
                want_quantile ? empirical_quantile(view, alpha) : 0.0};
    }
    return out;
  }
  const MarginalEvaluator marginals(variational_view());
  for (std::size_t k = 0; k < n; ++k) {
    const FactorMarginals m = marginals(
        (*catalog_)[k].reduced, time_basis(elapsed(k, now), config_.knots));
    out[k].mean = m.product_mean();
    out[k].sd = std::sqrt(m.product_var());
    if (want_quantile) {
      out[k].quantile = sample_product(m, config_.predictive_samples,
                                       derive_seed(config_.seed, {l, k}))
                            .quantile(alpha);
    }
  }
  return out;
}

SelectionReport Policy::select(double now) const {
  const std::size_t n = catalog_->size();
  const std::size_t l = history_.size() + 1;
  SelectionReport rep;
  rep.alpha = quantile_level(l);
  rep.score.resize(n);

  switch (kind_) {
    case PolicyKind::kRandom: {
      Rng rng(derive_seed(config_.seed, {l}));
      boost::random::uniform_int_distribution<std::size_t> pick(0, n - 1);
      rep.chosen = pick(rng);
      rep.score[rep.chosen] = 1.0;
      break;
    }
    case PolicyKind::kGreedyCn: {
      const GreedyFit& fit = *greedy_;
      for (std::size_t k = 0; k < n; ++k) {
        rep.score[k] = fit.theta.dot((*catalog_)[k].reduced) *
                       novelty(elapsed(k, now), fit.s);
      }
      rep.chosen = argmax_lowest(rep.score);
      break;
    }
    case PolicyKind::kLinUcbC:
    case PolicyKind::kLinUcbCn: {
      Eigen::LLT<Eigen::MatrixXd> llt(lin_a_);
      const Eigen::VectorXd w = llt.solve(lin_b_);
      rep.mean.resize(n);
      rep.sd.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        const Eigen::VectorXd z = linucb_features(k, elapsed(k, now));
        rep.mean[k] = z.dot(w);
        rep.sd[k] = llt.matrixL().solve(z).norm();
        rep.score[k] = rep.mean[k] + config_.linucb_alpha * rep.sd[k];
      }
      rep.chosen = argmax_lowest(rep.score);
      break;
    }
    case PolicyKind::kBayesUcbCn:
    case PolicyKind::kBayesUcbCnV: {
      const auto summary = sampled_summary(now, l, true);
      rep.mean.resize(n);
      rep.sd.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        rep.score[k] = summary[k].quantile;
        rep.mean[k] = summary[k].mean;
        rep.sd[k] = summary[k].sd;
      }
      rep.chosen = argmax_lowest(rep.score);
      break;
    }
  }
  rep.chosen_id = (*catalog_)[rep.chosen].song_id;
  return rep;
}

std::vector<SongPosterior> Policy::posterior(double now) const {
  return sampled_summary(now, history_.size() + 1, true);
}

double Policy::uncertainty(double now) const {
  const auto summary = sampled_summary(now, history_.size() + 1, false);
  double total = 0.0;
  for (const auto& s : summary) total += s.sd;
  return total / static_cast<double>(summary.size());
}

void Policy::record_feedback(const std::string& song_id, double rating, double now) {
  const auto k = catalog_->index_of(song_id);
  if (!k) throw NotFoundError("policy: unknown song \"" + song_id + "\"");
  if (!std::isfinite(rating)) throw ValidationError("policy: rating must be finite");
  HistoryRecord rec;
  rec.song_id = song_id;
  rec.song_index = *k;
  rec.x = (*catalog_)[*k].reduced;
  rec.t_raw = elapsed(*k, now);
  rec.basis = time_basis(rec.t_raw, config_.knots);
  rec.rating = rating;
  rec.at = now;
  append(std::move(rec));
}

void Policy::append(HistoryRecord rec) {
  const std::size_t k = rec.song_index;
  const double now = rec.at;
  if (kind_ == PolicyKind::kLinUcbC || kind_ == PolicyKind::kLinUcbCn) {
    const Eigen::VectorXd z = linucb_features(k, rec.t_raw);
    lin_a_.selfadjointView<Eigen::Lower>().rankUpdate(z);
    lin_a_.triangularView<Eigen::StrictlyUpper>() = lin_a_.transpose();
    lin_b_ += rec.rating * z;
  }
  history_.push_back(std::move(rec));
  last_played_[k] = now;
  if (kind_ != PolicyKind::kLinUcbC && kind_ != PolicyKind::kLinUcbCn) refit();
  shadow_.reset();
}

void Policy::refit() {
  const int p = catalog_->dim();
  switch (kind_) {
    case PolicyKind::kRandom:
      break;
    case PolicyKind::kGreedyCn:
      greedy_ = greedy_fit(history_, p, config_.greedy);
      break;
    case PolicyKind::kLinUcbC:
    case PolicyKind::kLinUcbCn: {
      const int d = kind_ == PolicyKind::kLinUcbC ? p : p + 1;
      lin_a_ = config_.linucb_lambda * Eigen::MatrixXd::Identity(d, d);
      lin_b_ = Eigen::VectorXd::Zero(d);
      break;
    }
    case PolicyKind::kBayesUcbCn: {
      McmcConfig mc = config_.mcmc;
      mc.seed = derive_seed(config_.mcmc.seed, {history_.size()});
      mcmc_ = mcmc_infer(history_, p, config_.exact, mc);
      break;
    }
    case PolicyKind::kBayesUcbCnV:
      vi_ = vi_fit(history_, config_.approx, config_.vi);
      break;
  }
}

nlohmann::json Policy::snapshot() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : history_) {
    hist.push_back({{"song_id", r.song_id},
                    {"t_raw", r.t_raw},
                    {"rating", r.rating},
                    {"at", r.at}});
  }
  nlohmann::json last = nlohmann::json::object();
  for (std::size_t k = 0; k < last_played_.size(); ++k) {
    if (last_played_[k]) last[(*catalog_)[k].song_id] = *last_played_[k];
  }
  nlohmann::json j = {{"kind", std::string(to_string(kind_))},
                      {"config", config_.to_json()},
                      {"history", std::move(hist)},
                      {"last_played", std::move(last)}};
  if (vi_) j["vi_state"] = vi_->to_json();
  if (greedy_) j["greedy"] = {{"theta", to_vector(greedy_->theta)}, {"s", greedy_->s}};
  return j;
}

Policy Policy::restore(const nlohmann::json& j, const Catalog& catalog) {
  try {
    Policy policy(parse_policy_kind(j.at("kind").get<std::string>()), catalog,
                  PolicyConfig::from_json(j.at("config")));
    for (const auto& h : j.at("history")) {
      const auto id = h.at("song_id").get<std::string>();
      const auto k = catalog.index_of(id);
      if (!k) throw ParseError("snapshot: unknown song \"" + id + "\"");
      HistoryRecord rec;
      rec.song_id = id;
      rec.song_index = *k;
      rec.x = catalog[*k].reduced;
      rec.t_raw = h.at("t_raw").get<double>();
      rec.basis = time_basis(rec.t_raw, policy.config_.knots);
      rec.rating = h.at("rating").get<double>();
      rec.at = h.at("at").get<double>();
      if (policy.kind_ == PolicyKind::kLinUcbC ||
          policy.kind_ == PolicyKind::kLinUcbCn) {
        policy.append(std::move(rec));
      } else {
        policy.history_.push_back(std::move(rec));
      }
    }
    for (std::size_t k = 0; k < catalog.size(); ++k) policy.last_played_[k].reset();
    for (const auto& [id, at] : j.at("last_played").items()) {
      const auto k = catalog.index_of(id);
      if (!k) throw ParseError("snapshot: unknown song \"" + id + "\"");
      policy.last_played_[*k] = at.get<double>();
    }
    if (j.contains("vi_state") && policy.kind_ == PolicyKind::kBayesUcbCnV) {
      policy.vi_ = VariationalState::from_json(j.at("vi_state"));
    } else if (policy.kind_ != PolicyKind::kLinUcbC &&
               policy.kind_ != PolicyKind::kLinUcbCn) {
      policy.refit();
    }
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("snapshot: ") + e.what());
  }
}

}  // namespace bandit_music
