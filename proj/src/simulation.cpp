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

#include "bandit_music/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "bandit_music/errors.hpp"
#include "bandit_music/novelty.hpp"

namespace bandit_music {

SimulatedUser sample_user(Rng& rng, int p, double sigma_r) {
  if (p < 1) throw ValidationError("sample_user: p must be positive");
  if (!(sigma_r >= 0.0)) throw ValidationError("sample_user: sigma_r must be >= 0");
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_real_distribution<double> uniform(100.0, 1000.0);
  SimulatedUser u;
  u.theta_star.resize(p);
  for (int i = 0; i < p; ++i) u.theta_star(i) = normal(rng);
  u.s_star = uniform(rng);
  u.sigma_r = sigma_r;
  return u;
}

double true_expected_rating(const SimulatedUser& user, const Eigen::VectorXd& x,
                            double t_raw) {
  if (x.size() != user.theta_star.size()) {
    throw ValidationError("true_expected_rating: dimension mismatch");
  }
  return user.theta_star.dot(x) * novelty(t_raw, user.s_star);
}

double draw_rating(const SimulatedUser& user, const Eigen::VectorXd& x,
                   double t_raw, Rng& rng) {
  boost::random::normal_distribution<double> normal;
  return true_expected_rating(user, x, t_raw) + user.sigma_r * normal(rng);
}

double SessionClock::time_of(std::size_t l) const {
  if (l < 1) throw ValidationError("clock: steps are 1-based");
  if (recs_per_session < 1) throw ValidationError("clock: recs_per_session < 1");
  const auto i = static_cast<double>(l - 1);
  const auto sessions = static_cast<double>((l - 1) / static_cast<std::size_t>(recs_per_session));
  return i * per_rec_seconds / 60.0 + sessions * gap_minutes;
}

namespace {

using ObserveFn = std::function<double(std::size_t l, double now)>;

EpisodeTrace episode_loop(const SimulatedUser& user, const Catalog& catalog,
                          int n, std::uint64_t seed, const SelectFn& select,
                          const FeedbackFn& feedback, const SessionClock& clock,
                          const ObserveFn& observe) {
  if (n < 1) throw ValidationError("run_episode: n must be at least 1");
  if (catalog.empty()) throw ValidationError("run_episode: catalog is empty");
  Rng rating_rng(derive_seed(seed, {0x7261746eULL}));
  std::vector<std::optional<double>> last(catalog.size());
  auto elapsed = [&](std::size_t k, double now) {
    return last[k] ? now - *last[k] : kNeverPlayedMinutes;
  };

  EpisodeTrace trace;
  trace.seed = seed;
  trace.records.reserve(static_cast<std::size_t>(n));
  for (std::size_t l = 1; l <= static_cast<std::size_t>(n); ++l) {
    const double now = clock.time_of(l);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < catalog.size(); ++k) {
      best = std::max(best, true_expected_rating(user, catalog[k].reduced,
                                                 elapsed(k, now)));
    }
    const std::size_t k = select(now);
    if (k >= catalog.size()) throw InternalError("run_episode: selection out of range");
    TraceRecord rec;
    rec.step = l;
    rec.song_index = k;
    rec.song_id = catalog[k].song_id;
    rec.time = now;
    rec.t_raw = elapsed(k, now);
    rec.true_u = true_expected_rating(user, catalog[k].reduced, rec.t_raw);
    rec.best_u = best;
    rec.rating = draw_rating(user, catalog[k].reduced, rec.t_raw, rating_rng);
    rec.uncertainty = std::numeric_limits<double>::quiet_NaN();
    feedback(k, rec.rating, now);
    last[k] = now;
    if (observe) rec.uncertainty = observe(l, now);
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace

EpisodeTrace run_episode_with(const SimulatedUser& user, const Catalog& catalog,
                              int n, std::uint64_t seed, const SelectFn& select,
                              const FeedbackFn& feedback,
                              const SessionClock& clock) {
  return episode_loop(user, catalog, n, seed, select, feedback, clock, {});
}

EpisodeTrace run_episode(PolicyKind kind, const SimulatedUser& user,
                         const Catalog& catalog, int n, std::uint64_t seed,
                         const PolicyConfig& config, const EpisodeOptions& options) {
  PolicyConfig cfg = config;
  cfg.seed = derive_seed(seed, {0x706f6cULL});
  cfg.mcmc.seed = derive_seed(seed, {0x6d636dULL});
  Policy policy(kind, catalog, cfg);
  if (options.uncertainty_every < 0) {
    throw ValidationError("run_episode: uncertainty_every must be >= 0");
  }
  const auto every = static_cast<std::size_t>(options.uncertainty_every);
  ObserveFn observe;
  if (every > 0) {
    observe = [&](std::size_t l, double now) {
      if (l % every == 0 || l == static_cast<std::size_t>(n)) {
        return policy.uncertainty(now);
      }
      return std::numeric_limits<double>::quiet_NaN();
    };
  }
  EpisodeTrace trace = episode_loop(
      user, catalog, n, seed,
      [&](double now) { return policy.select(now).chosen; },
      [&](std::size_t k, double rating, double now) {
        policy.record_feedback(catalog[k].song_id, rating, now);
      },
      options.clock, observe);
  trace.policy = std::string(to_string(kind));
  return trace;
}

std::vector<double> regret(const EpisodeTrace& trace) {
  std::vector<double> out;
  out.reserve(trace.records.size());
  double total = 0.0;
  for (const auto& r : trace.records) {
    total += r.best_u - r.true_u;
    out.push_back(total);
  }
  return out;
}

double uncertainty_metric(std::span<const double> per_song_sd) {
  if (per_song_sd.empty()) throw ValidationError("uncertainty_metric: no songs");
  double total = 0.0;
  for (double v : per_song_sd) total += v;
  return total / static_cast<double>(per_song_sd.size());
}

ZipfResult zipf_from_counts(std::vector<double> counts) {
  ZipfResult z;
  std::erase_if(counts, [](double c) { return !(c >= 1.0); });
  std::sort(counts.begin(), counts.end(), std::greater<>());
  z.frequency = counts;
  if (counts.size() < 2) {
    z.degenerate = true;
    return z;
  }
  const auto n = static_cast<Eigen::Index>(counts.size());
  Eigen::VectorXd lx(n);
  Eigen::VectorXd ly(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lx(i) = std::log(static_cast<double>(i + 1));
    ly(i) = std::log(counts[static_cast<std::size_t>(i)]);
  }
  const double mx = lx.mean();
  const double my = ly.mean();
  const Eigen::VectorXd dx = lx.array() - mx;
  const Eigen::VectorXd dy = ly.array() - my;
  z.slope = dx.dot(dy) / dx.squaredNorm();
  z.intercept = my - z.slope * mx;
  const double sst = dy.squaredNorm();
  const double sse = (dy - z.slope * dx).squaredNorm();
  z.r_squared = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  return z;
}

ZipfResult zipf_analysis(const EpisodeTrace& trace) {
  return zipf_pooled(std::span<const EpisodeTrace>(&trace, 1));
}

ZipfResult zipf_pooled(std::span<const EpisodeTrace> traces) {
  std::map<std::string, double> counts;
  for (const auto& t : traces) {
    for (const auto& r : t.records) counts[r.song_id] += 1.0;
  }
  std::vector<double> v;
  v.reserve(counts.size());
  for (const auto& [id, c] : counts) v.push_back(c);
  return zipf_from_counts(std::move(v));
}

}  // namespace bandit_music
