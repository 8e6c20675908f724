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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bandit_music/catalog.hpp"
#include "bandit_music/policies.hpp"
#include "bandit_music/random.hpp"

namespace bandit_music {

struct SimulatedUser {
  Eigen::VectorXd theta_star;
  double s_star = 300.0;  // minutes
  double sigma_r = 0.5;
};

// theta* ~ N(0, I_p), s* ~ U(100, 1000).
SimulatedUser sample_user(Rng& rng, int p, double sigma_r);

// theta*' x (1 - exp(-t/s*))
double true_expected_rating(const SimulatedUser& user, const Eigen::VectorXd& x,
                            double t_raw);
// Expected rating plus N(0, sigma_r^2) noise, unclamped.
double draw_rating(const SimulatedUser& user, const Eigen::VectorXd& x,
                   double t_raw, Rng& rng);

// One rating every per_rec_seconds, with a pause of gap_minutes after every
// recs_per_session ratings.
struct SessionClock {
  double per_rec_seconds = 50.0;
  int recs_per_session = 20;
  double gap_minutes = 4.0;

  // Minutes since the start of the episode at recommendation l (1-based).
  double time_of(std::size_t l) const;
};

struct TraceRecord {
  std::size_t step = 0;
  std::string song_id;
  std::size_t song_index = 0;
  double time = 0.0;
  double t_raw = 0.0;
  double rating = 0.0;
  double true_u = 0.0;
  double best_u = 0.0;
  // Mean predictive sd after this rating; NaN when not tracked.
  double uncertainty = 0.0;
};

struct EpisodeTrace {
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> records;
};

struct EpisodeOptions {
  SessionClock clock;
  // Record the uncertainty metric every k steps (and at the last step);
  // 0 disables tracking.
  int uncertainty_every = 0;
};

// Runs n recommendations against a simulated user. Ratings draw from a stream
// derived from `seed`; the policy's own seed is derived from it as well.
EpisodeTrace run_episode(PolicyKind kind, const SimulatedUser& user,
                         const Catalog& catalog, int n, std::uint64_t seed,
                         const PolicyConfig& config,
                         const EpisodeOptions& options = {});

// Same loop with caller-provided selection, for oracle and custom policies.
using SelectFn = std::function<std::size_t(double now)>;
using FeedbackFn =
    std::function<void(std::size_t song, double rating, double now)>;
EpisodeTrace run_episode_with(const SimulatedUser& user, const Catalog& catalog,
                              int n, std::uint64_t seed, const SelectFn& select,
                              const FeedbackFn& feedback,
                              const SessionClock& clock = {});

// Prefix sums of best_u - true_u.
std::vector<double> regret(const EpisodeTrace& trace);

double uncertainty_metric(std::span<const double> per_song_sd);

struct ZipfResult {
  std::vector<double> frequency;  // descending
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  // Fewer than two distinct ranks: no line fitted, slope reported as 0.
  bool degenerate = false;
};

// Least-squares line through (ln rank, ln frequency) over positive counts.
ZipfResult zipf_from_counts(std::vector<double> counts);
// Rank-frequency of the songs played in one trace.
ZipfResult zipf_analysis(const EpisodeTrace& trace);
// Play counts pooled per song over several traces.
ZipfResult zipf_pooled(std::span<const EpisodeTrace> traces);

}  // namespace bandit_music
