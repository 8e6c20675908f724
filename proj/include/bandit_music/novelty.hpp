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

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bandit_music {

// Elapsed time assumed for songs the user has never heard: one month.
inline constexpr double kNeverPlayedMinutes = 43200.0;

// Novelty of a song heard `minutes` ago for a user whose novelty recovers
// with time constant `recovery_rate` (minutes): 1 - exp(-t / s).
double novelty(double minutes, double recovery_rate);

// Interior breakpoints xi_1 < ... < xi_{K-1} splitting elapsed time into K
// intervals [0, xi_1), ..., [xi_{K-1}, inf).
class NoveltyKnots {
 public:
  explicit NoveltyKnots(std::vector<double> minutes);

  // 2^-3, 2^-2, ..., 2^11 minutes: 15 knots, 16 intervals.
  static NoveltyKnots doubling_ladder();
  // Knots at base * ratio^i for i = 0..count-1.
  static NoveltyKnots geometric(double base, double ratio, int count);

  const std::vector<double>& minutes() const { return xi_; }
  int intervals() const { return static_cast<int>(xi_.size()) + 1; }
  // Length of the expanded basis: one hinge per knot, then t, then 1.
  int basis_size() const { return static_cast<int>(xi_.size()) + 2; }

 private:
  std::vector<double> xi_;
};

// [(t - xi_1)_+, ..., (t - xi_{K-1})_+, t, 1]
Eigen::VectorXd time_basis(double minutes, const NoveltyKnots& knots);

// Least-squares coefficients beta such that beta' time_basis(t) approximates
// novelty(t, s) over `grid`. The grid must reach past the last knot so every
// hinge column is identified.
Eigen::VectorXd fit_piecewise(double recovery_rate, const NoveltyKnots& knots,
                              std::span<const double> grid);

double evaluate_piecewise(const Eigen::VectorXd& beta, double minutes,
                          const NoveltyKnots& knots);

// 0 followed by `count` log-spaced points on [lo, hi].
std::vector<double> log_grid(double lo, double hi, int count);

}  // namespace bandit_music
