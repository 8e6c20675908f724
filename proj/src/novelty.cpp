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

#include "bandit_music/novelty.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bandit_music/errors.hpp"

namespace bandit_music {

double novelty(double minutes, double recovery_rate) {
  if (!(recovery_rate > 0.0)) {
    throw DomainError("novelty: recovery rate must be positive");
  }
  if (!(minutes >= 0.0)) throw DomainError("novelty: negative elapsed time");
  return -std::expm1(-minutes / recovery_rate);
}

NoveltyKnots::NoveltyKnots(std::vector<double> minutes) : xi_(std::move(minutes)) {
  if (xi_.empty()) throw ValidationError("knots: need at least one knot");
  for (std::size_t i = 0; i < xi_.size(); ++i) {
    if (!(xi_[i] > 0.0) || !std::isfinite(xi_[i])) {
      throw ValidationError("knots: knot " + std::to_string(i) +
                            " must be positive and finite");
    }
    if (i > 0 && !(xi_[i] > xi_[i - 1])) {
      throw ValidationError("knots: must be strictly increasing");
    }
  }
}

NoveltyKnots NoveltyKnots::doubling_ladder() { return geometric(0.125, 2.0, 15); }

NoveltyKnots NoveltyKnots::geometric(double base, double ratio, int count) {
  std::vector<double> xi;
  xi.reserve(count);
  for (int i = 0; i < count; ++i) xi.push_back(base * std::pow(ratio, i));
  return NoveltyKnots(std::move(xi));
}

Eigen::VectorXd time_basis(double minutes, const NoveltyKnots& knots) {
  if (!(minutes >= 0.0)) throw DomainError("time_basis: negative elapsed time");
  const auto& xi = knots.minutes();
  Eigen::VectorXd v(knots.basis_size());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = std::max(minutes - xi[i], 0.0);
  }
  v(v.size() - 2) = minutes;
  v(v.size() - 1) = 1.0;
  return v;
}

Eigen::VectorXd fit_piecewise(double recovery_rate, const NoveltyKnots& knots,
                              std::span<const double> grid) {
  const int k = knots.basis_size();
  if (static_cast<int>(grid.size()) <= k) {
    throw ValidationError("fit_piecewise: grid needs more than " +
                          std::to_string(k) + " points");
  }
  Eigen::MatrixXd design(static_cast<Eigen::Index>(grid.size()), k);
  Eigen::VectorXd target(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    design.row(static_cast<Eigen::Index>(i)) = time_basis(grid[i], knots).transpose();
    target(static_cast<Eigen::Index>(i)) = novelty(grid[i], recovery_rate);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < k) {
    throw NumericalError(
        "fit_piecewise: design is rank deficient; use a denser grid with "
        "points inside every interval, including beyond the last knot");
  }
  return qr.solve(target);
}

double evaluate_piecewise(const Eigen::VectorXd& beta, double minutes,
                          const NoveltyKnots& knots) {
  return beta.dot(time_basis(minutes, knots));
}

std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> grid{0.0};
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) {
    grid.push_back(std::exp(a + (b - a) * i / (count - 1)));
  }
  return grid;
}

}  // namespace bandit_music
