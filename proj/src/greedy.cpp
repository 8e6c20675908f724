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

#include <cmath>
#include <limits>

#include <ceres/ceres.h>

#include "bandit_music/errors.hpp"
#include "bandit_music/policies.hpp"

namespace bandit_music {
namespace {

// sum_i (r_i - theta' x_i (1 - exp(-t_i / exp(u))))^2 over [theta; u].
class SquaredError final : public ceres::FirstOrderFunction {
 public:
  SquaredError(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
               const Eigen::VectorXd& r)
      : x_(x), t_(t), r_(r) {}

  bool Evaluate(const double* params, double* cost,
                double* gradient) const override {
    const auto p = x_.cols();
    Eigen::Map<const Eigen::VectorXd> theta(params, p);
    const double u = params[p];
    const double s = std::exp(u);
    if (!std::isfinite(s) || s <= 0.0) return false;
    const Eigen::VectorXd content = x_ * theta;
    const Eigen::VectorXd ratio = t_ / s;
    const Eigen::VectorXd decay = (-ratio.array()).exp();
    const Eigen::VectorXd nov = (-ratio.array()).unaryExpr(
        [](double v) { return -std::expm1(v); });
    const Eigen::VectorXd resid = r_ - content.cwiseProduct(nov);
    *cost = resid.squaredNorm();
    if (!std::isfinite(*cost)) return false;
    if (gradient != nullptr) {
      Eigen::Map<Eigen::VectorXd> g(gradient, p + 1);
      g.head(p) = -2.0 * x_.transpose() * resid.cwiseProduct(nov);
      // d nov / d u = -exp(-t/s) t/s
      const Eigen::VectorXd dnov = -decay.cwiseProduct(ratio);
      g(p) = -2.0 * resid.dot(content.cwiseProduct(dnov));
    }
    return true;
  }

  int NumParameters() const override { return static_cast<int>(x_.cols()) + 1; }

 private:
  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& t_;
  const Eigen::VectorXd& r_;
};

// theta minimizing the squared error with s held at s0.
Eigen::VectorXd least_squares_theta(const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& t,
                                    const Eigen::VectorXd& r, double s0) {
  Eigen::MatrixXd z = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) z.row(i) *= -std::expm1(-t(i) / s0);
  return z.completeOrthogonalDecomposition().solve(r);
}

}  // namespace

GreedyFit greedy_fit(std::span<const HistoryRecord> history, int p,
                     const GreedyOptions& options) {
  if (p < 1) throw ValidationError("greedy: p must be positive");
  if (options.start_s.empty()) throw ValidationError("greedy: no starting s");
  GreedyFit best;
  best.theta = Eigen::VectorXd::Zero(p);
  if (history.empty()) return best;

  const auto n = static_cast<Eigen::Index>(history.size());
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd t(n);
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = history[static_cast<std::size_t>(i)];
    if (rec.x.size() != p) throw ValidationError("greedy: feature dimension mismatch");
    x.row(i) = rec.x.transpose();
    t(i) = rec.t_raw;
    r(i) = rec.rating;
  }

  ceres::GradientProblemSolver::Options solver;
  solver.line_search_direction_type = ceres::LBFGS;
  solver.max_num_iterations = options.max_iterations;
  solver.function_tolerance = 1e-15;
  solver.gradient_tolerance = 1e-13;
  solver.parameter_tolerance = 1e-15;
  solver.logging_type = ceres::SILENT;

  best.objective = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  for (double s0 : options.start_s) {
    if (!(s0 > 0.0)) throw ValidationError("greedy: starting s must be positive");
    std::vector<double> params(static_cast<std::size_t>(p) + 1);
    Eigen::Map<Eigen::VectorXd>(params.data(), p) = least_squares_theta(x, t, r, s0);
    params[static_cast<std::size_t>(p)] = std::log(s0);
    // The problem takes ownership of the function.
    ceres::GradientProblem problem(new SquaredError(x, t, r));
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(solver, problem, params.data(), &summary);
    if (summary.termination_type == ceres::CONVERGENCE) any_converged = true;
    if (std::isfinite(summary.final_cost) && summary.final_cost < best.objective) {
      best.objective = summary.final_cost;
      best.theta = Eigen::Map<const Eigen::VectorXd>(params.data(), p);
      best.s = std::exp(params[static_cast<std::size_t>(p)]);
      best.cost_trace.clear();
      for (const auto& it : summary.iterations) best.cost_trace.push_back(it.cost);
    }
  }
  if (!std::isfinite(best.objective)) {
    throw NumericalError("greedy: every start produced a non-finite objective");
  }
  best.warning = !any_converged;
  return best;
}

}  // namespace bandit_music
