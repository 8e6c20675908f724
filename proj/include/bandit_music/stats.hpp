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
#include <span>

namespace bandit_music {

// Order-statistic quantile with linear interpolation between adjacent ranks
// (sorted x, position alpha * (n - 1)). Throws on empty input.
double empirical_quantile(std::span<const double> samples, double alpha);

// Index of the largest value, the lowest index among ties. Throws on empty input.
std::size_t argmax_lowest(std::span<const double> score);

double sample_mean(std::span<const double> v);
// Unbiased (n - 1) standard deviation; 0 for fewer than two values.
double sample_sd(std::span<const double> v);

// One-sided paired t-test of H1: mean(a - b) > 0. Returns the p-value.
double paired_t_test_greater(std::span<const double> a, std::span<const double> b);

}  // namespace bandit_music
