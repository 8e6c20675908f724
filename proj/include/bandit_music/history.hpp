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
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bandit_music {

// One rated recommendation.
struct HistoryRecord {
  std::string song_id;
  std::size_t song_index = 0;
  Eigen::VectorXd x;       // content features
  double t_raw = 0.0;      // minutes since the song was last played
  Eigen::VectorXd basis;   // time_basis(t_raw) for the piecewise model
  double rating = 0.0;
  double at = 0.0;         // clock time of the recommendation, minutes
};

using History = std::vector<HistoryRecord>;

}  // namespace bandit_music
