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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bandit_music/catalog.hpp"
#include "bandit_music/policies.hpp"
#include "bandit_music/simulation.hpp"
#include "json.hpp"

namespace bandit_music {

struct CatalogSpec {
  // Synthetic i.i.d. normal features when `path` is empty.
  std::size_t songs = 200;
  int p = 10;
  std::uint64_t seed = 7;
  std::string path;
  // PCA variance target applied to a loaded table; unset keeps raw features.
  std::optional<double> pca_variance;
};

struct ExperimentConfig {
  CatalogSpec catalog;
  std::vector<PolicyKind> policies;
  int n = 200;
  std::vector<std::uint64_t> seeds;
  double sigma_r = 0.5;
  PolicyConfig policy;
  // Scalar form of the approximate-model priors, D0 = d0 I and E0 = e0 I,
  // expanded once the catalog dimension is known.
  struct ApproxScales {
    double d0 = 1e-2;
    double e0 = 1e-2;
    double a0 = 2.0;
    double b0 = 2e-8;
  };
  std::optional<ApproxScales> approx_scales;
  EpisodeOptions episode;
  // Worker threads over (policy, seed) pairs; 0 uses the hardware count.
  int threads = 0;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// Desk-scale comparison: 200 songs, p = 10, n = 200, seeds 1..10.
ExperimentConfig desk_scale_config();

Catalog build_catalog(const CatalogSpec& spec);

// Policy settings with the approximate priors sized for `catalog`.
PolicyConfig resolve_policy_config(const ExperimentConfig& config,
                                   const Catalog& catalog);

// The simulated user for a seed depends only on the seed and p, so every
// policy faces the same users.
SimulatedUser user_for_seed(std::uint64_t seed, int p, double sigma_r);

struct ExperimentResult {
  // policy name -> one trace per seed, in config.seeds order
  std::map<std::string, std::vector<EpisodeTrace>> traces;

  std::vector<double> final_regret(const std::string& policy) const;
};

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const Catalog& catalog);

struct PairedComparison {
  std::string worse;
  std::string better;
  double mean_difference = 0.0;
  double p_value = 1.0;
};

// One-sided paired t-test of final regret: H1 `worse` > `better`.
PairedComparison compare_final_regret(const ExperimentResult& result,
                                      const std::string& worse,
                                      const std::string& better);

// Writes runs/<policy>_seed<seed>.csv, aggregate.csv and summary.json.
void write_outputs(const std::filesystem::path& out_dir,
                   const ExperimentConfig& config, const ExperimentResult& result);

nlohmann::json summarize(const ExperimentConfig& config,
                         const ExperimentResult& result);

}  // namespace bandit_music
