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
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace bandit_music {

struct SongFeatures {
  std::string song_id;
  std::string title;
  std::string artist;
  Eigen::VectorXd raw;
  // Content vector the models see. Equals `raw` until a PCA model is applied.
  Eigen::VectorXd reduced;
};

// Principal components of a feature table. Rows of `components` are unit
// eigenvectors of the sample covariance, ordered by decreasing eigenvalue.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // p x d_raw
  Eigen::VectorXd explained_variance_ratio;

  int input_dim() const { return static_cast<int>(mean.size()); }
  int output_dim() const { return static_cast<int>(components.rows()); }

  // components * (raw - mean)
  Eigen::VectorXd project(const Eigen::VectorXd& raw) const;
  // mean + components^T * projected
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& projected) const;

  nlohmann::json to_json() const;
  static PcaModel from_json(const nlohmann::json& j);
};

// Fits PCA on the rows of `data`, keeping the smallest number of components
// whose cumulative explained variance reaches `variance_target`.
PcaModel fit_pca(const Eigen::MatrixXd& data, double variance_target);

Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& raw);

class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<SongFeatures> songs,
                   std::vector<std::string> feature_names = {});

  std::size_t size() const { return songs_.size(); }
  bool empty() const { return songs_.empty(); }
  int dim() const { return dim_; }
  int raw_dim() const { return raw_dim_; }

  const SongFeatures& operator[](std::size_t i) const { return songs_[i]; }
  const std::vector<SongFeatures>& songs() const { return songs_; }

  // Raw column names from the table header (generated when absent).
  const std::vector<std::string>& feature_names() const {
    return feature_names_;
  }

  std::optional<std::size_t> index_of(const std::string& song_id) const;

  // Stacks raw vectors as rows (size x d_raw).
  Eigen::MatrixXd raw_matrix() const;

  // Copy whose reduced vectors are model.project(raw).
  Catalog with_projection(const PcaModel& model) const;

  // Catalog of i.i.d. standard-normal features, used by the simulations.
  static Catalog synthetic(std::size_t songs, int p, std::uint64_t seed);

 private:
  std::vector<SongFeatures> songs_;
  std::vector<std::string> feature_names_;
  std::unordered_map<std::string, std::size_t> index_;
  int dim_ = 0;
  int raw_dim_ = 0;
};

// Reads a CSV feature table: header `song_id,title,artist,<d_raw numeric
// columns>`, one song per row. Fields may be double-quoted.
Catalog load_catalog(std::istream& in);
Catalog load_catalog_file(const std::string& path);

// Writes the raw table in the format load_catalog reads. Numbers use the
// shortest representation that parses back to the same double.
void write_catalog(std::ostream& out, const Catalog& catalog);

}  // namespace bandit_music
