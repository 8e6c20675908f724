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

#include "bandit_music/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <boost/random/normal_distribution.hpp>

#include "bandit_music/errors.hpp"
#include "bandit_music/random.hpp"

namespace bandit_music {
namespace {

// Splits one CSV record. Supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line,
                                        std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) {
    throw ParseError("row " + std::to_string(row) + ": unterminated quote");
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

double parse_number(const std::string& cell, std::size_t row,
                    std::size_t col) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  if (first < last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw ParseError("row " + std::to_string(row) + ", column " +
                     std::to_string(col + 1) + ": '" + cell +
                     "' is not a number");
  }
  if (!std::isfinite(value)) {
    throw ParseError("row " + std::to_string(row) + ", column " +
                     std::to_string(col + 1) + ": non-finite value");
  }
  return value;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Eigen::VectorXd json_to_vector(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Eigen::VectorXd PcaModel::project(const Eigen::VectorXd& raw) const {
  if (raw.size() != mean.size()) {
    throw ValidationError("project: expected dimension " +
                          std::to_string(mean.size()) + ", got " +
                          std::to_string(raw.size()));
  }
  return components * (raw - mean);
}

Eigen::VectorXd PcaModel::reconstruct(const Eigen::VectorXd& projected) const {
  if (projected.size() != components.rows()) {
    throw ValidationError("reconstruct: dimension mismatch");
  }
  return mean + components.transpose() * projected;
}

nlohmann::json PcaModel::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < components.rows(); ++i) {
    std::vector<double> row(components.cols());
    for (Eigen::Index j = 0; j < components.cols(); ++j) row[j] = components(i, j);
    rows.push_back(row);
  }
  return {
      {"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
      {"components", rows},
      {"explained_variance_ratio",
       std::vector<double>(explained_variance_ratio.data(),
                           explained_variance_ratio.data() +
                               explained_variance_ratio.size())},
  };
}

PcaModel PcaModel::from_json(const nlohmann::json& j) {
  PcaModel m;
  try {
    m.mean = json_to_vector(j.at("mean"));
    const auto& rows = j.at("components");
    m.components.resize(static_cast<Eigen::Index>(rows.size()), m.mean.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto row = rows[i].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != m.mean.size()) {
        throw ParseError("PCA component row " + std::to_string(i) +
                         " has wrong length");
      }
      for (std::size_t k = 0; k < row.size(); ++k) m.components(i, k) = row[k];
    }
    m.explained_variance_ratio = json_to_vector(j.at("explained_variance_ratio"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("PCA model JSON: ") + e.what());
  }
  return m;
}

PcaModel fit_pca(const Eigen::MatrixXd& data, double variance_target) {
  if (data.rows() < 2) throw ValidationError("fit_pca: need at least 2 rows");
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw ValidationError("fit_pca: variance_target must lie in (0, 1]");
  }
  if (!data.allFinite()) throw ValidationError("fit_pca: non-finite data");

  PcaModel model;
  model.mean = data.colwise().mean();
  Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("fit_pca: eigen-decomposition failed");
  }
  // Eigen returns ascending eigenvalues.
  const Eigen::Index d = cov.rows();
  Eigen::VectorXd values(d);
  Eigen::MatrixXd vectors(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    values(i) = std::max(0.0, eig.eigenvalues()(d - 1 - i));
    vectors.col(i) = eig.eigenvectors().col(d - 1 - i);
  }
  const double total = values.sum();
  if (!(total > 0.0)) throw ValidationError("fit_pca: degenerate covariance");

  Eigen::VectorXd ratio = values / total;
  Eigen::Index keep = 0;
  double cumulative = 0.0;
  while (keep < d) {
    cumulative += ratio(keep);
    ++keep;
    if (cumulative >= variance_target - 1e-12) break;
  }

  model.components.resize(keep, d);
  for (Eigen::Index i = 0; i < keep; ++i) {
    Eigen::VectorXd v = vectors.col(i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    model.components.row(i) = v.transpose();
  }
  model.explained_variance_ratio = ratio.head(keep);
  return model;
}

Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& raw) {
  return model.project(raw);
}

Catalog::Catalog(std::vector<SongFeatures> songs,
                 std::vector<std::string> feature_names)
    : songs_(std::move(songs)), feature_names_(std::move(feature_names)) {
  if (!songs_.empty()) {
    dim_ = static_cast<int>(songs_.front().reduced.size());
    raw_dim_ = static_cast<int>(songs_.front().raw.size());
  } else if (!feature_names_.empty()) {
    dim_ = raw_dim_ = static_cast<int>(feature_names_.size());
  }
  for (std::size_t i = 0; i < songs_.size(); ++i) {
    const auto& s = songs_[i];
    if (s.reduced.size() != dim_ || s.raw.size() != raw_dim_) {
      throw ValidationError("catalog: song '" + s.song_id +
                            "' has inconsistent dimension");
    }
    if (!s.raw.allFinite() || !s.reduced.allFinite()) {
      throw ValidationError("catalog: song '" + s.song_id +
                            "' has non-finite features");
    }
    if (!index_.emplace(s.song_id, i).second) {
      throw ValidationError("catalog: duplicate song_id '" + s.song_id + "'");
    }
  }
  if (feature_names_.empty()) {
    for (int j = 0; j < raw_dim_; ++j) {
      feature_names_.push_back("f" + std::to_string(j));
    }
  }
  if (static_cast<int>(feature_names_.size()) != raw_dim_) {
    throw ValidationError("catalog: feature name count does not match dimension");
  }
}

std::optional<std::size_t> Catalog::index_of(const std::string& song_id) const {
  auto it = index_.find(song_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::MatrixXd Catalog::raw_matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(songs_.size()), raw_dim_);
  for (std::size_t i = 0; i < songs_.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = songs_[i].raw.transpose();
  }
  return m;
}

Catalog Catalog::with_projection(const PcaModel& model) const {
  std::vector<SongFeatures> out = songs_;
  for (auto& s : out) s.reduced = model.project(s.raw);
  return Catalog(std::move(out), feature_names_);
}

Catalog Catalog::synthetic(std::size_t songs, int p, std::uint64_t seed) {
  Rng rng(seed);
  boost::random::normal_distribution<double> normal;
  std::vector<SongFeatures> out;
  out.reserve(songs);
  for (std::size_t i = 0; i < songs; ++i) {
    SongFeatures s;
    s.song_id = "s" + std::to_string(i);
    s.title = "Song " + std::to_string(i);
    s.artist = "Synthetic";
    s.raw.resize(p);
    for (int j = 0; j < p; ++j) s.raw(j) = normal(rng);
    s.reduced = s.raw;
    out.push_back(std::move(s));
  }
  return Catalog(std::move(out));
}

Catalog load_catalog(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("catalog: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line, 1);
  if (header.size() < 3 || header[0] != "song_id" || header[1] != "title" ||
      header[2] != "artist") {
    throw ParseError("catalog: header must start with song_id,title,artist");
  }
  std::vector<std::string> names(header.begin() + 3, header.end());
  const std::size_t d = names.size();

  std::vector<SongFeatures> songs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line, row);
    if (fields.size() != d + 3) {
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(d + 3) + " fields, got " +
                       std::to_string(fields.size()));
    }
    SongFeatures s;
    s.song_id = fields[0];
    s.title = fields[1];
    s.artist = fields[2];
    s.raw.resize(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
      s.raw(static_cast<Eigen::Index>(j)) = parse_number(fields[j + 3], row, j + 3);
    }
    s.reduced = s.raw;
    songs.push_back(std::move(s));
  }
  return Catalog(std::move(songs), std::move(names));
}

Catalog load_catalog_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open catalog file '" + path + "'");
  return load_catalog(in);
}

void write_catalog(std::ostream& out, const Catalog& catalog) {
  out << "song_id,title,artist";
  for (const auto& name : catalog.feature_names()) out << ',' << quote_if_needed(name);
  out << '\n';
  for (const auto& s : catalog.songs()) {
    out << quote_if_needed(s.song_id) << ',' << quote_if_needed(s.title) << ','
        << quote_if_needed(s.artist);
    for (Eigen::Index j = 0; j < s.raw.size(); ++j) {
      out << ',' << format_number(s.raw(j));
    }
    out << '\n';
  }
}

}  // namespace bandit_music
