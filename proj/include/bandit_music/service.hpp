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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "bandit_music/catalog.hpp"
#include "bandit_music/policies.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace bandit_music {

// Minutes on some fixed epoch.
using ServiceClock = std::function<double()>;

ServiceClock wall_clock();

struct ServiceOptions {
  PolicyConfig policy;
  // Sessions are written here after every change and reloaded on start.
  std::optional<std::filesystem::path> state_dir;
  ServiceClock clock = wall_clock();
  std::uint64_t seed = 1;
  int page_size = 50;
};

// Interactive rating sessions over live policy state. Calls on distinct
// sessions run concurrently; calls on one session are serialized.
class RecommenderService {
 public:
  RecommenderService(Catalog catalog, ServiceOptions options);
  ~RecommenderService();

  const Catalog& catalog() const { return catalog_; }
  std::size_t session_count() const;

  // body: {"policy": kind, "seed"?: int, "config"?: {...}}
  nlohmann::json create_session(const nlohmann::json& body);
  nlohmann::json next_recommendation(const std::string& id);
  nlohmann::json submit_rating(const std::string& id, const nlohmann::json& body);
  nlohmann::json posterior(const std::string& id, int page);
  nlohmann::json catalog_page(int page) const;

  // Read-only view of a session's policy, for tests and reports.
  nlohmann::json session_snapshot(const std::string& id);

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;
  void persist(const Session& s) const;
  void restore_all();
  std::string new_id();

  Catalog catalog_;
  ServiceOptions options_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

// Installs the JSON routes on `server`. Errors map to {code, message} with
// 400 (validation), 404 (unknown session or song), 409 (state conflict).
void register_routes(httplib::Server& server, RecommenderService& service);

}  // namespace bandit_music
