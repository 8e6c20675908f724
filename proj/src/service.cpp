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

#include "bandit_music/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bandit_music/errors.hpp"
#include "bandit_music/random.hpp"
#include "httplib.h"

namespace bandit_music {

struct RecommenderService::Session {
  std::string id;
  double created_at = 0.0;
  std::uint64_t seed = 0;
  std::optional<Policy> policy;
  std::optional<std::string> pending;
  double pending_at = 0.0;
  std::mutex mutex;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"session_id", id},
                        {"created_at", created_at},
                        {"seed", seed},
                        {"policy", policy->snapshot()}};
    if (pending) {
      j["pending"] = {{"song_id", *pending}, {"at", pending_at}};
    } else {
      j["pending"] = nullptr;
    }
    return j;
  }
};

namespace {

nlohmann::json song_json(const SongFeatures& s) {
  return {{"song_id", s.song_id}, {"title", s.title}, {"artist", s.artist}};
}

int page_count(std::size_t total, int page_size) {
  return static_cast<int>((total + static_cast<std::size_t>(page_size) - 1) /
                          static_cast<std::size_t>(page_size));
}

std::pair<std::size_t, std::size_t> page_range(std::size_t total, int page,
                                               int page_size) {
  if (page < 0) throw ValidationError("page must be >= 0");
  const std::size_t begin =
      std::min(total, static_cast<std::size_t>(page) * static_cast<std::size_t>(page_size));
  const std::size_t end = std::min(total, begin + static_cast<std::size_t>(page_size));
  return {begin, end};
}

}  // namespace

ServiceClock wall_clock() {
  return [] {
    using namespace std::chrono;
    return duration<double, std::ratio<60>>(system_clock::now().time_since_epoch())
        .count();
  };
}

RecommenderService::RecommenderService(Catalog catalog, ServiceOptions options)
    : catalog_(std::move(catalog)), options_(std::move(options)) {
  if (catalog_.empty()) throw ValidationError("service: catalog is empty");
  if (options_.page_size < 1) throw ValidationError("service: page_size must be >= 1");
  if (!options_.clock) throw ValidationError("service: clock is required");
  if (options_.state_dir) {
    std::filesystem::create_directories(*options_.state_dir);
    restore_all();
  }
}

RecommenderService::~RecommenderService() = default;

std::size_t RecommenderService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<RecommenderService::Session> RecommenderService::find(
    const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session \"" + id + "\"");
  return it->second;
}

std::string RecommenderService::new_id() {
  for (;;) {
    const std::uint64_t h = derive_seed(options_.seed, {++counter_});
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    std::string id(buf);
    if (!sessions_.count(id)) return id;
  }
}

void RecommenderService::persist(const Session& s) const {
  if (!options_.state_dir) return;
  const auto path = *options_.state_dir / (s.id + ".json");
  const auto tmp = *options_.state_dir / (s.id + ".json.tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw NumericalError("service: cannot write " + tmp.string());
    out << s.to_json().dump();
    if (!out) throw NumericalError("service: failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void RecommenderService::restore_all() {
  for (const auto& entry : std::filesystem::directory_iterator(*options_.state_dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(entry.path().string() + ": " + e.what());
    }
    auto s = std::make_shared<Session>();
    try {
      s->id = j.at("session_id").get<std::string>();
      s->created_at = j.at("created_at").get<double>();
      s->seed = j.at("seed").get<std::uint64_t>();
      if (!j.at("pending").is_null()) {
        s->pending = j.at("pending").at("song_id").get<std::string>();
        s->pending_at = j.at("pending").at("at").get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(entry.path().string() + ": " + e.what());
    }
    s->policy.emplace(Policy::restore(j.at("policy"), catalog_));
    sessions_[s->id] = std::move(s);
  }
  counter_ = sessions_.size();
}

nlohmann::json RecommenderService::create_session(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("policy") || !body.at("policy").is_string()) {
    throw ValidationError("body must contain a string \"policy\"");
  }
  const PolicyKind kind = parse_policy_kind(body.at("policy").get<std::string>());
  PolicyConfig config = options_.policy;
  if (body.contains("config")) {
    nlohmann::json merged = options_.policy.to_json();
    merged.merge_patch(body.at("config"));
    config = PolicyConfig::from_json(merged);
  }

  auto s = std::make_shared<Session>();
  {
    std::unique_lock lock(sessions_mutex_);
    s->id = new_id();
    s->seed = derive_seed(options_.seed, {counter_, 0x736565ULL});
  }
  if (body.contains("seed")) {
    const auto& seed = body.at("seed");
    if (!seed.is_number_integer() ||
        (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) {
      throw ValidationError("seed must be a non-negative integer");
    }
    s->seed = body.at("seed").get<std::uint64_t>();
  }
  config.seed = s->seed;
  config.mcmc.seed = derive_seed(s->seed, {1});
  s->created_at = options_.clock();
  s->policy.emplace(kind, catalog_, std::move(config));
  persist(*s);
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[s->id] = s;
  }
  return {{"session_id", s->id},
          {"policy", std::string(to_string(kind))},
          {"seed", s->seed},
          {"step", 0}};
}

nlohmann::json RecommenderService::next_recommendation(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (s->pending) {
    throw ConflictError("session " + id + " is waiting for a rating of \"" +
                        *s->pending + "\"");
  }
  const double now = options_.clock();
  const SelectionReport rep = s->policy->select(now);
  s->pending = rep.chosen_id;
  s->pending_at = now;
  persist(*s);
  return {{"session_id", id},
          {"step", s->policy->step() + 1},
          {"song", song_json(catalog_[rep.chosen])},
          {"report", rep.to_json(catalog_)}};
}

nlohmann::json RecommenderService::submit_rating(const std::string& id,
                                                 const nlohmann::json& body) {
  auto s = find(id);
  if (!body.is_object() || !body.contains("song_id") || !body.at("song_id").is_string()) {
    throw ValidationError("body must contain a string \"song_id\"");
  }
  if (!body.contains("rating") || !body.at("rating").is_number()) {
    throw ValidationError("body must contain a numeric \"rating\"");
  }
  const auto song_id = body.at("song_id").get<std::string>();
  const double rating = body.at("rating").get<double>();
  if (!(rating >= 1.0 && rating <= 5.0)) {
    throw ValidationError("rating must be within [1, 5]");
  }

  std::lock_guard lock(s->mutex);
  if (!s->pending) throw ConflictError("session " + id + " has no pending recommendation");
  if (*s->pending != song_id) {
    throw ValidationError("song \"" + song_id + "\" is not the pending recommendation \"" +
                          *s->pending + "\"");
  }
  s->policy->record_feedback(song_id, rating, s->pending_at);
  s->pending.reset();
  persist(*s);

  const double now = std::max(options_.clock(), s->pending_at);
  const auto post = s->policy->posterior(now);
  const std::size_t k = *catalog_.index_of(song_id);
  double total_sd = 0.0;
  for (const auto& p : post) total_sd += p.sd;
  return {{"session_id", id},
          {"step", s->policy->step()},
          {"song_id", song_id},
          {"posterior", {{"mean", post[k].mean}, {"sd", post[k].sd},
                         {"quantile", post[k].quantile}}},
          {"uncertainty", total_sd / static_cast<double>(post.size())}};
}

nlohmann::json RecommenderService::posterior(const std::string& id, int page) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  double now = options_.clock();
  for (const auto& last : s->policy->last_played()) {
    if (last) now = std::max(now, *last);
  }
  const auto post = s->policy->posterior(now);
  const auto [begin, end] = page_range(post.size(), page, options_.page_size);
  nlohmann::json songs = nlohmann::json::array();
  for (std::size_t k = begin; k < end; ++k) {
    auto js = song_json(catalog_[k]);
    js["mean"] = post[k].mean;
    js["sd"] = post[k].sd;
    js["quantile"] = post[k].quantile;
    songs.push_back(std::move(js));
  }
  double total_sd = 0.0;
  for (const auto& p : post) total_sd += p.sd;
  return {{"session_id", id},
          {"step", s->policy->step()},
          {"alpha", quantile_level(s->policy->step() + 1)},
          {"uncertainty", total_sd / static_cast<double>(post.size())},
          {"page", page},
          {"pages", page_count(post.size(), options_.page_size)},
          {"total", post.size()},
          {"songs", std::move(songs)}};
}

nlohmann::json RecommenderService::catalog_page(int page) const {
  const auto [begin, end] = page_range(catalog_.size(), page, options_.page_size);
  nlohmann::json songs = nlohmann::json::array();
  for (std::size_t k = begin; k < end; ++k) songs.push_back(song_json(catalog_[k]));
  return {{"page", page},
          {"pages", page_count(catalog_.size(), options_.page_size)},
          {"total", catalog_.size()},
          {"songs", std::move(songs)}};
}

nlohmann::json RecommenderService::session_snapshot(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->to_json();
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

template <typename Fn>
void guarded(httplib::Response& res, int ok_status, Fn&& fn) {
  try {
    send_json(res, ok_status, fn());
  } catch (const ValidationError& e) {
    send_error(res, 400, "validation", e.what());
  } catch (const ParseError& e) {
    send_error(res, 400, "parse", e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "parse", e.what());
  } catch (const NotFoundError& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, "conflict", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("request body is not JSON: ") + e.what());
  }
}

int page_param(const httplib::Request& req) {
  if (!req.has_param("page")) return 0;
  const std::string v = req.get_param_value("page");
  int page = 0;
  std::size_t used = 0;
  try {
    page = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ValidationError("page must be an integer");
  return page;
}

}  // namespace

void register_routes(httplib::Server& server, RecommenderService& service) {
  server.Get("/healthz", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, 200, [&] {
      return nlohmann::json{{"status", "ok"},
                            {"sessions", service.session_count()},
                            {"songs", service.catalog().size()}};
    });
  });
  server.Get("/catalog", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 200, [&] { return service.catalog_page(page_param(req)); });
  });
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 201, [&] { return service.create_session(parse_body(req)); });
  });
  server.Get(R"(/sessions/([^/]+)/next)",
             [&](const httplib::Request& req, httplib::Response& res) {
               guarded(res, 200,
                       [&] { return service.next_recommendation(req.matches[1]); });
             });
  server.Post(R"(/sessions/([^/]+)/rating)",
              [&](const httplib::Request& req, httplib::Response& res) {
                guarded(res, 200, [&] {
                  return service.submit_rating(req.matches[1], parse_body(req));
                });
              });
  server.Get(R"(/sessions/([^/]+)/posterior)",
             [&](const httplib::Request& req, httplib::Response& res) {
               guarded(res, 200, [&] {
                 return service.posterior(req.matches[1], page_param(req));
               });
             });
}

}  // namespace bandit_music
