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

#include "bandit_music/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "bandit_music/errors.hpp"
#include "bandit_music/stats.hpp"

namespace bandit_music {
namespace {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.precision(17);
  return out;
}

}  // namespace

ExperimentConfig desk_scale_config() {
  ExperimentConfig c;
  c.catalog = CatalogSpec{};
  c.policies = {PolicyKind::kRandom, PolicyKind::kGreedyCn, PolicyKind::kLinUcbC,
                PolicyKind::kLinUcbCn, PolicyKind::kBayesUcbCnV};
  c.n = 200;
  for (std::uint64_t s = 1; s <= 10; ++s) c.seeds.push_back(s);
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c = desk_scale_config();
  try {
    if (j.contains("catalog")) {
      const auto& cat = j.at("catalog");
      if (cat.contains("synthetic")) {
        const auto& syn = cat.at("synthetic");
        read_if(syn, "songs", c.catalog.songs);
        read_if(syn, "p", c.catalog.p);
        read_if(syn, "seed", c.catalog.seed);
      }
      read_if(cat, "path", c.catalog.path);
      if (cat.contains("pca_variance")) {
        c.catalog.pca_variance = cat.at("pca_variance").get<double>();
      }
    }
    if (j.contains("policies")) {
      c.policies.clear();
      for (const auto& name : j.at("policies")) {
        c.policies.push_back(parse_policy_kind(name.get<std::string>()));
      }
    }
    read_if(j, "n", c.n);
    read_if(j, "seeds", c.seeds);
    read_if(j, "sigma_r", c.sigma_r);
    read_if(j, "threads", c.threads);

    nlohmann::json pol = nlohmann::json::object();
    for (const char* key : {"knots", "mcmc", "vi", "linucb", "greedy",
                            "predictive_samples"}) {
      if (j.contains(key)) pol[key] = j.at(key);
    }
    if (j.contains("priors")) {
      const auto& pr = j.at("priors");
      if (pr.contains("exact")) pol["exact"] = pr.at("exact");
      if (pr.contains("approx")) {
        const auto& a = pr.at("approx");
        if (a.contains("d0") && a.at("d0").is_number()) {
          ApproxScales sc;
          read_if(a, "d0", sc.d0);
          read_if(a, "e0", sc.e0);
          read_if(a, "a0", sc.a0);
          read_if(a, "b0", sc.b0);
          c.approx_scales = sc;
        } else {
          pol["approx"] = a;
        }
      }
    }
    c.policy = PolicyConfig::from_json(pol);
    if (j.contains("uncertainty_every")) {
      c.episode.uncertainty_every = j.at("uncertainty_every").get<int>();
    }
    if (j.contains("clock")) {
      const auto& ck = j.at("clock");
      read_if(ck, "per_rec_seconds", c.episode.clock.per_rec_seconds);
      read_if(ck, "recs_per_session", c.episode.clock.recs_per_session);
      read_if(ck, "gap_minutes", c.episode.clock.gap_minutes);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  if (c.n < 1) throw ValidationError("experiment config: n must be at least 1");
  if (c.seeds.empty()) throw ValidationError("experiment config: no seeds");
  if (c.policies.empty()) throw ValidationError("experiment config: no policies");
  if (!(c.sigma_r >= 0.0)) throw ValidationError("experiment config: sigma_r < 0");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = policy.to_json();
  nlohmann::json cat;
  if (catalog.path.empty()) {
    cat["synthetic"] = {{"songs", catalog.songs}, {"p", catalog.p}, {"seed", catalog.seed}};
  } else {
    cat["path"] = catalog.path;
    if (catalog.pca_variance) cat["pca_variance"] = *catalog.pca_variance;
  }
  j["catalog"] = cat;
  nlohmann::json names = nlohmann::json::array();
  for (auto k : policies) names.push_back(std::string(to_string(k)));
  j["policies"] = names;
  j["n"] = n;
  j["seeds"] = seeds;
  j["sigma_r"] = sigma_r;
  j["threads"] = threads;
  j["priors"] = {{"exact", j.at("exact")}};
  j.erase("exact");
  if (j.contains("approx")) {
    j["priors"]["approx"] = j.at("approx");
    j.erase("approx");
  } else if (approx_scales) {
    j["priors"]["approx"] = {{"d0", approx_scales->d0},
                             {"e0", approx_scales->e0},
                             {"a0", approx_scales->a0},
                             {"b0", approx_scales->b0}};
  }
  j["uncertainty_every"] = episode.uncertainty_every;
  j["clock"] = {{"per_rec_seconds", episode.clock.per_rec_seconds},
                {"recs_per_session", episode.clock.recs_per_session},
                {"gap_minutes", episode.clock.gap_minutes}};
  j.erase("seed");
  return j;
}

Catalog build_catalog(const CatalogSpec& spec) {
  if (spec.path.empty()) return Catalog::synthetic(spec.songs, spec.p, spec.seed);
  Catalog raw = load_catalog_file(spec.path);
  if (!spec.pca_variance) return raw;
  return raw.with_projection(fit_pca(raw.raw_matrix(), *spec.pca_variance));
}

PolicyConfig resolve_policy_config(const ExperimentConfig& config,
                                   const Catalog& catalog) {
  PolicyConfig pc = config.policy;
  if (config.approx_scales && pc.approx.d0.size() == 0) {
    const auto& sc = *config.approx_scales;
    pc.approx = ApproxPriors::isotropic(catalog.dim(), pc.knots.basis_size(),
                                        sc.d0, sc.e0, sc.a0, sc.b0);
  }
  return pc;
}

SimulatedUser user_for_seed(std::uint64_t seed, int p, double sigma_r) {
  Rng rng(derive_seed(seed, {0x75736572ULL}));
  return sample_user(rng, p, sigma_r);
}

std::vector<double> ExperimentResult::final_regret(const std::string& policy) const {
  const auto it = traces.find(policy);
  if (it == traces.end()) throw NotFoundError("no results for policy " + policy);
  std::vector<double> out;
  for (const auto& t : it->second) {
    const auto curve = regret(t);
    out.push_back(curve.empty() ? 0.0 : curve.back());
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const Catalog& catalog) {
  const PolicyConfig pc = resolve_policy_config(config, catalog);
  struct Job {
    PolicyKind kind;
    std::size_t seed_index;
  };
  std::vector<Job> jobs;
  ExperimentResult result;
  for (auto kind : config.policies) {
    result.traces[std::string(to_string(kind))].resize(config.seeds.size());
    for (std::size_t i = 0; i < config.seeds.size(); ++i) jobs.push_back({kind, i});
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const auto& job = jobs[j];
        const auto seed = config.seeds[job.seed_index];
        const auto user = user_for_seed(seed, catalog.dim(), config.sigma_r);
        auto trace = run_episode(job.kind, user, catalog, config.n, seed, pc,
                                 config.episode);
        result.traces.at(std::string(to_string(job.kind)))[job.seed_index] =
            std::move(trace);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

PairedComparison compare_final_regret(const ExperimentResult& result,
                                      const std::string& worse,
                                      const std::string& better) {
  const auto a = result.final_regret(worse);
  const auto b = result.final_regret(better);
  PairedComparison c;
  c.worse = worse;
  c.better = better;
  c.mean_difference = sample_mean(a) - sample_mean(b);
  c.p_value = paired_t_test_greater(a, b);
  return c;
}

nlohmann::json summarize(const ExperimentConfig& config,
                         const ExperimentResult& result) {
  nlohmann::json policies = nlohmann::json::object();
  for (const auto& [name, traces] : result.traces) {
    const auto fr = result.final_regret(name);
    const auto pooled = zipf_pooled(traces);
    std::vector<double> slopes, r2;
    for (const auto& t : traces) {
      const auto z = zipf_analysis(t);
      slopes.push_back(z.slope);
      r2.push_back(z.r_squared);
    }
    nlohmann::json entry = {
        {"final_regret", fr},
        {"final_regret_mean", sample_mean(fr)},
        {"final_regret_stderr",
         sample_sd(fr) / std::sqrt(static_cast<double>(fr.size()))},
        {"zipf",
         {{"slope", slopes},
          {"r_squared", r2},
          {"mean_slope", sample_mean(slopes)},
          {"mean_r_squared", sample_mean(r2)},
          {"pooled_slope", pooled.slope},
          {"pooled_r_squared", pooled.r_squared}}}};
    if (config.episode.uncertainty_every > 0) {
      nlohmann::json unc = nlohmann::json::object();
      const auto& first = traces.front().records;
      for (std::size_t i = 0; i < first.size(); ++i) {
        if (std::isnan(first[i].uncertainty)) continue;
        double total = 0.0;
        for (const auto& t : traces) total += t.records[i].uncertainty;
        unc[std::to_string(first[i].step)] = total / static_cast<double>(traces.size());
      }
      entry["mean_uncertainty"] = unc;
    }
    policies[name] = entry;
  }
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& [worse, better] :
       {std::pair{"random", "linucb_c"}, std::pair{"greedy_cn", "bayes_ucb_cn_v"}}) {
    if (result.traces.count(worse) && result.traces.count(better) &&
        config.seeds.size() >= 2) {
      const auto c = compare_final_regret(result, worse, better);
      tests.push_back({{"worse", c.worse},
                       {"better", c.better},
                       {"mean_difference", c.mean_difference},
                       {"p_value", c.p_value}});
    }
  }
  return {{"config", config.to_json()}, {"policies", policies}, {"paired_tests", tests}};
}

void write_outputs(const std::filesystem::path& out_dir,
                   const ExperimentConfig& config, const ExperimentResult& result) {
  std::filesystem::create_directories(out_dir / "runs");
  for (const auto& [name, traces] : result.traces) {
    for (const auto& t : traces) {
      auto out = open_output(out_dir / "runs" /
                             (name + "_seed" + std::to_string(t.seed) + ".csv"));
      out << "step,song,rating,regret,t_raw,true_u,best_u,uncertainty\n";
      const auto curve = regret(t);
      for (std::size_t i = 0; i < t.records.size(); ++i) {
        const auto& r = t.records[i];
        out << r.step << ',' << r.song_id << ',' << r.rating << ',' << curve[i]
            << ',' << r.t_raw << ',' << r.true_u << ',' << r.best_u << ',';
        if (!std::isnan(r.uncertainty)) out << r.uncertainty;
        out << '\n';
      }
    }
  }
  auto agg = open_output(out_dir / "aggregate.csv");
  agg << "policy,step,mean,stderr\n";
  for (const auto& [name, traces] : result.traces) {
    std::vector<std::vector<double>> curves;
    for (const auto& t : traces) curves.push_back(regret(t));
    for (std::size_t i = 0; i < static_cast<std::size_t>(config.n); ++i) {
      std::vector<double> v;
      for (const auto& c : curves) v.push_back(c[i]);
      agg << name << ',' << i + 1 << ',' << sample_mean(v) << ','
          << sample_sd(v) / std::sqrt(static_cast<double>(v.size())) << '\n';
    }
  }
  auto summary = open_output(out_dir / "summary.json");
  summary << summarize(config, result).dump(2) << '\n';
}

}  // namespace bandit_music
