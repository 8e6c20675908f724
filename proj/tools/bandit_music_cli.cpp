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

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bandit_music/catalog.hpp"
#include "bandit_music/errors.hpp"
#include "bandit_music/exact_bayes.hpp"
#include "bandit_music/experiment.hpp"
#include "bandit_music/service.hpp"
#include "bandit_music/simulation.hpp"
#include "httplib.h"

namespace fs = std::filesystem;
using namespace bandit_music;

namespace {

httplib::Server* g_server = nullptr;

ExperimentConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  ExperimentConfig config = path.empty() ? desk_scale_config() : ExperimentConfig::load(path);
  if (seed) config.seeds = {*seed};
  return config;
}

void print_finals(const ExperimentResult& result) {
  for (const auto& [name, traces] : result.traces) {
    const auto fr = result.final_regret(name);
    double mean = 0.0;
    for (double v : fr) mean += v;
    std::cout << name << ": mean final regret " << mean / static_cast<double>(fr.size())
              << " over " << fr.size() << " seed(s)\n";
  }
}

// Play counts from the `song` column of run CSVs.
std::vector<double> counts_from_csvs(const std::vector<fs::path>& files) {
  std::map<std::string, double> counts;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw ValidationError("cannot open " + f.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("step,song,", 0) != 0) {
      throw ParseError(f.string() + ": expected a run CSV header");
    }
    int row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string step, song;
      if (!std::getline(fields, step, ',') || !std::getline(fields, song, ',')) {
        throw ParseError(f.string() + ": row " + std::to_string(row) + " is malformed");
      }
      counts[song] += 1.0;
    }
  }
  std::vector<double> v;
  for (const auto& [id, c] : counts) v.push_back(c);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bandit music recommender: simulations, analysis and the session service"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;

  auto* simulate = app.add_subcommand("simulate", "Run one policy on simulated users");
  std::string policy_name;
  simulate->add_option("--config", config_path, "Experiment config JSON");
  simulate->add_option("--out-dir", out_dir, "Output directory");
  simulate->add_option("--seed", seed, "Run only this seed");
  simulate->add_option("--policy", policy_name, "Policy kind (default: first in config)");

  auto* compare = app.add_subcommand("compare", "Run every configured policy and compare regret");
  compare->add_option("--config", config_path, "Experiment config JSON");
  compare->add_option("--out-dir", out_dir, "Output directory");
  compare->add_option("--seed", seed, "Run only this seed");

  auto* zipf = app.add_subcommand("analyze-zipf", "Rank-frequency analysis of run CSVs");
  std::vector<std::string> zipf_inputs;
  zipf->add_option("inputs", zipf_inputs, "Run CSV files or directories")->required();

  auto* pca = app.add_subcommand("fit-pca", "Fit PCA on a feature table");
  std::string pca_input;
  double variance = 0.9;
  pca->add_option("--input", pca_input, "Feature CSV (song_id,title,artist,features...)")
      ->required();
  pca->add_option("--variance", variance, "Cumulative explained variance to keep");
  pca->add_option("--out-dir", out_dir, "Writes pca.json and catalog_reduced.csv");

  auto* serve = app.add_subcommand("serve", "Serve interactive rating sessions over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string catalog_path;
  std::optional<double> serve_pca;
  std::string state_dir;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--catalog", catalog_path, "Feature CSV (synthetic catalog when absent)");
  serve->add_option("--pca-variance", serve_pca, "Project the catalog with PCA first");
  serve->add_option("--config", config_path, "Experiment config supplying policy settings");
  serve->add_option("--state-dir", state_dir, "Session snapshot directory");
  serve->add_option("--seed", seed, "Seed for session ids and default session seeds");

  auto* report = app.add_subcommand("report", "MCMC chain diagnostics on one simulated user");
  int report_n = 100;
  report->add_option("--config", config_path, "Experiment config JSON");
  report->add_option("--seed", seed, "User seed");
  report->add_option("-n", report_n, "Random recommendations to fit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed() || compare->parsed()) {
      ExperimentConfig config = load_config(config_path, seed);
      if (simulate->parsed()) {
        const PolicyKind kind =
            policy_name.empty() ? config.policies.front() : parse_policy_kind(policy_name);
        config.policies = {kind};
      }
      const Catalog catalog = build_catalog(config.catalog);
      const ExperimentResult result = run_experiment(config, catalog);
      write_outputs(out_dir, config, result);
      print_finals(result);
      if (compare->parsed()) {
        const auto summary = summarize(config, result);
        for (const auto& t : summary.at("paired_tests")) {
          std::cout << t.at("worse").get<std::string>() << " > "
                    << t.at("better").get<std::string>()
                    << ": mean difference " << t.at("mean_difference").get<double>()
                    << ", one-sided paired p = " << t.at("p_value").get<double>() << '\n';
        }
      }
      std::cout << "wrote " << (fs::path(out_dir) / "summary.json").string() << '\n';
    } else if (zipf->parsed()) {
      std::vector<fs::path> files;
      for (const auto& in : zipf_inputs) {
        if (fs::is_directory(in)) {
          // An output directory keeps its run files under runs/.
          const fs::path dir = fs::is_directory(fs::path(in) / "runs") ? fs::path(in) / "runs"
                                                                       : fs::path(in);
          for (const auto& e : fs::directory_iterator(dir)) {
            if (e.path().extension() == ".csv") files.push_back(e.path());
          }
        } else {
          files.emplace_back(in);
        }
      }
      std::sort(files.begin(), files.end());
      const ZipfResult z = zipf_from_counts(counts_from_csvs(files));
      nlohmann::json out = {{"files", files.size()},
                            {"distinct_songs", z.frequency.size()},
                            {"slope", z.slope},
                            {"intercept", z.intercept},
                            {"r_squared", z.r_squared},
                            {"degenerate", z.degenerate},
                            {"frequency", z.frequency}};
      std::cout << out.dump(2) << '\n';
    } else if (pca->parsed()) {
      const Catalog raw = load_catalog_file(pca_input);
      const PcaModel model = fit_pca(raw.raw_matrix(), variance);
      fs::create_directories(out_dir);
      std::ofstream(fs::path(out_dir) / "pca.json") << model.to_json().dump(2) << '\n';
      const Catalog reduced = raw.with_projection(model);
      std::vector<SongFeatures> songs = reduced.songs();
      for (auto& s : songs) s.raw = s.reduced;
      std::ofstream table(fs::path(out_dir) / "catalog_reduced.csv");
      write_catalog(table, Catalog(std::move(songs)));
      std::cout << "kept " << model.output_dim() << " of " << model.input_dim()
                << " dimensions, explained variance "
                << model.explained_variance_ratio.sum() << '\n';
    } else if (serve->parsed()) {
      ServiceOptions options;
      if (!config_path.empty()) {
        const ExperimentConfig config = ExperimentConfig::load(config_path);
        options.policy = config.policy;
      }
      Catalog catalog;
      if (catalog_path.empty()) {
        catalog = Catalog::synthetic(200, 10, 7);
      } else {
        catalog = load_catalog_file(catalog_path);
        if (serve_pca) {
          catalog = catalog.with_projection(fit_pca(catalog.raw_matrix(), *serve_pca));
        }
      }
      if (!state_dir.empty()) options.state_dir = state_dir;
      if (seed) options.seed = *seed;
      RecommenderService service(std::move(catalog), std::move(options));
      httplib::Server server;
      register_routes(server, service);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      if (!server.bind_to_port(host, port)) {
        std::cerr << "cannot bind " << host << ':' << port << '\n';
        return 1;
      }
      std::cout << "listening on http://" << host << ':' << port << std::endl;
      server.listen_after_bind();
    } else if (report->parsed()) {
      const ExperimentConfig config = load_config(config_path, seed);
      const Catalog catalog = build_catalog(config.catalog);
      const PolicyConfig pc = resolve_policy_config(config, catalog);
      const std::uint64_t s = config.seeds.front();
      const SimulatedUser user = user_for_seed(s, catalog.dim(), config.sigma_r);
      Policy random(PolicyKind::kRandom, catalog, pc);
      History history;
      run_episode_with(
          user, catalog, report_n, s,
          [&](double now) { return random.select(now).chosen; },
          [&](std::size_t k, double rating, double now) {
            random.record_feedback(catalog[k].song_id, rating, now);
          });
      McmcConfig mc = pc.mcmc;
      mc.seed = s;
      const PosteriorSamples post =
          mcmc_infer(random.history(), catalog.dim(), pc.exact, mc);
      nlohmann::json out = post.summary_json();
      out["true_s"] = user.s_star;
      out["n"] = report_n;
      std::cout << out.dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
