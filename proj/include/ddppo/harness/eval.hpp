#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddppo/common/random.hpp"
#include "ddppo/envs/grid.hpp"
#include "ddppo/envs/nav_env.hpp"
#include "ddppo/nn/network.hpp"
#include "json.hpp"

namespace ddppo::harness {

// Chooses an action from the current env and its observation vector.
using Policy = std::function<int(const envs::NavEnv&, std::span<const double>, Rng&)>;

Policy network_policy(nn::NetSpec spec, nn::ParamVector params, bool greedy);
Policy shortest_path_policy();
Policy stop_policy();

struct EvalOptions {
  envs::EnvConfig env;
  envs::MapSetSpec maps;
  envs::MapSplit split = envs::MapSplit::kHeldOut;
  int num_maps = 50;
  int num_episodes = 200;
  int samples_per_episode = 1;
  std::uint64_t seed = 7;
};

struct EvalRow {
  int episode = 0;
  int sample = 0;
  envs::EpisodeRecord record;
  double episode_reward = 0.0;
  double flee_distance = 0.0;  // D_T
  int visited_blocks = 0;
};

void to_json(nlohmann::json& j, const EvalRow& r);
void from_json(const nlohmann::json& j, EvalRow& r);

struct EvalReport {
  std::vector<EvalRow> rows;

  double success_rate() const;
  double mean_spl() const;
  double mean_flee_distance() const;
  double mean_visited_blocks() const;
  double mean_reward() const;
};

// Episode i runs on split map (i mod num_maps); its start and goal depend
// only on (seed, i), so every policy sees the same episodes.
EvalReport evaluate(const Policy& policy, const EvalOptions& options);

void write_jsonl(const std::string& path, const EvalReport& report);
EvalReport read_jsonl(const std::string& path);

struct Bin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double fraction = 0.0;
  std::optional<double> mean_spl;
  std::optional<double> success_rate;
};

// Bins rows by shortest-path length (meters) into [edge_i, edge_i+1).
// Empty bins report fraction 0 and no aggregate. Throws ConfigError on an
// empty report or fewer than 2 ascending edges.
std::vector<Bin> aggregate_bins(const EvalReport& report, const std::vector<double>& edges);

nlohmann::json bins_to_json(const std::vector<Bin>& bins);

}  // namespace ddppo::harness
