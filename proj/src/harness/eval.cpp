#include "ddppo/harness/eval.hpp"

#include <fstream>

#include "ddppo/common/error.hpp"

namespace ddppo::harness {

using nlohmann::json;

Policy network_policy(nn::NetSpec spec, nn::ParamVector params, bool greedy) {
  nn::check_params(spec, params);
  return [spec = std::move(spec), params = std::move(params), greedy](const envs::NavEnv&,
                                                                      std::span<const double> obs, Rng& rng) {
    const auto out = nn::forward(spec, params, obs);
    return greedy ? nn::greedy_action(out.action_logits) : nn::sample_action(out.action_logits, rng).action;
  };
}

Policy shortest_path_policy() {
  return [](const envs::NavEnv& env, std::span<const double>, Rng&) {
    return static_cast<int>(envs::shortest_path_action(env));
  };
}

Policy stop_policy() {
  return [](const envs::NavEnv&, std::span<const double>, Rng&) { return static_cast<int>(envs::Action::kStop); };
}

void to_json(json& j, const EvalRow& r) {
  j = r.record;
  j["episode"] = r.episode;
  j["sample"] = r.sample;
  j["episode_reward"] = r.episode_reward;
  j["flee_distance"] = r.flee_distance;
  j["visited_blocks"] = r.visited_blocks;
}

void from_json(const json& j, EvalRow& r) {
  r.record = j.get<envs::EpisodeRecord>();
  j.at("episode").get_to(r.episode);
  j.at("sample").get_to(r.sample);
  j.at("episode_reward").get_to(r.episode_reward);
  j.at("flee_distance").get_to(r.flee_distance);
  j.at("visited_blocks").get_to(r.visited_blocks);
}

namespace {

template <typename F>
double mean_of(const std::vector<EvalRow>& rows, F f) {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += f(r);
  return s / static_cast<double>(rows.size());
}

}  // namespace

double EvalReport::success_rate() const {
  return mean_of(rows, [](const EvalRow& r) { return r.record.success ? 1.0 : 0.0; });
}
double EvalReport::mean_spl() const {
  return mean_of(rows, [](const EvalRow& r) { return r.record.spl; });
}
double EvalReport::mean_flee_distance() const {
  return mean_of(rows, [](const EvalRow& r) { return r.flee_distance; });
}
double EvalReport::mean_visited_blocks() const {
  return mean_of(rows, [](const EvalRow& r) { return static_cast<double>(r.visited_blocks); });
}
double EvalReport::mean_reward() const {
  return mean_of(rows, [](const EvalRow& r) { return r.episode_reward; });
}

EvalReport evaluate(const Policy& policy, const EvalOptions& options) {
  if (options.num_maps < 1 || options.num_episodes < 0 || options.samples_per_episode < 1) {
    throw ConfigError("evaluation needs num_maps >= 1, num_episodes >= 0, samples >= 1");
  }
  std::vector<std::shared_ptr<const envs::GridWorld>> maps;
  for (int m = 0; m < options.num_maps; ++m) {
    maps.push_back(std::make_shared<const envs::GridWorld>(
        envs::make_split_map(options.maps, options.split, static_cast<std::size_t>(m))));
  }
  const std::string prefix = options.split == envs::MapSplit::kTrain ? "train-" : "heldout-";
  EvalReport report;
  for (int i = 0; i < options.num_episodes; ++i) {
    const int m = i % options.num_maps;
    Rng episode_rng(derive_seed(options.seed, 0, static_cast<std::uint64_t>(i)));
    envs::NavEnv probe(maps[static_cast<std::size_t>(m)], options.env);
    probe.reset(episode_rng);
    const envs::Episode episode = probe.episode();
    for (int s = 0; s < options.samples_per_episode; ++s) {
      Rng action_rng(derive_seed(options.seed, 1 + static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(i)));
      envs::NavEnv env(maps[static_cast<std::size_t>(m)], options.env, prefix + std::to_string(m));
      auto obs = env.reset_to(episode).to_vector();
      EvalRow row;
      row.episode = i;
      row.sample = s;
      envs::StepResult r;
      do {
        r = env.step(policy(env, obs, action_rng));
        row.episode_reward += r.reward;
        obs = r.obs.to_vector();
      } while (!r.done);
      row.record = envs::EpisodeRecord{env.map_id(),      episode.start,   episode.goal,
                                       episode.shortest_path_len, env.episode().agent_path_len, r.info.success,
                                       r.info.spl,        env.agent().steps_taken};
      row.flee_distance = r.info.flee_distance;
      row.visited_blocks = r.info.visited_count;
      report.rows.push_back(row);
    }
  }
  return report;
}

void write_jsonl(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& r : report.rows) out << json(r).dump() << '\n';
}

EvalReport read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  EvalReport report;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      report.rows.push_back(json::parse(line).get<EvalRow>());
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return report;
}

std::vector<Bin> aggregate_bins(const EvalReport& report, const std::vector<double>& edges) {
  if (report.rows.empty()) throw ConfigError("aggregate_bins: empty report");
  if (edges.size() < 2) throw ConfigError("aggregate_bins: need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw ConfigError("aggregate_bins: edges must be strictly ascending");
  }
  std::vector<Bin> bins(edges.size() - 1);
  std::vector<double> spl(bins.size(), 0.0), success(bins.size(), 0.0);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lo = edges[b];
    bins[b].hi = edges[b + 1];
  }
  for (const auto& r : report.rows) {
    const double l = r.record.shortest_path_len;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      if (l >= bins[b].lo && l < bins[b].hi) {
        ++bins[b].count;
        spl[b] += r.record.spl;
        success[b] += r.record.success ? 1.0 : 0.0;
        break;
      }
    }
  }
  const auto total = static_cast<double>(report.rows.size());
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].fraction = bins[b].count / total;
    if (bins[b].count > 0) {
      bins[b].mean_spl = spl[b] / bins[b].count;
      bins[b].success_rate = success[b] / bins[b].count;
    }
  }
  return bins;
}

json bins_to_json(const std::vector<Bin>& bins) {
  json out = json::array();
  for (const auto& b : bins) {
    out.push_back({{"lo", b.lo},
                   {"hi", b.hi},
                   {"count", b.count},
                   {"fraction", b.fraction},
                   {"mean_spl", b.mean_spl ? json(*b.mean_spl) : json(nullptr)},
                   {"success_rate", b.success_rate ? json(*b.success_rate) : json(nullptr)}});
  }
  return out;
}

}  // namespace ddppo::harness
