// ddppo: launch, worker, bench, eval, agg.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "ddppo/common/error.hpp"
#include "ddppo/distrib/collective.hpp"
#include "ddppo/distrib/kv_store.hpp"
#include "ddppo/harness/bench.hpp"
#include "ddppo/harness/eval.hpp"
#include "ddppo/harness/launcher.hpp"
#include "ddppo/nn/checkpoint.hpp"
#include "ddppo/trainer/config.hpp"
#include "ddppo/trainer/trainer.hpp"

using namespace ddppo;
using nlohmann::json;

namespace {

struct WorkerArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string mode = "train";
  int cycles = 10;
  int warmup = 5;
  std::string result;
  std::size_t length = 1000;
  std::uint64_t seed = 1;
};

void write_json(const std::string& path, const json& j) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  const auto tmp = path + ".tmp";
  std::ofstream(tmp) << j.dump(2) << '\n';
  std::filesystem::rename(tmp, path);
}

int run_worker(const WorkerArgs& a) {
  const auto group = distrib::WorkerGroup::from_env();
  std::unique_ptr<distrib::KvClient> kv;
  if (group.world_size > 1) kv = std::make_unique<distrib::KvClient>(distrib::Address::parse(group.kv_address));
  try {
    if (a.mode == "allreduce") {
      auto handle = distrib::rendezvous(group, 0, kv.get());
      const auto r = harness::run_allreduce_check(handle, a.length, a.seed);
      if (group.rank == 0) write_json(a.result, r);
      return 0;
    }
    const auto cfg = trainer::load_config(a.config, a.overrides);
    auto handle = distrib::rendezvous(group, nn::Layout(cfg.net_spec()).hash(), kv.get());
    try {
      if (a.mode == "train") {
        trainer::Worker w(cfg, handle, kv.get());
        w.train();
      } else if (a.mode == "bench") {
        const auto r = harness::run_bench_worker(cfg, handle, kv.get(), a.cycles, a.warmup);
        if (group.rank == 0) write_json(a.result, r);
      } else {
        throw ConfigError("unknown worker mode '" + a.mode + "'");
      }
    } catch (...) {
      handle.abort();
      throw;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "rank %d: %s\n", group.rank, e.what());
    return 1;
  }
  return 0;
}

int run_launch(const std::string& config_path, const std::vector<std::string>& overrides, int n, int timeout_s) {
  auto cfg = trainer::load_config(config_path, overrides);
  std::filesystem::path resolved;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    resolved = std::filesystem::path(cfg.out_dir) / "config.json";
  } else {
    resolved = std::filesystem::temp_directory_path() / ("ddppo_config_" + std::to_string(::getpid()) + ".json");
  }
  std::ofstream(resolved) << json(cfg).dump(2) << '\n';
  harness::LaunchSpec spec;
  spec.executable = harness::self_executable();
  spec.args = {"worker", "--config", resolved.string()};
  spec.num_workers = n;
  spec.timeout = std::chrono::seconds(timeout_s);
  const auto res = harness::launch_workers(spec);
  if (res.exit_code != 0) {
    std::fprintf(stderr, "launch failed: %s\n", res.message.c_str());
  } else {
    std::fprintf(stderr, "%s\n", res.message.c_str());
  }
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized distributed PPO on grid navigation tasks"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;

  auto* launch = app.add_subcommand("launch", "train with N local worker processes");
  int num_workers = 1;
  int timeout_s = 0;
  launch->add_option("-c,--config", config, "JSON config file");
  launch->add_option("-n,--num-workers", num_workers, "worker processes")->check(CLI::PositiveNumber);
  launch->add_option("-s,--set", overrides, "key=value override (repeatable)");
  launch->add_option("--timeout", timeout_s, "seconds before workers are killed (0 = none)");

  auto* worker = app.add_subcommand("worker", "internal: one worker, wired by DDPPO_* env vars");
  WorkerArgs wa;
  worker->add_option("-c,--config", wa.config);
  worker->add_option("-s,--set", wa.overrides);
  worker->add_option("--mode", wa.mode)->check(CLI::IsMember({"train", "bench", "allreduce"}));
  worker->add_option("--cycles", wa.cycles);
  worker->add_option("--warmup", wa.warmup);
  worker->add_option("--result", wa.result);
  worker->add_option("--length", wa.length);
  worker->add_option("--seed", wa.seed);

  auto* bench = app.add_subcommand("bench", "scaling benchmark over world sizes and thresholds");
  std::vector<int> world_sizes{1, 2, 4};
  std::vector<double> ps{0.6, 1.0};
  int num_seeds = 10;
  int cycles = 10, warmup = 5;
  std::string csv = "bench.csv", summary, work_dir;
  bench->add_option("-c,--config", config);
  bench->add_option("-s,--set", overrides);
  bench->add_option("--world-sizes", world_sizes)->delimiter(',');
  bench->add_option("--p", ps)->delimiter(',');
  bench->add_option("--seeds", num_seeds, "seeds 1..n, shared by every cell");
  bench->add_option("--cycles", cycles);
  bench->add_option("--warmup", warmup);
  bench->add_option("--csv", csv);
  bench->add_option("--summary", summary, "JSON with bootstrap CIs");
  bench->add_option("--work-dir", work_dir);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (or a scripted policy)");
  std::string checkpoint, split = "heldout", out, policy = "network";
  int episodes = 200, maps = 50, samples = 1;
  bool stochastic = false;
  std::uint64_t eval_seed = 7;
  eval->add_option("--checkpoint", checkpoint);
  eval->add_option("-c,--config", config, "env and map settings");
  eval->add_option("-s,--set", overrides);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "heldout"}));
  eval->add_option("--episodes", episodes);
  eval->add_option("--maps", maps);
  eval->add_option("--samples", samples, "stochastic repeats per episode");
  eval->add_flag("--sample", stochastic, "sample actions instead of argmax");
  eval->add_option("--seed", eval_seed);
  eval->add_option("--policy", policy)->check(CLI::IsMember({"network", "oracle", "stop"}));
  eval->add_option("-o,--out", out, "per-episode JSONL");

  auto* agg = app.add_subcommand("agg", "bin evaluation rows by geodesic distance");
  std::string input;
  std::vector<double> edges{0, 1, 2, 3, 4, 5, 10};
  agg->add_option("-i,--input", input)->required();
  agg->add_option("--edges", edges, "bin edges in meters")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*worker) return run_worker(wa);
    if (*launch) return run_launch(config, overrides, num_workers, timeout_s);
    if (*bench) {
      harness::BenchOptions opt;
      opt.base = trainer::load_config(config, overrides);
      opt.world_sizes = world_sizes;
      opt.ps = ps;
      for (int s = 1; s <= num_seeds; ++s) opt.seeds.push_back(static_cast<std::uint64_t>(s));
      opt.cycles = cycles;
      opt.warmup = warmup;
      opt.executable = harness::self_executable();
      opt.work_dir = work_dir;
      const auto report = harness::bench_scaling(opt);
      harness::write_bench_csv(csv, report);
      write_json(summary, harness::bench_to_json(report));
      return 0;
    }
    if (*eval) {
      const auto cfg = trainer::load_config(config, overrides);
      harness::EvalOptions opt;
      opt.env = cfg.env;
      opt.maps = cfg.maps;
      opt.split = split == "train" ? envs::MapSplit::kTrain : envs::MapSplit::kHeldOut;
      opt.num_maps = maps;
      opt.num_episodes = episodes;
      opt.samples_per_episode = samples;
      opt.seed = eval_seed;
      harness::Policy pol;
      if (policy == "oracle") {
        pol = harness::shortest_path_policy();
      } else if (policy == "stop") {
        pol = harness::stop_policy();
      } else {
        if (checkpoint.empty()) throw ConfigError("--checkpoint is required for the network policy");
        auto ck = nn::load_checkpoint(checkpoint, cfg.net_spec());
        pol = harness::network_policy(ck.spec, std::move(ck.params), !stochastic);
      }
      const auto report = harness::evaluate(pol, opt);
      if (!out.empty()) harness::write_jsonl(out, report);
      write_json("", {{"episodes", report.rows.size()},
                      {"success", report.success_rate()},
                      {"spl", report.mean_spl()},
                      {"flee_distance", report.mean_flee_distance()},
                      {"visited_blocks", report.mean_visited_blocks()},
                      {"reward", report.mean_reward()}});
      return 0;
    }
    if (*agg) {
      const auto report = harness::read_jsonl(input);
      write_json("", harness::bins_to_json(harness::aggregate_bins(report, edges)));
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
