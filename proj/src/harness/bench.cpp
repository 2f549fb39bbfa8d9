#include "ddppo/harness/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "ddppo/common/error.hpp"
#include "ddppo/common/hash.hpp"
#include "ddppo/distrib/preemption.hpp"
#include "ddppo/harness/launcher.hpp"
#include "ddppo/trainer/trainer.hpp"

namespace ddppo::harness {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

json run_bench_worker(const trainer::TrainConfig& config, distrib::CollectiveHandle& collective,
                      distrib::KvClient* kv, int cycles, int warmup) {
  if (cycles <= warmup || warmup < 0) throw ConfigError("bench needs cycles > warmup >= 0");
  const int n = collective.world_size();
  trainer::Worker worker(config, collective, kv);
  std::int64_t steps = 0;
  std::vector<int> lens;
  distrib::barrier(kv, "bench.start", n);
  Clock::time_point t_start = Clock::now();
  for (int c = 0; c < cycles; ++c) {
    if (c == warmup) {
      distrib::barrier(kv, "bench.measure", n);
      t_start = Clock::now();
    }
    const auto stats = worker.run_iteration();
    if (c >= warmup) steps += stats.steps_total;
    lens.insert(lens.end(), stats.rollout_lens.begin(), stats.rollout_lens.end());
  }
  distrib::barrier(kv, "bench.end", n);
  const double seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
  return {{"world_size", n},
          {"p", config.preempt_p},
          {"seed", config.seed},
          {"steps", steps},
          {"seconds", seconds},
          {"steps_per_sec", steps / seconds},
          {"rollout_lens", lens}};
}

std::vector<double> allreduce_check_input(std::uint64_t seed, int rank, std::size_t length) {
  Rng rng(derive_seed(seed, 0x61726564ULL, static_cast<std::uint64_t>(rank)));
  std::vector<double> v(length);
  for (double& x : v) x = rng.normal() * std::pow(10.0, rng.uniform(-3.0, 3.0));
  return v;
}

json run_allreduce_check(distrib::CollectiveHandle& collective, std::size_t length, std::uint64_t seed) {
  const int n = collective.world_size();
  auto v = allreduce_check_input(seed, collective.rank(), length);
  const auto t0 = Clock::now();
  collective.allreduce_mean(std::span<double>(v));
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  const auto hashes = collective.allgather_u64(hash_doubles(v));
  const bool identical = std::all_of(hashes.begin(), hashes.end(), [&](auto h) { return h == hashes[0]; });

  double max_rel = 0.0;
  bool bitwise = true;
  if (collective.rank() == 0) {
    std::vector<double> want(length, 0.0);
    for (int r = 0; r < n; ++r) {
      const auto in = allreduce_check_input(seed, r, length);
      for (std::size_t i = 0; i < length; ++i) want[i] += in[i];
    }
    for (double& x : want) x *= 1.0 / n;
    for (std::size_t i = 0; i < length; ++i) {
      const double denom = std::abs(want[i]);
      const double err = std::abs(v[i] - want[i]);
      max_rel = std::max(max_rel, denom > 0 ? err / denom : err);
      bitwise = bitwise && v[i] == want[i];
    }
  }
  return {{"world_size", n},     {"length", length},       {"identical_across_ranks", identical},
          {"max_rel_err", max_rel}, {"bitwise_equal", bitwise}, {"seconds", seconds}};
}

BootstrapCi bootstrap_mean_ci(const std::vector<double>& values, int resamples, std::uint64_t seed, double level) {
  if (values.empty()) throw ConfigError("bootstrap of an empty sample");
  BootstrapCi ci;
  for (double v : values) ci.mean += v;
  ci.mean /= static_cast<double>(values.size());
  Rng rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[rng.uniform_index(values.size())];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  auto pick = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::clamp(q * (resamples - 1), 0.0, resamples - 1.0));
    return means[idx];
  };
  ci.lo = pick(alpha);
  ci.hi = pick(1.0 - alpha);
  return ci;
}

const BenchCell& BenchReport::cell(int world_size, double p) const {
  for (const auto& c : cells) {
    if (c.world_size == world_size && c.p == p) return c;
  }
  throw ConfigError("no bench cell for N=" + std::to_string(world_size) + ", p=" + std::to_string(p));
}

BenchReport summarize(std::vector<BenchTrial> trials) {
  std::map<std::pair<std::uint64_t, double>, double> baseline;
  for (const auto& t : trials) {
    if (t.world_size == 1) baseline[{t.seed, t.p}] = t.steps_per_sec;
  }
  std::map<std::pair<int, double>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (auto& t : trials) {
    const auto it = baseline.find({t.seed, t.p});
    t.relative = it == baseline.end() ? std::nan("") : t.steps_per_sec / it->second;
    auto& g = groups[{t.world_size, t.p}];
    g.first.push_back(t.steps_per_sec);
    g.second.push_back(t.relative);
  }
  BenchReport report;
  report.trials = std::move(trials);
  for (const auto& [key, g] : groups) {
    BenchCell c;
    c.world_size = key.first;
    c.p = key.second;
    c.steps_per_sec = bootstrap_mean_ci(g.first);
    c.relative = bootstrap_mean_ci(g.second);
    report.cells.push_back(c);
  }
  return report;
}

BenchReport bench_scaling(const BenchOptions& options) {
  if (options.seeds.empty()) throw ConfigError("bench needs at least one seed");
  if (options.executable.empty()) throw ConfigError("bench needs the worker executable");
  const std::filesystem::path dir = options.work_dir.empty() ? std::filesystem::temp_directory_path() / "ddppo_bench"
                                                             : std::filesystem::path(options.work_dir);
  std::filesystem::create_directories(dir);

  std::vector<int> sizes = options.world_sizes;
  if (options.include_single && std::find(sizes.begin(), sizes.end(), 1) == sizes.end()) sizes.insert(sizes.begin(), 1);

  std::vector<BenchTrial> trials;
  for (const auto seed : options.seeds) {
    for (const int n : sizes) {
      for (const double p : options.ps) {
        trainer::TrainConfig cfg = options.base;
        cfg.seed = seed;
        cfg.preempt_p = p;
        cfg.resample_maps = false;
        cfg.out_dir.clear();
        const std::string tag = "n" + std::to_string(n) + "_p" + std::to_string(p) + "_s" + std::to_string(seed);
        const auto cfg_path = dir / ("trial_" + tag + ".json");
        const auto result_path = dir / ("result_" + tag + ".json");
        std::filesystem::remove(result_path);
        std::ofstream(cfg_path) << json(cfg).dump(2) << '\n';

        LaunchSpec spec;
        spec.executable = options.executable;
        spec.args = {"worker",   "--config",      cfg_path.string(),     "--mode",
                     "bench",    "--cycles",      std::to_string(options.cycles),
                     "--warmup", std::to_string(options.warmup), "--result", result_path.string()};
        spec.num_workers = n;
        const auto res = launch_workers(spec);
        if (res.exit_code != 0) throw FatalError("bench trial " + tag + " failed: " + res.message);

        std::ifstream in(result_path);
        const json r = json::parse(in);
        BenchTrial t;
        t.world_size = n;
        t.p = p;
        t.seed = seed;
        t.steps_per_sec = r.at("steps_per_sec").get<double>();
        t.rollout_lens = r.at("rollout_lens").get<std::vector<int>>();
        trials.push_back(std::move(t));
      }
    }
  }
  return summarize(std::move(trials));
}

void write_bench_csv(const std::string& path, const BenchReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "world_size,p,seed,steps_per_sec,relative\n";
  out.precision(10);
  for (const auto& t : report.trials) {
    out << t.world_size << ',' << t.p << ',' << t.seed << ',' << t.steps_per_sec << ',' << t.relative << '\n';
  }
}

json bench_to_json(const BenchReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"world_size", c.world_size},
                     {"p", c.p},
                     {"steps_per_sec", {{"mean", c.steps_per_sec.mean}, {"lo", c.steps_per_sec.lo}, {"hi", c.steps_per_sec.hi}}},
                     {"relative", {{"mean", c.relative.mean}, {"lo", c.relative.lo}, {"hi", c.relative.hi}}}});
  }
  return {{"cells", cells}};
}

}  // namespace ddppo::harness
