#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddppo/distrib/collective.hpp"
#include "ddppo/distrib/kv_store.hpp"
#include "ddppo/trainer/config.hpp"
#include "json.hpp"

namespace ddppo::harness {

// Worker side of one benchmark trial: `cycles` collect+optimize iterations,
// throughput over the cycles after `warmup`, timed by group wall-clock
// between barriers. Returns rank 0's measurement (other ranks return the
// same step counts).
nlohmann::json run_bench_worker(const trainer::TrainConfig& config, distrib::CollectiveHandle& collective,
                                distrib::KvClient* kv, int cycles, int warmup);

// Each rank reduces a random vector of `length` elements; rank 0 compares
// against the serially computed rank-ordered mean.
nlohmann::json run_allreduce_check(distrib::CollectiveHandle& collective, std::size_t length, std::uint64_t seed);
std::vector<double> allreduce_check_input(std::uint64_t seed, int rank, std::size_t length);

struct BootstrapCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap of the mean.
BootstrapCi bootstrap_mean_ci(const std::vector<double>& values, int resamples = 10000, std::uint64_t seed = 1,
                              double level = 0.95);

struct BenchTrial {
  int world_size = 1;
  double p = 1.0;
  std::uint64_t seed = 0;
  double steps_per_sec = 0.0;
  double relative = 0.0;  // vs the N=1 trial with the same seed and p
  std::vector<int> rollout_lens;
};

struct BenchCell {
  int world_size = 1;
  double p = 1.0;
  BootstrapCi steps_per_sec;
  BootstrapCi relative;
};

struct BenchOptions {
  trainer::TrainConfig base;
  std::vector<int> world_sizes{1, 2, 4};
  std::vector<double> ps{0.6, 1.0};
  std::vector<std::uint64_t> seeds;
  int cycles = 10;
  int warmup = 5;
  std::string executable;  // the ddppo tool
  std::string work_dir;
  bool include_single = true;  // add N=1 trials as the relative-throughput baseline
};

struct BenchReport {
  std::vector<BenchTrial> trials;
  std::vector<BenchCell> cells;

  const BenchCell& cell(int world_size, double p) const;
};

// Seeds are shared by every (N, p) cell so comparisons are paired.
BenchReport bench_scaling(const BenchOptions& options);
BenchReport summarize(std::vector<BenchTrial> trials);

// Columns: world_size, p, seed, steps_per_sec, relative.
void write_bench_csv(const std::string& path, const BenchReport& report);
nlohmann::json bench_to_json(const BenchReport& report);

}  // namespace ddppo::harness
