#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <sys/types.h>
#include <vector>

namespace ddppo::harness {

struct LaunchSpec {
  std::string executable;
  std::vector<std::string> args;  // passed to every worker after argv[0]
  int num_workers = 1;
  std::chrono::milliseconds timeout{0};  // 0 = none
  // Called once all workers are spawned, with pids indexed by rank.
  std::function<void(const std::vector<pid_t>&)> on_started;
};

struct LaunchResult {
  int exit_code = 0;     // 0 when every worker succeeded
  int failed_rank = -1;  // first worker to fail
  std::string message;
};

// Starts an in-process KV server, spawns one process per rank with
// DDPPO_RANK, DDPPO_WORLD_SIZE and DDPPO_KV_ADDR set, and waits. On the first
// failure the remaining workers are terminated.
LaunchResult launch_workers(const LaunchSpec& spec);

// Path of the running executable.
std::string self_executable();

}  // namespace ddppo::harness
