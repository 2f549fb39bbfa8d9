#include "ddppo/harness/launcher.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <thread>

#include "ddppo/common/error.hpp"
#include "ddppo/distrib/kv_store.hpp"

extern char** environ;

namespace ddppo::harness {

namespace {

std::string describe_status(int status) {
  if (WIFEXITED(status)) return "exited with status " + std::to_string(WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return "was killed by signal " + std::to_string(WTERMSIG(status));
  return "stopped unexpectedly";
}

void terminate_all(const std::vector<pid_t>& pids, const std::vector<bool>& running) {
  for (std::size_t r = 0; r < pids.size(); ++r) {
    if (running[r]) kill(pids[r], SIGTERM);
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(3);
  std::vector<bool> alive = running;
  while (std::chrono::steady_clock::now() < deadline) {
    bool any = false;
    for (std::size_t r = 0; r < pids.size(); ++r) {
      if (!alive[r]) continue;
      int status = 0;
      if (waitpid(pids[r], &status, WNOHANG) == pids[r]) {
        alive[r] = false;
      } else {
        any = true;
      }
    }
    if (!any) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  for (std::size_t r = 0; r < pids.size(); ++r) {
    if (alive[r]) {
      kill(pids[r], SIGKILL);
      waitpid(pids[r], nullptr, 0);
    }
  }
}

}  // namespace

std::string self_executable() { return std::filesystem::read_symlink("/proc/self/exe").string(); }

LaunchResult launch_workers(const LaunchSpec& spec) {
  if (spec.num_workers < 1) throw ConfigError("num_workers must be >= 1");
  std::unique_ptr<distrib::KvServer> kv;
  if (spec.num_workers > 1) kv = std::make_unique<distrib::KvServer>();

  // Environment: inherited variables minus ours, plus the rank wiring.
  std::vector<std::string> base_env;
  for (char** e = environ; *e; ++e) {
    if (std::strncmp(*e, "DDPPO_", 6) != 0) base_env.emplace_back(*e);
  }

  std::vector<pid_t> pids;
  std::vector<bool> running;
  for (int r = 0; r < spec.num_workers; ++r) {
    std::vector<std::string> env = base_env;
    env.push_back("DDPPO_RANK=" + std::to_string(r));
    env.push_back("DDPPO_WORLD_SIZE=" + std::to_string(spec.num_workers));
    if (kv) env.push_back("DDPPO_KV_ADDR=" + kv->address().str());
    std::vector<char*> envp;
    for (auto& s : env) envp.push_back(s.data());
    envp.push_back(nullptr);

    std::vector<std::string> argv_s{spec.executable};
    argv_s.insert(argv_s.end(), spec.args.begin(), spec.args.end());
    std::vector<char*> argv;
    for (auto& s : argv_s) argv.push_back(s.data());
    argv.push_back(nullptr);

    pid_t pid = 0;
    const int rc = posix_spawn(&pid, spec.executable.c_str(), nullptr, nullptr, argv.data(), envp.data());
    if (rc != 0) {
      terminate_all(pids, running);
      return {127, r, "cannot start worker " + std::to_string(r) + ": " + std::strerror(rc)};
    }
    pids.push_back(pid);
    running.push_back(true);
  }
  if (spec.on_started) spec.on_started(pids);

  const auto start = std::chrono::steady_clock::now();
  int remaining = spec.num_workers;
  while (remaining > 0) {
    int status = 0;
    const pid_t done = waitpid(-1, &status, WNOHANG);
    if (done < 0 && errno != EINTR && errno != ECHILD) {
      terminate_all(pids, running);
      return {1, -1, std::string("waitpid: ") + std::strerror(errno)};
    }
    if (done <= 0) {
      if (spec.timeout.count() > 0 && std::chrono::steady_clock::now() - start > spec.timeout) {
        terminate_all(pids, running);
        return {124, -1, "workers timed out"};
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      continue;
    }
    int rank = -1;
    for (std::size_t r = 0; r < pids.size(); ++r) {
      if (pids[r] == done) rank = static_cast<int>(r);
    }
    if (rank < 0) continue;  // not one of ours
    running[static_cast<std::size_t>(rank)] = false;
    --remaining;
    if (!(WIFEXITED(status) && WEXITSTATUS(status) == 0)) {
      terminate_all(pids, running);
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
      return {code == 0 ? 1 : code, rank, "worker rank " + std::to_string(rank) + " " + describe_status(status)};
    }
  }
  return {0, -1, "all " + std::to_string(spec.num_workers) + " workers finished"};
}

}  // namespace ddppo::harness
