#include "ddppo/distrib/preemption.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "ddppo/common/error.hpp"
#include "ddppo/common/log.hpp"

namespace ddppo::distrib {

void PreemptionPolicy::validate() const {
  if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0)) {
    throw ConfigError("preemption threshold must lie in (0, 1]");
  }
  if (rollout_capacity < 1) throw ConfigError("rollout capacity must be >= 1");
}

int PreemptionPolicy::threshold_count(int world_size) const {
  // Guard against p * N landing a hair above an integer (0.6 * 5 = 3.0000000000000004).
  return static_cast<int>(std::ceil(threshold_fraction * world_size - 1e-9));
}

std::string done_key(std::int64_t iteration) { return "done." + std::to_string(iteration); }

std::int64_t report_rollout_done(KvClient& kv, std::int64_t iteration) { return kv.add(done_key(iteration), 1); }

bool preempt_decision(const PreemptionPolicy& policy, int my_steps, std::int64_t done_count, int world_size) {
  return my_steps >= policy.min_steps() && done_count >= policy.threshold_count(world_size);
}

bool should_preempt(KvClient& kv, std::int64_t iteration, const PreemptionPolicy& policy, int my_steps,
                    int world_size) {
  if (my_steps < policy.min_steps()) return false;
  try {
    const auto count = kv.get_counter(done_key(iteration)).value_or(0);
    return preempt_decision(policy, my_steps, count, world_size);
  } catch (const TransportError& e) {
    log_warn(std::string("preemption poll failed, continuing collection: ") + e.what());
    return false;
  }
}

void barrier(KvClient* kv, const std::string& name, int world_size, Millis timeout) {
  if (world_size == 1) return;
  if (kv == nullptr) throw ConfigError("barrier with world_size > 1 needs a kv store");
  const std::string key = "barrier." + name;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::int64_t count = kv->add(key, 1);
  auto backoff = std::chrono::microseconds(200);
  while (count < world_size) {
    if (std::chrono::steady_clock::now() >= deadline) {
      throw FatalError("barrier '" + name + "' timed out with " + std::to_string(count) + " of " +
                       std::to_string(world_size) + " arrivals");
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, std::chrono::microseconds(5000));
    count = kv->get_counter(key).value_or(0);
  }
}

}  // namespace ddppo::distrib
