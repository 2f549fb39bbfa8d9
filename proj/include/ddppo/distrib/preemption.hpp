#pragma once

#include <cstdint>
#include <string>

#include "ddppo/distrib/kv_store.hpp"

namespace ddppo::distrib {

struct PreemptionPolicy {
  double threshold_fraction = 0.6;  // p in (0, 1]
  int rollout_capacity = 128;       // T

  void validate() const;
  int min_steps() const { return (rollout_capacity + 3) / 4; }
  // ceil(p * N) finishers trigger preemption.
  int threshold_count(int world_size) const;
};

std::string done_key(std::int64_t iteration);

// Called once per iteration by a worker that collected a full rollout.
std::int64_t report_rollout_done(KvClient& kv, std::int64_t iteration);

// Non-blocking poll. Store failures are logged and read as "not yet".
bool should_preempt(KvClient& kv, std::int64_t iteration, const PreemptionPolicy& policy, int my_steps,
                    int world_size);

// Decision rule without the store.
bool preempt_decision(const PreemptionPolicy& policy, int my_steps, std::int64_t done_count, int world_size);

// Arrival counter plus polling. Throws FatalError on timeout.
void barrier(KvClient* kv, const std::string& name, int world_size, Millis timeout = Millis(60000));

}  // namespace ddppo::distrib
