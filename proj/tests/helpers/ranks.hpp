#pragma once

// Runs N ranks as threads against one in-process KV server.

#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "ddppo/distrib/collective.hpp"
#include "ddppo/distrib/kv_store.hpp"

namespace testing {

struct RankOutcome {
  std::exception_ptr error;
  std::string message;
};

inline std::vector<RankOutcome> run_ranks(
    int n, const std::function<void(int, ddppo::distrib::CollectiveHandle&, ddppo::distrib::KvClient&)>& body,
    std::uint64_t layout_hash = 7, ddppo::distrib::CollectiveOptions options = {}) {
  using namespace ddppo::distrib;
  KvServer server;
  std::vector<RankOutcome> out(static_cast<std::size_t>(n));
  std::vector<std::thread> threads;
  for (int r = 0; r < n; ++r) {
    threads.emplace_back([&, r] {
      try {
        KvClient kv(server.address());
        WorkerGroup g;
        g.rank = r;
        g.world_size = n;
        g.kv_address = server.address().str();
        auto handle = rendezvous(g, layout_hash, &kv, options);
        body(r, handle, kv);
      } catch (const std::exception& e) {
        out[static_cast<std::size_t>(r)].error = std::current_exception();
        out[static_cast<std::size_t>(r)].message = e.what();
      }
    });
  }
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace testing
