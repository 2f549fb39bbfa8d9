#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddppo/distrib/kv_store.hpp"
#include "ddppo/distrib/socket.hpp"

namespace ddppo::distrib {

struct WorkerGroup {
  int rank = 0;
  int world_size = 1;
  // Optional fixed ring addresses, one per rank. When empty, each worker
  // binds an ephemeral port and publishes it through the store.
  std::vector<std::string> peer_addresses;
  std::string kv_address;

  void validate() const;
  // DDPPO_RANK, DDPPO_WORLD_SIZE, DDPPO_KV_ADDR, DDPPO_PEER_ADDRS (comma separated).
  static WorkerGroup from_env();
};

struct CollectiveOptions {
  Millis rendezvous_timeout{60000};
  Millis op_timeout{600000};
  std::string bind_host = "127.0.0.1";
};

// Ring of TCP links between ranks (rank i sends to i+1 mod N, receives
// from i-1 mod N). Collectives are blocking and must be issued by every
// rank in the same order.
class CollectiveHandle {
 public:
  CollectiveHandle(int rank, int world_size, Socket to_next, Socket from_prev, Millis op_timeout);
  static CollectiveHandle solo();

  int rank() const { return rank_; }
  int world_size() const { return world_size_; }

  // Pipelined reduce then broadcast of ceil(len/N) chunks around the ring.
  // Each element is summed in ascending rank order; every rank ends with
  // bitwise-identical output.
  void allreduce_sum(std::span<double> values);
  void allreduce_mean(std::span<double> values);
  std::vector<double> allreduce_mean(const std::vector<double>& values);
  // out[r] = value contributed by rank r.
  std::vector<std::uint64_t> allgather_u64(std::uint64_t value);

  // Number of frames sent or received on the ring.
  std::uint64_t transport_calls() const { return transport_calls_; }

  // Closes both links so peers blocked on this rank fail fast.
  void abort();

 private:
  void exchange(const Bytes& out, Bytes& in);
  void send_next(const Bytes& out);
  void recv_prev(Bytes& in);
  void reduce_ring(std::span<double> values, double scale);

  int rank_ = 0;
  int world_size_ = 1;
  Socket next_;
  Socket prev_;
  std::uint64_t transport_calls_ = 0;
};

// Claims the rank, checks world size and layout hash agreement, publishes
// the ring address and connects the ring. Returns once all N ranks have
// arrived. N = 1 returns a solo handle without touching the store.
CollectiveHandle rendezvous(const WorkerGroup& group, std::uint64_t layout_hash, KvClient* kv,
                            const CollectiveOptions& options = {});

// Chunk c of a length-len vector split N ways: [begin, end).
std::pair<std::size_t, std::size_t> ring_chunk(std::size_t len, int world_size, int c);

}  // namespace ddppo::distrib
