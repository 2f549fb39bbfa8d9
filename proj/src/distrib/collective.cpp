#include "ddppo/distrib/collective.hpp"

#include <chrono>
#include <cstdlib>
#include <exception>
#include <sstream>
#include <thread>

#include "ddppo/common/error.hpp"

namespace ddppo::distrib {

namespace {

constexpr std::uint32_t kHelloMagic = 0x52494e47;  // "RING"

std::string rank_key(const char* prefix, int rank) { return std::string(prefix) + ".r" + std::to_string(rank); }

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

const char* env_or_null(const char* name) {
  const char* v = std::getenv(name);
  return (v && *v) ? v : nullptr;
}

int parse_int_env(const char* name, const char* v) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(name);
    return x;
  } catch (const std::logic_error&) {
    throw ConfigError(std::string(name) + "='" + v + "' is not an integer");
  }
}

}  // namespace

void WorkerGroup::validate() const {
  if (world_size < 1) throw ConfigError("world_size must be >= 1");
  if (rank < 0 || rank >= world_size) {
    throw ConfigError("rank " + std::to_string(rank) + " outside [0, " + std::to_string(world_size) + ")");
  }
  if (!peer_addresses.empty() && static_cast<int>(peer_addresses.size()) != world_size) {
    throw ConfigError("peer address list has " + std::to_string(peer_addresses.size()) +
                      " entries for world size " + std::to_string(world_size));
  }
  if (world_size > 1 && kv_address.empty()) throw ConfigError("world_size > 1 requires a kv address");
}

WorkerGroup WorkerGroup::from_env() {
  WorkerGroup g;
  if (const char* v = env_or_null("DDPPO_RANK")) g.rank = parse_int_env("DDPPO_RANK", v);
  if (const char* v = env_or_null("DDPPO_WORLD_SIZE")) g.world_size = parse_int_env("DDPPO_WORLD_SIZE", v);
  if (const char* v = env_or_null("DDPPO_KV_ADDR")) g.kv_address = v;
  if (const char* v = env_or_null("DDPPO_PEER_ADDRS")) {
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) g.peer_addresses.push_back(item);
    }
  }
  g.validate();
  return g;
}

std::pair<std::size_t, std::size_t> ring_chunk(std::size_t len, int world_size, int c) {
  const auto n = static_cast<std::size_t>(world_size);
  const std::size_t size = (len + n - 1) / n;
  const std::size_t begin = std::min(len, size * static_cast<std::size_t>(c));
  return {begin, std::min(len, begin + size)};
}

CollectiveHandle::CollectiveHandle(int rank, int world_size, Socket to_next, Socket from_prev, Millis op_timeout)
    : rank_(rank), world_size_(world_size), next_(std::move(to_next)), prev_(std::move(from_prev)) {
  if (prev_.valid()) prev_.set_recv_timeout(op_timeout);
}

CollectiveHandle CollectiveHandle::solo() { return CollectiveHandle(0, 1, Socket(), Socket(), Millis(0)); }

void CollectiveHandle::abort() {
  next_.shutdown();
  prev_.shutdown();
}

void CollectiveHandle::exchange(const Bytes& out, Bytes& in) {
  const int next = (rank_ + 1) % world_size_;
  const int prev = (rank_ + world_size_ - 1) % world_size_;
  std::exception_ptr send_error;
  std::thread sender([&] {
    try {
      next_.send_frame(out);
    } catch (...) {
      send_error = std::current_exception();
    }
  });
  try {
    in = prev_.recv_frame();
  } catch (const TransportError& e) {
    next_.shutdown();
    sender.join();
    throw FatalError("ring link from rank " + std::to_string(prev) + " lost: " + e.what());
  }
  sender.join();
  transport_calls_ += 2;
  if (send_error) {
    try {
      std::rethrow_exception(send_error);
    } catch (const TransportError& e) {
      throw FatalError("ring link to rank " + std::to_string(next) + " lost: " + e.what());
    }
  }
}

namespace {

void encode_chunk(std::span<const double> values, int n, int c, Bytes& out) {
  const auto [b, e] = ring_chunk(values.size(), n, c);
  out.clear();
  out.reserve(4 + 8 * (e - b));
  ByteWriter w(out);
  w.put_le(static_cast<std::uint32_t>(c));
  for (std::size_t i = b; i < e; ++i) w.put_f64(values[i]);
}

// Returns false when the frame does not carry chunk c.
bool decode_chunk(const Bytes& in, std::span<double> values, int n, int c, bool accumulate) {
  const auto [b, e] = ring_chunk(values.size(), n, c);
  ByteReader rd(in);
  if (rd.remaining() < 4 || static_cast<int>(rd.get_le<std::uint32_t>()) != c || rd.remaining() != 8 * (e - b)) {
    return false;
  }
  for (std::size_t i = b; i < e; ++i) values[i] = accumulate ? rd.get_f64() + values[i] : rd.get_f64();
  return true;
}

}  // namespace

void CollectiveHandle::send_next(const Bytes& out) {
  try {
    next_.send_frame(out);
  } catch (const TransportError& e) {
    throw FatalError("ring link to rank " + std::to_string((rank_ + 1) % world_size_) + " lost: " + e.what());
  }
  ++transport_calls_;
}

void CollectiveHandle::recv_prev(Bytes& in) {
  try {
    in = prev_.recv_frame();
  } catch (const TransportError& e) {
    next_.shutdown();
    throw FatalError("ring link from rank " + std::to_string((rank_ + world_size_ - 1) % world_size_) +
                     " lost: " + e.what());
  }
  ++transport_calls_;
}

void CollectiveHandle::reduce_ring(std::span<double> values, double scale) {
  const int n = world_size_;
  const int r = rank_;
  const int last = n - 1;

  // Length handshake with the neighbors.
  Bytes out, in;
  ByteWriter(out).put_le(static_cast<std::uint64_t>(values.size()));
  exchange(out, in);
  const auto prev_len = ByteReader(in).get_le<std::uint64_t>();
  if (prev_len != values.size()) {
    abort();
    throw ProtocolError("allreduce length mismatch: rank " + std::to_string(r) + " has " +
                        std::to_string(values.size()) + ", rank " + std::to_string((r + n - 1) % n) + " has " +
                        std::to_string(prev_len));
  }

  // Reduce: chunks stream 0 -> 1 -> ... -> N-1 along the ring, each rank
  // adding its own values, so every element is summed in ascending rank order.
  for (int c = 0; c < n; ++c) {
    if (r > 0) {
      recv_prev(in);
      if (!decode_chunk(in, values, n, c, true)) {
        abort();
        throw ProtocolError("unexpected ring chunk in reduce phase");
      }
    }
    if (r < last) {
      encode_chunk(values, n, c, out);
      send_next(out);
    } else if (scale != 1.0) {
      const auto [b, e] = ring_chunk(values.size(), n, c);
      for (std::size_t i = b; i < e; ++i) values[i] *= scale;
    }
  }

  // Broadcast: N-1 -> 0 -> 1 -> ... -> N-2.
  for (int c = 0; c < n; ++c) {
    if (r != last) {
      recv_prev(in);
      if (!decode_chunk(in, values, n, c, false)) {
        abort();
        throw ProtocolError("unexpected ring chunk in broadcast phase");
      }
    }
    if (r != n - 2) {
      encode_chunk(values, n, c, out);
      send_next(out);
    }
  }
}

void CollectiveHandle::allreduce_sum(std::span<double> values) {
  if (world_size_ == 1) return;
  reduce_ring(values, 1.0);
}

void CollectiveHandle::allreduce_mean(std::span<double> values) {
  if (world_size_ == 1) return;
  reduce_ring(values, 1.0 / world_size_);
}

std::vector<double> CollectiveHandle::allreduce_mean(const std::vector<double>& values) {
  std::vector<double> out = values;
  allreduce_mean(std::span<double>(out));
  return out;
}

std::vector<std::uint64_t> CollectiveHandle::allgather_u64(std::uint64_t value) {
  if (world_size_ == 1) return {value};
  // One-hot 16-bit limbs: every partial sum is an exact small integer.
  std::vector<double> slots(4 * static_cast<std::size_t>(world_size_), 0.0);
  for (int k = 0; k < 4; ++k) {
    slots[4 * static_cast<std::size_t>(rank_) + k] = static_cast<double>((value >> (16 * k)) & 0xffff);
  }
  allreduce_sum(slots);
  std::vector<std::uint64_t> out(static_cast<std::size_t>(world_size_), 0);
  for (std::size_t r = 0; r < out.size(); ++r) {
    for (int k = 0; k < 4; ++k) out[r] |= static_cast<std::uint64_t>(slots[4 * r + k]) << (16 * k);
  }
  return out;
}

CollectiveHandle rendezvous(const WorkerGroup& group, std::uint64_t layout_hash, KvClient* kv,
                            const CollectiveOptions& options) {
  group.validate();
  const int n = group.world_size;
  const int rank = group.rank;
  if (n == 1) return CollectiveHandle::solo();
  if (kv == nullptr) throw ConfigError("rendezvous with world_size > 1 needs a kv store");

  const auto deadline = std::chrono::steady_clock::now() + options.rendezvous_timeout;
  auto remaining = [&] {
    return std::max(Millis(1), std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now()));
  };

  const std::string claim = rank_key("rdv.claim", rank);
  if (kv->add(claim, 1) > 1) throw FatalError("duplicate rank " + std::to_string(rank) + " at rendezvous");

  Address bind_addr{options.bind_host, 0};
  if (!group.peer_addresses.empty()) bind_addr = Address::parse(group.peer_addresses[static_cast<std::size_t>(rank)]);
  Listener listener(bind_addr);

  kv->set(rank_key("rdv.ws", rank), std::to_string(n));
  kv->set(rank_key("rdv.hash", rank), hex64(layout_hash));
  kv->set(rank_key("rdv.addr", rank), listener.address().str());
  std::int64_t arrived = kv->add("rdv.arrived", 1);

  while (arrived < n) {
    if (std::chrono::steady_clock::now() >= deadline) {
      std::string missing;
      for (int r = 0; r < n; ++r) {
        if (!kv->get(rank_key("rdv.addr", r))) missing += (missing.empty() ? "" : ", ") + std::to_string(r);
      }
      throw FatalError("rendezvous timed out; missing ranks: " + missing);
    }
    if (kv->get_counter(claim).value_or(0) > 1) {
      throw FatalError("duplicate rank " + std::to_string(rank) + " at rendezvous");
    }
    std::this_thread::sleep_for(Millis(2));
    arrived = kv->get_counter("rdv.arrived").value_or(0);
  }
  if (arrived > n) throw FatalError("more than " + std::to_string(n) + " workers joined the rendezvous");
  if (kv->get_counter(claim).value_or(0) > 1) throw FatalError("duplicate rank " + std::to_string(rank) + " at rendezvous");

  for (int r = 0; r < n; ++r) {
    const auto ws = kv->get_string(rank_key("rdv.ws", r));
    if (ws != std::to_string(n)) {
      throw FatalError("rank " + std::to_string(r) + " reports world size " + ws.value_or("?") + ", expected " +
                       std::to_string(n));
    }
    const auto h = kv->get_string(rank_key("rdv.hash", r));
    if (h != hex64(layout_hash)) {
      throw FatalError("parameter layout hash of rank " + std::to_string(r) + " (" + h.value_or("?") +
                       ") differs from rank " + std::to_string(rank) + " (" + hex64(layout_hash) + ")");
    }
  }

  const int next = (rank + 1) % n;
  const int prev = (rank + n - 1) % n;
  const auto next_addr = kv->get_string(rank_key("rdv.addr", next));
  if (!next_addr) throw FatalError("rank " + std::to_string(next) + " published no address");

  Socket to_next;
  try {
    to_next = Socket::connect(Address::parse(*next_addr), remaining());
  } catch (const TransportError& e) {
    throw FatalError("cannot reach rank " + std::to_string(next) + ": " + e.what());
  }
  Bytes hello;
  ByteWriter hw(hello);
  hw.put_le(kHelloMagic);
  hw.put_le(static_cast<std::uint32_t>(rank));
  hw.put_le(layout_hash);
  to_next.send_frame(hello);

  Socket from_prev;
  try {
    from_prev = listener.accept(remaining());
    from_prev.set_recv_timeout(remaining());
    const Bytes got = from_prev.recv_frame(64);
    ByteReader rd(got);
    if (rd.get_le<std::uint32_t>() != kHelloMagic) throw ProtocolError("bad ring hello");
    const auto who = rd.get_le<std::uint32_t>();
    if (static_cast<int>(who) != prev) {
      throw ProtocolError("ring hello from rank " + std::to_string(who) + ", expected " + std::to_string(prev));
    }
    if (rd.get_le<std::uint64_t>() != layout_hash) throw ProtocolError("ring hello layout hash mismatch");
  } catch (const TransportError& e) {
    throw FatalError("rank " + std::to_string(prev) + " never connected: " + e.what());
  }
  return CollectiveHandle(rank, n, std::move(to_next), std::move(from_prev), options.op_timeout);
}

}  // namespace ddppo::distrib
