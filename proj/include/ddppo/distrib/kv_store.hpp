#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ddppo/distrib/socket.hpp"

namespace ddppo::distrib {

enum class KvOp : std::uint8_t { kSet = 1, kGet = 2, kAdd = 3 };
enum class KvStatus : std::uint8_t { kOk = 0, kMissing = 1, kError = 2 };

// Request payload: [u8 op][u16 LE key length][key][value].
// Response payload: [u8 status][value].
Bytes encode_kv_request(KvOp op, const std::string& key, std::span<const unsigned char> value);

struct KvRequest {
  KvOp op;
  std::string key;
  Bytes value;
};
KvRequest decode_kv_request(std::span<const unsigned char> payload);

// Single-mutex map; every operation is linearizable. Keys of the form
// "<family>.<integer>" are garbage-collected once a key of the same family
// with an index more than 2 higher is written.
class KvTable {
 public:
  KvStatus apply(const KvRequest& req, Bytes& out);
  std::size_t size() const;
  bool contains(const std::string& key) const;

 private:
  void collect(const std::string& key);

  mutable std::mutex mu_;
  std::unordered_map<std::string, Bytes> data_;
  std::unordered_map<std::string, long long> latest_;  // family -> highest index
};

// TCP front end for a KvTable: one thread per connection.
class KvServer {
 public:
  explicit KvServer(const Address& bind_addr = {});
  ~KvServer();
  KvServer(const KvServer&) = delete;
  KvServer& operator=(const KvServer&) = delete;

  const Address& address() const { return listener_.address(); }
  const KvTable& table() const { return table_; }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  KvTable table_;
  Listener listener_;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
};

// Blocking client. Transport failures surface as TransportError; the next
// call reconnects.
class KvClient {
 public:
  explicit KvClient(Address addr, Millis timeout = Millis(60000));

  void set(const std::string& key, std::span<const unsigned char> value);
  void set(const std::string& key, const std::string& value);
  std::optional<Bytes> get(const std::string& key);
  std::optional<std::string> get_string(const std::string& key);
  // Atomic add on an i64 LE counter; absent keys start at 0.
  std::int64_t add(const std::string& key, std::int64_t delta);
  std::optional<std::int64_t> get_counter(const std::string& key);

  const Address& address() const { return addr_; }
  std::uint64_t requests() const { return requests_; }

 private:
  KvStatus request(KvOp op, const std::string& key, std::span<const unsigned char> value, Bytes& out);

  Address addr_;
  Millis timeout_;
  Socket sock_;
  std::uint64_t requests_ = 0;
};

}  // namespace ddppo::distrib
