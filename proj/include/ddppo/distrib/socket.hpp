#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "ddppo/common/bytes.hpp"

namespace ddppo::distrib {

using Millis = std::chrono::milliseconds;

struct Address {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port"; throws ConfigError when malformed.
  static Address parse(const std::string& s);
  std::string str() const { return host + ":" + std::to_string(port); }
};

// Owning TCP stream. All I/O throws TransportError on failure or EOF.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  // Retries refused connections until `timeout` has elapsed.
  static Socket connect(const Address& addr, Millis timeout);

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  int release() {
    const int f = fd_;
    fd_ = -1;
    return f;
  }
  void close();
  // Unblocks pending reads/writes on other threads.
  void shutdown();

  // Zero disables the timeout.
  void set_recv_timeout(Millis timeout);

  void send_all(const void* data, std::size_t size);
  void recv_all(void* data, std::size_t size);

  // [u32 LE length][payload]
  void send_frame(std::span<const unsigned char> payload);
  Bytes recv_frame(std::size_t max_size = std::size_t{1} << 31);

 private:
  int fd_ = -1;
};

class Listener {
 public:
  // Port 0 picks an ephemeral port; see address().
  explicit Listener(const Address& bind_addr, int backlog = 128);
  Listener(Listener&&) noexcept;
  Listener& operator=(Listener&&) noexcept;
  ~Listener();

  const Address& address() const { return addr_; }
  int fd() const { return fd_; }

  // Throws TransportError on timeout. Zero waits forever.
  Socket accept(Millis timeout);
  void close();

 private:
  int fd_ = -1;
  Address addr_;
};

}  // namespace ddppo::distrib
