#include "ddppo/distrib/socket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "ddppo/common/error.hpp"

namespace ddppo::distrib {

namespace {

std::string errno_text() { return std::strerror(errno); }

sockaddr_in resolve(const Address& addr) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(addr.port);
  const std::string host = addr.host.empty() || addr.host == "localhost" ? "127.0.0.1" : addr.host;
  if (inet_pton(AF_INET, host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw TransportError("cannot resolve host " + host);
  }
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return sa;
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

Address Address::parse(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon + 1 == s.size()) {
    throw ConfigError("address '" + s + "' is not host:port");
  }
  Address a;
  a.host = s.substr(0, colon);
  if (a.host.empty()) a.host = "127.0.0.1";
  try {
    std::size_t used = 0;
    const long p = std::stol(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1 || p < 0 || p > 65535) throw std::out_of_range("port");
    a.port = static_cast<std::uint16_t>(p);
  } catch (const std::logic_error&) {
    throw ConfigError("address '" + s + "' has an invalid port");
  }
  return a;
}

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.release();
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket Socket::connect(const Address& addr, Millis timeout) {
  const sockaddr_in sa = resolve(addr);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  auto backoff = Millis(5);
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw TransportError("socket(): " + errno_text());
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) == 0) {
      set_nodelay(fd);
      return Socket(fd);
    }
    const int err = errno;
    ::close(fd);
    if (std::chrono::steady_clock::now() + backoff > deadline) {
      throw TransportError("connect to " + addr.str() + " failed: " + std::strerror(err));
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, Millis(200));
  }
}

void Socket::set_recv_timeout(Millis timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

void Socket::send_all(const void* data, std::size_t size) {
  const auto* p = static_cast<const char*>(data);
  while (size > 0) {
    const ssize_t n = ::send(fd_, p, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError("send failed: " + errno_text());
    }
    p += n;
    size -= static_cast<std::size_t>(n);
  }
}

void Socket::recv_all(void* data, std::size_t size) {
  auto* p = static_cast<char*>(data);
  while (size > 0) {
    const ssize_t n = ::recv(fd_, p, size, 0);
    if (n == 0) throw TransportError("connection closed by peer");
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw TransportError("receive timed out");
      throw TransportError("recv failed: " + errno_text());
    }
    p += n;
    size -= static_cast<std::size_t>(n);
  }
}

void Socket::send_frame(std::span<const unsigned char> payload) {
  if (payload.size() > 0xffffffffULL) throw ProtocolError("frame too large");
  unsigned char header[4];
  const auto len = static_cast<std::uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) header[i] = static_cast<unsigned char>(len >> (8 * i));
  send_all(header, 4);
  if (!payload.empty()) send_all(payload.data(), payload.size());
}

Bytes Socket::recv_frame(std::size_t max_size) {
  unsigned char header[4];
  recv_all(header, 4);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t{header[i]} << (8 * i);
  if (len > max_size) throw ProtocolError("frame of " + std::to_string(len) + " bytes exceeds limit");
  Bytes payload(len);
  if (len > 0) recv_all(payload.data(), len);
  return payload;
}

Listener::Listener(const Address& bind_addr, int backlog) : addr_(bind_addr) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw TransportError("socket(): " + errno_text());
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in sa = resolve(bind_addr);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
    const std::string msg = "bind " + bind_addr.str() + ": " + errno_text();
    close();
    throw TransportError(msg);
  }
  if (::listen(fd_, backlog) != 0) {
    const std::string msg = "listen: " + errno_text();
    close();
    throw TransportError(msg);
  }
  socklen_t len = sizeof(sa);
  getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  addr_.port = ntohs(sa.sin_port);
  if (addr_.host.empty() || addr_.host == "0.0.0.0") addr_.host = "127.0.0.1";
}

Listener::Listener(Listener&& o) noexcept : fd_(o.fd_), addr_(o.addr_) { o.fd_ = -1; }

Listener& Listener::operator=(Listener&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    addr_ = o.addr_;
    o.fd_ = -1;
  }
  return *this;
}

Listener::~Listener() { close(); }

void Listener::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

Socket Listener::accept(Millis timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  for (;;) {
    const int r = ::poll(&pfd, 1, timeout.count() > 0 ? static_cast<int>(timeout.count()) : -1);
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw TransportError("poll: " + errno_text());
    if (r == 0) throw TransportError("accept on " + addr_.str() + " timed out");
    break;
  }
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) throw TransportError("accept: " + errno_text());
  set_nodelay(fd);
  return Socket(fd);
}

}  // namespace ddppo::distrib
