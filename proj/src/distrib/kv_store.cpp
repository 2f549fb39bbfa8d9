#include "ddppo/distrib/kv_store.hpp"

#include <sys/socket.h>

#include <charconv>

#include "ddppo/common/error.hpp"

namespace ddppo::distrib {

namespace {

Bytes encode_i64(std::int64_t v) {
  Bytes b;
  ByteWriter(b).put_le(v);
  return b;
}

// Splits "<family>.<n>"; false when the last segment is not a plain integer.
bool split_indexed(const std::string& key, std::string& family, long long& index) {
  const auto dot = key.rfind('.');
  if (dot == std::string::npos || dot + 1 == key.size()) return false;
  const char* first = key.data() + dot + 1;
  const char* last = key.data() + key.size();
  const auto [ptr, ec] = std::from_chars(first, last, index);
  if (ec != std::errc() || ptr != last || index < 0) return false;
  family = key.substr(0, dot);
  return true;
}

}  // namespace

Bytes encode_kv_request(KvOp op, const std::string& key, std::span<const unsigned char> value) {
  if (key.size() > 0xffff) throw ProtocolError("kv key longer than 65535 bytes");
  Bytes b;
  b.reserve(3 + key.size() + value.size());
  ByteWriter w(b);
  w.put_le(static_cast<std::uint8_t>(op));
  w.put_le(static_cast<std::uint16_t>(key.size()));
  w.put_bytes(key);
  w.put_bytes(value);
  return b;
}

KvRequest decode_kv_request(std::span<const unsigned char> payload) {
  ByteReader r(payload);
  const auto op = r.get_le<std::uint8_t>();
  if (op < 1 || op > 3) throw ProtocolError("unknown kv opcode " + std::to_string(op));
  const auto klen = r.get_le<std::uint16_t>();
  const auto key = r.get_bytes(klen);
  const auto value = r.rest();
  return {static_cast<KvOp>(op), std::string(key.begin(), key.end()), Bytes(value.begin(), value.end())};
}

KvStatus KvTable::apply(const KvRequest& req, Bytes& out) {
  std::lock_guard lock(mu_);
  out.clear();
  switch (req.op) {
    case KvOp::kSet:
      data_[req.key] = req.value;
      collect(req.key);
      return KvStatus::kOk;
    case KvOp::kGet: {
      auto it = data_.find(req.key);
      if (it == data_.end()) return KvStatus::kMissing;
      out = it->second;
      return KvStatus::kOk;
    }
    case KvOp::kAdd: {
      if (req.value.size() != 8) {
        const std::string msg = "ADD delta must be 8 bytes";
        out.assign(msg.begin(), msg.end());
        return KvStatus::kError;
      }
      std::int64_t cur = 0;
      auto it = data_.find(req.key);
      if (it != data_.end()) {
        if (it->second.size() != 8) {
          const std::string msg = "key '" + req.key + "' does not hold a counter";
          out.assign(msg.begin(), msg.end());
          return KvStatus::kError;
        }
        cur = ByteReader(it->second).get_le<std::int64_t>();
      }
      const std::int64_t next = cur + ByteReader(req.value).get_le<std::int64_t>();
      data_[req.key] = out = encode_i64(next);
      collect(req.key);
      return KvStatus::kOk;
    }
  }
  return KvStatus::kError;
}

void KvTable::collect(const std::string& key) {
  std::string family;
  long long index = 0;
  if (!split_indexed(key, family, index)) return;
  auto [it, inserted] = latest_.try_emplace(family, index);
  if (!inserted) {
    if (index <= it->second) return;
    it->second = index;
  }
  for (auto d = data_.begin(); d != data_.end();) {
    std::string f;
    long long n = 0;
    if (split_indexed(d->first, f, n) && f == family && n < index - 2) {
      d = data_.erase(d);
    } else {
      ++d;
    }
  }
}

std::size_t KvTable::size() const {
  std::lock_guard lock(mu_);
  return data_.size();
}

bool KvTable::contains(const std::string& key) const {
  std::lock_guard lock(mu_);
  return data_.count(key) > 0;
}

KvServer::KvServer(const Address& bind_addr) : listener_(bind_addr) {
  acceptor_ = std::thread([this] { accept_loop(); });
}

KvServer::~KvServer() { stop(); }

void KvServer::stop() {
  if (stopping_.exchange(true)) return;
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mu_);
    threads.swap(conn_threads_);
  }
  for (auto& t : threads) t.join();
}

void KvServer::accept_loop() {
  while (!stopping_) {
    Socket s;
    try {
      s = listener_.accept(Millis(50));
    } catch (const TransportError&) {
      continue;
    }
    std::lock_guard lock(conn_mu_);
    if (stopping_) break;
    const int fd = s.release();
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { serve(fd); });
  }
}

void KvServer::serve(int fd) {
  Socket s(fd);
  Bytes out;
  try {
    while (!stopping_) {
      const Bytes frame = s.recv_frame(std::size_t{1} << 26);
      Bytes resp;
      try {
        const KvStatus st = table_.apply(decode_kv_request(frame), out);
        resp.push_back(static_cast<unsigned char>(st));
        resp.insert(resp.end(), out.begin(), out.end());
      } catch (const ProtocolError& e) {
        resp.push_back(static_cast<unsigned char>(KvStatus::kError));
        ByteWriter(resp).put_bytes(std::string_view(e.what()));
      }
      s.send_frame(resp);
    }
  } catch (const Error&) {
    // client went away
  }
  std::lock_guard lock(conn_mu_);
  std::erase(conn_fds_, fd);
}

KvClient::KvClient(Address addr, Millis timeout) : addr_(std::move(addr)), timeout_(timeout) {}

KvStatus KvClient::request(KvOp op, const std::string& key, std::span<const unsigned char> value,
                           Bytes& out) {
  ++requests_;
  try {
    if (!sock_.valid()) {
      sock_ = Socket::connect(addr_, timeout_);
      sock_.set_recv_timeout(timeout_);
    }
    sock_.send_frame(encode_kv_request(op, key, value));
    const Bytes resp = sock_.recv_frame();
    if (resp.empty()) throw ProtocolError("empty kv response");
    const auto st = static_cast<KvStatus>(resp[0]);
    out.assign(resp.begin() + 1, resp.end());
    if (st == KvStatus::kError) {
      throw ProtocolError("kv store rejected request on '" + key + "': " + std::string(out.begin(), out.end()));
    }
    if (st != KvStatus::kOk && st != KvStatus::kMissing) throw ProtocolError("bad kv status byte");
    return st;
  } catch (const TransportError& e) {
    sock_.close();
    throw TransportError("kv store " + addr_.str() + ": " + e.what());
  }
}

void KvClient::set(const std::string& key, std::span<const unsigned char> value) {
  Bytes out;
  request(KvOp::kSet, key, value, out);
}

void KvClient::set(const std::string& key, const std::string& value) {
  set(key, std::span(reinterpret_cast<const unsigned char*>(value.data()), value.size()));
}

std::optional<Bytes> KvClient::get(const std::string& key) {
  Bytes out;
  if (request(KvOp::kGet, key, {}, out) == KvStatus::kMissing) return std::nullopt;
  return out;
}

std::optional<std::string> KvClient::get_string(const std::string& key) {
  auto b = get(key);
  if (!b) return std::nullopt;
  return std::string(b->begin(), b->end());
}

std::int64_t KvClient::add(const std::string& key, std::int64_t delta) {
  Bytes out;
  request(KvOp::kAdd, key, encode_i64(delta), out);
  if (out.size() != 8) throw ProtocolError("kv ADD returned " + std::to_string(out.size()) + " bytes");
  return ByteReader(out).get_le<std::int64_t>();
}

std::optional<std::int64_t> KvClient::get_counter(const std::string& key) {
  auto b = get(key);
  if (!b) return std::nullopt;
  if (b->size() != 8) throw ProtocolError("key '" + key + "' does not hold a counter");
  return ByteReader(*b).get_le<std::int64_t>();
}

}  // namespace ddppo::distrib
