// Copyright 2026 The qselftest Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Line-delimited JSON transport over POSIX file descriptors: TCP verifier
// server, TCP prover client, and a stream loop usable over pipes or stdio.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qselftest/errors.hpp"
#include "qselftest/protocol.hpp"
#include "qselftest/provers.hpp"

namespace qst {

inline constexpr std::size_t kMaxLineBytes = 64 * 1024;
inline constexpr int kDefaultTimeoutMs = 30000;

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// Buffered line reader/writer over a file descriptor pair.
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd, bool owns = true) : rfd_(read_fd), wfd_(write_fd), owns_(owns) {}
  explicit LineChannel(int fd) : LineChannel(fd, fd, true) {}
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;
  ~LineChannel() { close(); }

  void close() {
    if (!owns_) return;
    if (rfd_ >= 0) ::close(rfd_);
    if (wfd_ >= 0 && wfd_ != rfd_) ::close(wfd_);
    rfd_ = wfd_ = -1;
    owns_ = false;
  }

  // Empty on orderly end of stream.
  std::optional<std::string> read_line(int timeout_ms = kDefaultTimeoutMs) {
    for (;;) {
      if (const auto nl = buf_.find('\n'); nl != std::string::npos) {
        if (nl > kMaxLineBytes) {
          buf_.erase(0, nl + 1);
          throw MalformedMessageError("message exceeds the 64 KiB line limit");
        }
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (buf_.size() > kMaxLineBytes) throw MalformedMessageError("message exceeds the 64 KiB line limit");
      if (timeout_ms >= 0) {
        pollfd pfd{rfd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, timeout_ms);
        if (rc == 0) throw TimeoutError("timed out waiting for a message");
        if (rc < 0) {
          if (errno == EINTR) continue;
          throw TransportError(std::string("poll: ") + std::strerror(errno));
        }
      }
      char chunk[4096];
      const ssize_t n = ::read(rfd_, chunk, sizeof chunk);
      if (n == 0) {
        if (buf_.empty()) return std::nullopt;
        throw TransportError("stream ended mid-line");
      }
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("read: ") + std::strerror(errno));
      }
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void write_line(const std::string& line) {
    std::string out = line;
    out.push_back('\n');
    std::size_t off = 0;
    while (off < out.size()) {
      const ssize_t n = send_or_write(wfd_, out.data() + off, out.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("write: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<json> read_json(int timeout_ms = kDefaultTimeoutMs) {
    const auto line = read_line(timeout_ms);
    if (!line) return std::nullopt;
    try {
      return json::parse(*line);
    } catch (const json::parse_error& e) {
      throw MalformedMessageError(std::string("invalid JSON: ") + e.what());
    }
  }

  void write_json(const json& j) { write_line(j.dump()); }

 private:
  static ssize_t send_or_write(int fd, const char* p, std::size_t n) {
    const ssize_t r = ::send(fd, p, n, MSG_NOSIGNAL);
    if (r < 0 && errno == ENOTSOCK) return ::write(fd, p, n);
    return r;
  }

  int rfd_, wfd_;
  bool owns_;
  std::string buf_;
};

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

inline HostPort parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address must look like host:port, got '" + address + "'");
  HostPort hp;
  hp.host = address.substr(0, colon);
  const std::string port = address.substr(colon + 1);
  try {
    const long v = std::stol(port);
    if (v < 0 || v > 65535) throw std::out_of_range("port");
    hp.port = static_cast<std::uint16_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("invalid port in address '" + address + "'");
  }
  if (hp.host.empty()) hp.host = "127.0.0.1";
  return hp;
}

inline sockaddr_in resolve_ipv4(const HostPort& hp) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(hp.host.c_str(), nullptr, &hints, &res); rc != 0 || !res)
    throw TransportError("cannot resolve host '" + hp.host + "': " + ::gai_strerror(rc));
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(hp.port);
  return addr;
}

inline int connect_tcp(const std::string& address) {
  const auto addr = resolve_ipv4(parse_address(address));
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd);
    throw TransportError("connect to " + address + ": " + std::strerror(err));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

/// Runs one verifier session over a channel. Transport failures abort the
/// session; the record is returned either way.
inline TranscriptRecord serve_session(LineChannel& ch, const EntcfParams& params, std::uint64_t sid,
                                      std::uint64_t root_seed, int timeout_ms = kDefaultTimeoutMs) {
  VerifierSession vs(params, sid, derive_stream(root_seed, sid, StreamRole::verifier));
  try {
    ch.write_json(vs.open());
    while (!vs.done()) {
      json reply;
      try {
        const auto msg = ch.read_json(timeout_ms);
        if (!msg) {
          vs.abort("prover closed the connection");
          break;
        }
        reply = vs.handle(*msg);
      } catch (const MalformedMessageError& e) {
        vs.abort(e.what());
        reply = wire::verdict(sid, "protocol_error", e.what());
      }
      ch.write_json(reply);
    }
  } catch (const TimeoutError& e) {
    vs.abort(std::string("session aborted: ") + e.what());
  } catch (const TransportError& e) {
    vs.abort(std::string("transport failure: ") + e.what());
  }
  return vs.record();
}

/// Runs one prover session over a channel; returns the verdict flag text.
inline std::string prove_session(LineChannel& ch, const StrategyFactory& factory, const TrapdoorOracle& oracle,
                                 std::uint64_t root_seed, int timeout_ms = kDefaultTimeoutMs,
                                 std::optional<json> first = std::nullopt) {
  auto msg = first ? std::move(first) : ch.read_json(timeout_ms);
  if (!msg) throw TransportError("verifier closed the connection before sending keys");
  if (wire::type_of(*msg) != "keys") throw MalformedMessageError("expected a keys message");
  const auto sid = msg->at("session_id").get<std::uint64_t>();
  ProverSession ps(factory(), derive_stream(root_seed, sid, StreamRole::prover), oracle);
  for (;;) {
    const auto reply = ps.handle(*msg);
    if (!reply) return *ps.verdict();
    ch.write_json(*reply);
    msg = ch.read_json(timeout_ms);
    if (!msg) throw TransportError("verifier closed the connection mid-session");
  }
}

/// TCP verifier: one session per connection, session ids assigned in accept order.
class VerifierServer {
 public:
  struct Options {
    std::string address = "127.0.0.1:7777";
    EntcfParams params = EntcfParams::ideal();
    std::uint64_t seed = 1;
    std::uint64_t first_session = 0;
    std::size_t max_sessions = 0;  // 0: unlimited
    int timeout_ms = kDefaultTimeoutMs;
  };

  using RecordSink = std::function<void(const TranscriptRecord&)>;

  VerifierServer(Options opt, RecordSink sink) : opt_(std::move(opt)), sink_(std::move(sink)) {
    const auto addr = resolve_ipv4(parse_address(opt_.address));
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
      const int err = errno;
      ::close(listen_fd_);
      throw TransportError("bind " + opt_.address + ": " + std::strerror(err));
    }
    if (::listen(listen_fd_, 64) != 0) {
      const int err = errno;
      ::close(listen_fd_);
      throw TransportError(std::string("listen: ") + std::strerror(err));
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  VerifierServer(const VerifierServer&) = delete;
  VerifierServer& operator=(const VerifierServer&) = delete;

  ~VerifierServer() {
    stop();
    for (auto& t : workers_)
      if (t.joinable()) t.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
  }

  std::uint16_t port() const { return port_; }

  // Accepts until max_sessions connections were served or stop() is called.
  void run() {
    std::size_t served = 0;
    while (!stopping_ && (opt_.max_sessions == 0 || served < opt_.max_sessions)) {
      pollfd pfd{listen_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, 100);
      if (rc <= 0) continue;
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      const std::uint64_t sid = opt_.first_session + served++;
      workers_.emplace_back([this, fd, sid] {
        LineChannel ch(fd);
        const auto rec = serve_session(ch, opt_.params, sid, opt_.seed, opt_.timeout_ms);
        std::lock_guard<std::mutex> lock(mu_);
        sink_(rec);
      });
    }
    for (auto& t : workers_)
      if (t.joinable()) t.join();
    workers_.clear();
  }

  void stop() { stopping_ = true; }

 private:
  Options opt_;
  RecordSink sink_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::vector<std::thread> workers_;
};

/// Connects `sessions` times and runs one prover session per connection.
inline std::vector<std::string> connect_prover(const std::string& address, const StrategyFactory& factory,
                                               const TrapdoorOracle& oracle, std::uint64_t root_seed,
                                               std::size_t sessions, int timeout_ms = kDefaultTimeoutMs) {
  std::vector<std::string> verdicts;
  for (std::size_t k = 0; k < sessions; ++k) {
    LineChannel ch(connect_tcp(address));
    verdicts.push_back(prove_session(ch, factory, oracle, root_seed, timeout_ms));
  }
  return verdicts;
}

/// Prover loop over one stream carrying consecutive sessions (pipes, stdio).
inline std::size_t prove_stream(LineChannel& ch, const StrategyFactory& factory, const TrapdoorOracle& oracle,
                                std::uint64_t root_seed, int timeout_ms = kDefaultTimeoutMs) {
  std::size_t count = 0;
  while (auto first = ch.read_json(timeout_ms)) {
    prove_session(ch, factory, oracle, root_seed, timeout_ms, std::move(first));
    ++count;
  }
  return count;
}

}  // namespace qst
