#pragma once

// TCP transport. Every tree edge (global master to DC master, DC master to slave) is one
// stream connection; the child side connects and identifies itself with a hello record.
// Frames are length-prefixed as described in frame.hpp. There is no retry after startup:
// a closed peer surfaces as a TransportError naming that peer.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <csignal>
#include <chrono>
#include <cstring>
#include <deque>
#include <map>
#include <string>
#include <thread>

#include "gdml/comm/endpoint.hpp"

namespace gdml {

namespace net {

inline constexpr std::uint32_t kHelloMagic = 0x47444d4c;  // "GDML"

struct Address {
  std::string host;
  std::uint16_t port = 0;
};

inline Address parse_address(const std::string& s) {
  auto colon = s.rfind(':');
  if (colon == std::string::npos) throw ConfigError("socket address must be host:port, got '" + s + "'");
  Address a;
  a.host = s.substr(0, colon);
  if (a.host == "localhost") a.host = "127.0.0.1";
  int port = 0;
  try {
    port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in socket address '" + s + "'");
  }
  if (port < 0 || port > 65535) throw ConfigError("bad port in socket address '" + s + "'");
  a.port = static_cast<std::uint16_t>(port);
  return a;
}

inline sockaddr_in to_sockaddr(const Address& a) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(a.port);
  if (inet_pton(AF_INET, a.host.c_str(), &sa.sin_addr) != 1)
    throw ConfigError("socket host must be an IPv4 address, got '" + a.host + "'");
  return sa;
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  int get() const noexcept { return fd_; }
  int release() noexcept { return std::exchange(fd_, -1); }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  explicit operator bool() const noexcept { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

// Returns a listening socket and the port it is bound to.
inline std::pair<Fd, std::uint16_t> listen_on(const Address& a) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd) throw TransportError(std::string("socket(): ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  auto sa = to_sockaddr(a);
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
    throw TransportError("bind " + a.host + ":" + std::to_string(a.port) + ": " + std::strerror(errno));
  if (::listen(fd.get(), 128) != 0) throw TransportError(std::string("listen(): ") + std::strerror(errno));
  socklen_t len = sizeof(sa);
  ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&sa), &len);
  return {std::move(fd), ntohs(sa.sin_port)};
}

inline bool write_all(int fd, const unsigned char* p, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

inline bool read_all(int fd, unsigned char* p, std::size_t n) {
  while (n > 0) {
    ssize_t r = ::recv(fd, p, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

// Plain write(2) loop for pipes and files.
inline bool write_all_fd(int fd, const std::string& data) {
  const char* p = data.data();
  std::size_t n = data.size();
  while (n > 0) {
    ssize_t w = ::write(fd, p, n);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

}  // namespace net

class SocketEndpoint final : public Endpoint {
 public:
  // `listener` is a pre-bound listening socket for nodes with children (may be empty, in
  // which case the node binds its own address). `addresses` holds host:port for every node.
  SocketEndpoint(const Topology& topo, NodeId self, const TransportOptions& opts,
                 const std::vector<std::string>& addresses, net::Fd listener,
                 std::chrono::steady_clock::time_point start)
      : Endpoint(topo, self, opts), start_(start) {
    if (addresses.size() != static_cast<std::size_t>(topo.node_count()))
      throw ConfigError("socket transport needs one host:port per node (" + std::to_string(topo.node_count()) +
                        "), got " + std::to_string(addresses.size()));
    const auto children = topo.children_of(self);
    if (!children.empty() && !listener) listener = net::listen_on(net::parse_address(addresses[self])).first;

    if (NodeId parent = topo.parent_of(self); parent >= 0) connect_to(parent, addresses[parent]);

    for (std::size_t k = 0; k < children.size(); ++k) {
      net::Fd conn(::accept(listener.get(), nullptr, nullptr));
      if (!conn) throw TransportError("accept failed at node " + topo.node_name(self) + ": " + std::strerror(errno));
      std::array<unsigned char, 8> hello{};
      if (!net::read_all(conn.get(), hello.data(), hello.size()) || wire::get_u32(hello.data()) != net::kHelloMagic)
        throw TransportError("bad hello received by node " + topo.node_name(self));
      auto peer = static_cast<NodeId>(wire::get_u32(hello.data() + 4));
      if (std::find(children.begin(), children.end(), peer) == children.end() || peers_.count(peer))
        throw TransportError("unexpected peer id " + std::to_string(peer) + " at node " + topo.node_name(self));
      set_nodelay(conn.get());
      peers_.emplace(peer, std::move(conn));
    }
  }

  double clock() const override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  void charge_compute(double) override {}

 protected:
  void deliver(NodeId dst, Frame&& f) override {
    auto bytes = encode_frame(f, precision());
    if (!net::write_all(peer_fd(dst), bytes.data(), bytes.size()))
      throw TransportError("node " + topology().node_name(dst) + " unreachable");
  }

  std::vector<Frame> collect(std::span<const NodeId> srcs) override {
    // Frames are consumed in arrival order and handed back in the requested order.
    for (;;) {
      std::vector<pollfd> waiting;
      std::vector<NodeId> owners;
      for (NodeId s : srcs) {
        if (pending_[s].empty() && std::find(owners.begin(), owners.end(), s) == owners.end()) {
          waiting.push_back(pollfd{peer_fd(s), POLLIN, 0});
          owners.push_back(s);
        }
      }
      if (waiting.empty()) break;
      int rc = ::poll(waiting.data(), waiting.size(), -1);
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll(): ") + std::strerror(errno));
      }
      for (std::size_t k = 0; k < waiting.size(); ++k)
        if (waiting[k].revents != 0) pending_[owners[k]].push_back(read_frame(owners[k]));
    }
    std::vector<Frame> out;
    out.reserve(srcs.size());
    for (NodeId s : srcs) {
      out.push_back(std::move(pending_[s].front()));
      pending_[s].pop_front();
    }
    return out;
  }

 private:
  static void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  int peer_fd(NodeId n) const {
    auto it = peers_.find(n);
    if (it == peers_.end())
      throw TransportError("node " + topology().node_name(self()) + " has no link to " + topology().node_name(n));
    return it->second.get();
  }

  void connect_to(NodeId parent, const std::string& address) {
    auto sa = net::to_sockaddr(net::parse_address(address));
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(options().connect_timeout_s);
    for (;;) {
      net::Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
      if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) == 0) {
        std::vector<unsigned char> hello;
        wire::put_u32(hello, net::kHelloMagic);
        wire::put_u32(hello, static_cast<std::uint32_t>(self()));
        if (!net::write_all(fd.get(), hello.data(), hello.size()))
          throw TransportError("node " + topology().node_name(parent) + " unreachable");
        set_nodelay(fd.get());
        peers_.emplace(parent, std::move(fd));
        return;
      }
      if (std::chrono::steady_clock::now() > deadline)
        throw TransportError("cannot connect to node " + topology().node_name(parent) + " at " + address + ": " +
                             std::strerror(errno));
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

  Frame read_frame(NodeId src) {
    std::array<unsigned char, kFrameHeaderBytes> header{};
    const int fd = peer_fd(src);
    if (!net::read_all(fd, header.data(), header.size()))
      throw TransportError("node " + topology().node_name(src) + " unreachable");
    auto h = decode_header(header);
    std::vector<unsigned char> body(h.length);
    if (!net::read_all(fd, body.data(), body.size()))
      throw TransportError("node " + topology().node_name(src) + " unreachable");
    Frame f;
    f.tag = h.tag;
    f.epoch = h.epoch;
    f.payload = decode_payload(body, precision());
    return f;
  }

  std::chrono::steady_clock::time_point start_;
  std::map<NodeId, net::Fd> peers_;
  std::map<NodeId, std::deque<Frame>> pending_;
};

}  // namespace gdml
