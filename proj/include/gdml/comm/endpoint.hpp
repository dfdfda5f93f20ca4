#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "gdml/comm/frame.hpp"
#include "gdml/comm/ledger.hpp"
#include "gdml/comm/topology.hpp"

namespace gdml {

struct TransportOptions {
  WirePrecision wire = WirePrecision::F32;
  // Random per-send delay in [0, jitter_max_us] microseconds; scrambles message arrival order.
  int jitter_max_us = 0;
  std::uint64_t jitter_seed = 0;
  // Socket transport: "host:port" for every node. Empty means loopback with ephemeral ports.
  std::vector<std::string> socket_addresses;
  double connect_timeout_s = 10.0;
  // Simulated transport: nodes that never come up (messages to or from them fail).
  std::vector<NodeId> unreachable;
};

// One node's view of the network. Records a ledger entry for every frame it sends and
// keeps a Lamport clock that is stamped into each frame's epoch field.
class Endpoint {
 public:
  Endpoint(const Topology& topo, NodeId self, const TransportOptions& opts)
      : topo_(&topo), self_(self), opts_(opts), jitter_rng_(opts.jitter_seed * 0x9e3779b97f4a7c15ULL + self) {}
  virtual ~Endpoint() = default;

  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  NodeId self() const noexcept { return self_; }
  const Topology& topology() const noexcept { return *topo_; }
  WirePrecision precision() const noexcept { return opts_.wire; }
  std::uint64_t lamport() const noexcept { return lamport_; }
  const std::vector<LedgerEntry>& sent() const noexcept { return sent_; }

  // Simulated seconds on the simulated transport, wall-clock seconds since run start on sockets.
  virtual double clock() const = 0;
  // Advances the simulated clock by work / compute_rate; wall-clock transports ignore it.
  virtual void charge_compute(double work_units) = 0;

  void send(NodeId dst, Tag tag, std::span<const double> payload) {
    if (dst == self_) throw TransportError("node " + topo_->node_name(self_) + " cannot send to itself");
    if (opts_.jitter_max_us > 0) {
      std::uniform_int_distribution<int> dist(0, opts_.jitter_max_us);
      std::this_thread::sleep_for(std::chrono::microseconds(dist(jitter_rng_)));
    }
    Frame f;
    f.tag = tag;
    f.epoch = ++lamport_;
    f.payload = quantize(payload, opts_.wire);
    f.depart_time = clock();
    const LinkClass link = topo_->link_class(self_, dst);
    sent_.push_back(LedgerEntry{topo_->node_name(self_), topo_->node_name(dst), topo_->dc_name(topo_->dc_of(self_)),
                                topo_->dc_name(topo_->dc_of(dst)), frame_bytes(payload.size(), opts_.wire), link,
                                to_string(tag), f.depart_time, f.epoch});
    deliver(dst, std::move(f));
  }

  // One frame from each source, returned in the order of `srcs` whatever order they arrive in.
  std::vector<Frame> recv_from(std::span<const NodeId> srcs) {
    auto frames = collect(srcs);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      lamport_ = std::max(lamport_, frames[i].epoch) + 1;
      observe_arrival(srcs[i], frames[i]);
    }
    return frames;
  }

  Frame recv(NodeId src) { return std::move(recv_from(std::span<const NodeId>(&src, 1)).front()); }

 protected:
  virtual void deliver(NodeId dst, Frame&& f) = 0;
  virtual std::vector<Frame> collect(std::span<const NodeId> srcs) = 0;
  virtual void observe_arrival(NodeId, const Frame&) {}

  const TransportOptions& options() const noexcept { return opts_; }

 private:
  const Topology* topo_;
  NodeId self_;
  TransportOptions opts_;
  std::mt19937_64 jitter_rng_;
  std::uint64_t lamport_ = 0;
  std::vector<LedgerEntry> sent_;
};

}  // namespace gdml
