#pragma once

// In-process transport: one thread per node, mailboxes per (src, dst) pair, and a virtual
// clock per node. A message departs at the sender's clock and arrives latency +
// bytes / bandwidth later; a receiver's clock jumps to the latest arrival it waits for.

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <utility>

#include "gdml/comm/endpoint.hpp"

namespace gdml {

class SimNetwork {
 public:
  SimNetwork(const Topology& topo, const std::vector<NodeId>& unreachable)
      : topo_(&topo), down_(static_cast<std::size_t>(topo.node_count()), 0) {
    for (NodeId n : unreachable)
      if (n >= 0 && n < topo.node_count()) down_[static_cast<std::size_t>(n)] = 1;
  }

  bool is_down(NodeId n) const {
    std::lock_guard lock(mu_);
    return down_[static_cast<std::size_t>(n)] != 0;
  }

  void post(NodeId src, NodeId dst, Frame&& f) {
    {
      std::lock_guard lock(mu_);
      if (down_[static_cast<std::size_t>(dst)]) throw unreachable(dst);
      queues_[{src, dst}].push_back(std::move(f));
    }
    cv_.notify_all();
  }

  std::vector<Frame> take(NodeId dst, std::span<const NodeId> srcs) {
    std::unique_lock lock(mu_);
    for (;;) {
      bool ready = true;
      for (NodeId s : srcs) {
        auto it = queues_.find({s, dst});
        if (it == queues_.end() || it->second.empty()) {
          if (down_[static_cast<std::size_t>(s)]) throw unreachable(s);
          ready = false;
        }
      }
      if (ready) break;
      cv_.wait(lock);
    }
    std::vector<Frame> out;
    out.reserve(srcs.size());
    for (NodeId s : srcs) {
      auto& q = queues_[{s, dst}];
      out.push_back(std::move(q.front()));
      q.pop_front();
    }
    return out;
  }

  // A node that finished or failed can no longer send or receive.
  void mark_down(NodeId n) {
    {
      std::lock_guard lock(mu_);
      down_[static_cast<std::size_t>(n)] = 1;
    }
    cv_.notify_all();
  }

 private:
  TransportError unreachable(NodeId n) const {
    return TransportError("node " + topo_->node_name(n) + " unreachable");
  }

  const Topology* topo_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::pair<NodeId, NodeId>, std::deque<Frame>> queues_;
  std::vector<char> down_;
};

class SimulatedEndpoint final : public Endpoint {
 public:
  SimulatedEndpoint(const Topology& topo, NodeId self, const TransportOptions& opts, SimNetwork& net)
      : Endpoint(topo, self, opts), net_(&net) {
    if (net.is_down(self)) throw TransportError("node " + topo.node_name(self) + " unreachable");
  }

  double clock() const override { return clock_; }

  void charge_compute(double work_units) override {
    if (topology().compute_rate > 0.0) clock_ += work_units / topology().compute_rate;
  }

 protected:
  void deliver(NodeId dst, Frame&& f) override { net_->post(self(), dst, std::move(f)); }

  std::vector<Frame> collect(std::span<const NodeId> srcs) override { return net_->take(self(), srcs); }

  void observe_arrival(NodeId src, const Frame& f) override {
    const auto link = topology().link_class(src, self());
    const double bytes = static_cast<double>(frame_bytes(f.payload.size(), precision()));
    clock_ = std::max(clock_, f.depart_time + topology().transfer_time(link, bytes));
  }

 private:
  SimNetwork* net_;
  double clock_ = 0.0;
};

}  // namespace gdml
