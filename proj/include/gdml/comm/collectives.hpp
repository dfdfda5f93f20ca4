#pragma once

// Broadcast and Reduce over a communication group laid out as a star around its root.
// Each tree edge carries one frame of 16 + 4 * len bytes (f32 wire). Reductions add the
// members' contributions in ascending member-id order so the result never depends on
// which message arrived first.

#include <span>
#include <vector>

#include "gdml/comm/endpoint.hpp"
#include "gdml/linalg.hpp"

namespace gdml {

namespace detail {

inline void check_membership(const Endpoint& ep, const CommGroup& group) {
  if (!group.contains(group.root)) throw ConfigError("collective root is not a member of the group");
  if (!group.contains(ep.self()))
    throw ConfigError("node " + ep.topology().node_name(ep.self()) + " is not a member of the group");
}

inline std::vector<NodeId> non_root_members(const CommGroup& group) {
  std::vector<NodeId> out;
  for (NodeId m : group.members)
    if (m != group.root) out.push_back(m);
  return out;
}

}  // namespace detail

// Every member calls this. The root passes the payload; the others receive it. Every member,
// the root included, returns the payload as decoded from the wire.
inline Vector broadcast(Endpoint& ep, const CommGroup& group, Tag tag, std::span<const double> payload = {}) {
  detail::check_membership(ep, group);
  if (ep.self() == group.root) {
    for (NodeId m : detail::non_root_members(group)) ep.send(m, tag, payload);
    return quantize(payload, ep.precision());
  }
  Frame f = ep.recv(group.root);
  if (f.tag != tag)
    throw TransportError("protocol error at " + ep.topology().node_name(ep.self()) + ": expected '" +
                         to_string(tag) + "', got '" + to_string(f.tag) + "'");
  return std::move(f.payload);
}

// Non-root side of a broadcast whose tag is not known in advance (command dispatch).
inline Frame receive_broadcast(Endpoint& ep, const CommGroup& group) {
  detail::check_membership(ep, group);
  if (ep.self() == group.root) throw ConfigError("receive_broadcast called on the group root");
  return ep.recv(group.root);
}

// Every member calls this with an equal-length contribution. The root returns the sum
// (its own contribution included); other members return an empty vector.
inline Vector reduce(Endpoint& ep, const CommGroup& group, Tag tag, std::span<const double> contribution) {
  detail::check_membership(ep, group);
  if (ep.self() != group.root) {
    ep.send(group.root, tag, contribution);
    return {};
  }
  const auto others = detail::non_root_members(group);
  auto frames = ep.recv_from(others);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k].tag != tag)
      throw TransportError("protocol error at " + ep.topology().node_name(ep.self()) + ": expected '" +
                           to_string(tag) + "' from " + ep.topology().node_name(others[k]) + ", got '" +
                           to_string(frames[k].tag) + "'");
    if (frames[k].payload.size() != contribution.size())
      throw DimensionError("reduce: payload length mismatch from " + ep.topology().node_name(others[k]) + " (" +
                           std::to_string(frames[k].payload.size()) + " vs " + std::to_string(contribution.size()) +
                           ")");
  }
  Vector sum(contribution.size(), 0.0);
  std::size_t next = 0;
  for (NodeId m : group.members) {
    std::span<const double> part = m == group.root ? contribution : std::span<const double>(frames[next++].payload);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += part[i];
  }
  return sum;
}

inline double reduce_scalar(Endpoint& ep, const CommGroup& group, Tag tag, double value) {
  auto v = reduce(ep, group, tag, std::span<const double>(&value, 1));
  return v.empty() ? 0.0 : v[0];
}

}  // namespace gdml
