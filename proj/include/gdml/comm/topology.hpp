#pragma once

// Two-level master/slave tree. Node 0 is the global master, nodes 1..P are the data
// center masters, and the slaves of each data center follow in data-center order.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gdml/error.hpp"

namespace gdml {

using NodeId = int;

enum class LinkClass { InDc, XDc };

inline const char* to_string(LinkClass c) { return c == LinkClass::InDc ? "in-DC" : "X-DC"; }

enum class NodeRole { GlobalMaster, DcMaster, Slave };

enum class GroupKind { Global, Local };

struct CommGroup {
  GroupKind kind = GroupKind::Global;
  std::vector<NodeId> members;  // ascending
  NodeId root = 0;

  bool contains(NodeId n) const { return std::find(members.begin(), members.end(), n) != members.end(); }
};

struct Topology {
  static constexpr int kExternal = -1;

  int P = 1;
  std::vector<int> slaves_per_dc{1};
  double xdc_bandwidth = 12.5e6;  // bytes / s
  double xdc_latency = 0.05;      // s
  double indc_bandwidth = 1.25e9;
  double indc_latency = 0.0005;
  int global_master_dc = 0;  // kExternal places the global master at its own site
  double compute_rate = 0.0;  // work units per second per slave; 0 leaves compute uncharged
  std::vector<std::string> dc_names;

  static Topology uniform(int P, int slaves, double xdc_bw = 12.5e6, double xdc_lat = 0.05) {
    Topology t;
    t.P = P;
    t.slaves_per_dc.assign(static_cast<std::size_t>(P), slaves);
    t.xdc_bandwidth = xdc_bw;
    t.xdc_latency = xdc_lat;
    return t;
  }

  void validate() const {
    if (P < 1) throw ConfigError("topology: P must be >= 1");
    if (slaves_per_dc.size() != static_cast<std::size_t>(P))
      throw ConfigError("topology: slaves_per_dc must list P counts");
    for (int s : slaves_per_dc)
      if (s < 1) throw ConfigError("topology: every data center needs at least one slave");
    if (!(xdc_bandwidth > 0.0) || !(indc_bandwidth > 0.0))
      throw ConfigError("topology: bandwidths must be > 0");
    if (!(xdc_latency >= 0.0) || !(indc_latency >= 0.0))
      throw ConfigError("topology: latencies must be >= 0");
    if (global_master_dc != kExternal && (global_master_dc < 0 || global_master_dc >= P))
      throw ConfigError("topology: global_master_dc must be in [0, P) or external");
    if (!(compute_rate >= 0.0)) throw ConfigError("topology: compute_rate must be >= 0");
    if (!dc_names.empty() && dc_names.size() != static_cast<std::size_t>(P))
      throw ConfigError("topology: dc_names must list P names");
  }

  int total_slaves() const {
    int s = 0;
    for (int c : slaves_per_dc) s += c;
    return s;
  }
  int node_count() const { return 1 + P + total_slaves(); }

  NodeId global_master() const { return 0; }
  NodeId dc_master(int p) const { return 1 + p; }
  NodeId slave(int p, int j) const {
    NodeId id = 1 + P;
    for (int q = 0; q < p; ++q) id += slaves_per_dc[q];
    return id + j;
  }

  NodeRole role_of(NodeId n) const {
    if (n == 0) return NodeRole::GlobalMaster;
    if (n <= P) return NodeRole::DcMaster;
    return NodeRole::Slave;
  }

  // Data center of a node; kExternal for an external global master.
  int dc_of(NodeId n) const {
    if (n == 0) return global_master_dc;
    if (n <= P) return n - 1;
    NodeId id = 1 + P;
    for (int p = 0; p < P; ++p) {
      if (n < id + slaves_per_dc[p]) return p;
      id += slaves_per_dc[p];
    }
    throw ConfigError("node id " + std::to_string(n) + " out of range");
  }

  int slave_index(NodeId n) const { return n - slave(dc_of(n), 0); }

  std::string dc_name(int p) const {
    if (p == kExternal) return "external";
    if (!dc_names.empty()) return dc_names[static_cast<std::size_t>(p)];
    return "dc" + std::to_string(p);
  }

  std::string node_name(NodeId n) const {
    switch (role_of(n)) {
      case NodeRole::GlobalMaster: return "G";
      case NodeRole::DcMaster: return "M:" + dc_name(n - 1);
      case NodeRole::Slave: return "S:" + dc_name(dc_of(n)) + ":" + std::to_string(slave_index(n));
    }
    return "?";
  }

  LinkClass link_class(NodeId a, NodeId b) const {
    return dc_of(a) == dc_of(b) ? LinkClass::InDc : LinkClass::XDc;
  }
  double latency(LinkClass c) const { return c == LinkClass::XDc ? xdc_latency : indc_latency; }
  double bandwidth(LinkClass c) const { return c == LinkClass::XDc ? xdc_bandwidth : indc_bandwidth; }

  // Delay of one message on a link: latency + bytes / bandwidth.
  double transfer_time(LinkClass c, double bytes) const { return latency(c) + bytes / bandwidth(c); }

  CommGroup global_group() const {
    CommGroup g{GroupKind::Global, {0}, 0};
    for (int p = 0; p < P; ++p) g.members.push_back(dc_master(p));
    return g;
  }

  CommGroup local_group(int p) const {
    CommGroup g{GroupKind::Local, {dc_master(p)}, dc_master(p)};
    for (int j = 0; j < slaves_per_dc[p]; ++j) g.members.push_back(slave(p, j));
    return g;
  }

  // Tree parent of a node (-1 for the global master).
  NodeId parent_of(NodeId n) const {
    switch (role_of(n)) {
      case NodeRole::GlobalMaster: return -1;
      case NodeRole::DcMaster: return 0;
      case NodeRole::Slave: return dc_master(dc_of(n));
    }
    return -1;
  }

  std::vector<NodeId> children_of(NodeId n) const {
    std::vector<NodeId> out;
    if (role_of(n) == NodeRole::GlobalMaster) {
      for (int p = 0; p < P; ++p) out.push_back(dc_master(p));
    } else if (role_of(n) == NodeRole::DcMaster) {
      for (int j = 0; j < slaves_per_dc[n - 1]; ++j) out.push_back(slave(n - 1, j));
    }
    return out;
  }

  // Number of global-group edges that cross data centers: P - 1 when the global master
  // shares a data center with one DC master, P when it is external.
  int xdc_global_edges() const {
    int e = 0;
    for (int p = 0; p < P; ++p)
      if (link_class(0, dc_master(p)) == LinkClass::XDc) ++e;
    return e;
  }
};

namespace detail {

inline double parse_real(const std::string& key, std::string v) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw ConfigError("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("topology: bad number for '" + key + "': " + v);
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace detail

// Applies one `key = value` pair. Shared by the topology file reader and the spec file.
inline void set_topology_field(Topology& t, const std::string& key, const std::string& value,
                               std::vector<std::string>& slaves_raw) {
  if (key == "P") {
    t.P = static_cast<int>(detail::parse_real(key, value));
  } else if (key == "slaves_per_dc") {
    slaves_raw = detail::split_list(value);
  } else if (key == "xdc_bandwidth") {
    t.xdc_bandwidth = detail::parse_real(key, value);
  } else if (key == "xdc_latency") {
    t.xdc_latency = detail::parse_real(key, value);
  } else if (key == "indc_bandwidth") {
    t.indc_bandwidth = detail::parse_real(key, value);
  } else if (key == "indc_latency") {
    t.indc_latency = detail::parse_real(key, value);
  } else if (key == "global_master_dc") {
    t.global_master_dc = value == "external" ? Topology::kExternal
                                             : static_cast<int>(detail::parse_real(key, value));
  } else if (key == "compute_rate") {
    t.compute_rate = detail::parse_real(key, value);
  } else if (key == "dc_names") {
    t.dc_names = detail::split_list(value);
  } else {
    throw ConfigError("topology: unknown key '" + key + "'");
  }
}

// A single slave count applies to every data center.
inline void finish_topology(Topology& t, const std::vector<std::string>& slaves_raw) {
  if (!slaves_raw.empty()) {
    t.slaves_per_dc.clear();
    for (const auto& s : slaves_raw)
      t.slaves_per_dc.push_back(static_cast<int>(detail::parse_real("slaves_per_dc", s)));
  }
  if (t.slaves_per_dc.size() == 1 && t.P > 1) t.slaves_per_dc.assign(static_cast<std::size_t>(t.P), t.slaves_per_dc[0]);
  t.validate();
}

// Plain `key = value` lines; '#' starts a comment.
inline Topology parse_topology(std::istream& in) {
  Topology t;
  std::vector<std::string> slaves_raw;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    auto eq = line.find('=');
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    if (eq == std::string::npos) throw ConfigError("topology: expected key = value, got '" + line + "'");
    auto key = detail::split_list(line.substr(0, eq));
    auto val = line.substr(eq + 1);
    auto vb = val.find_first_not_of(" \t\r");
    auto ve = val.find_last_not_of(" \t\r");
    val = vb == std::string::npos ? "" : val.substr(vb, ve - vb + 1);
    if (key.size() != 1) throw ConfigError("topology: bad key in '" + line + "'");
    set_topology_field(t, key[0], val, slaves_raw);
  }
  finish_topology(t, slaves_raw);
  return t;
}

inline Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open topology file '" + path + "'");
  return parse_topology(in);
}

}  // namespace gdml
