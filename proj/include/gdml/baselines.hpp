#pragma once

// Comparison strategies: copy everything to one data center and train there (with or
// without charging the copy time), and truncated Newton whose every Hessian-vector
// product crosses data centers.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string_view>

#include "gdml/fadl.hpp"

namespace gdml {

enum class MethodKind { CentralizedStream, CentralizedBulk, Distributed, DistributedFadl };

inline constexpr MethodKind kAllMethods[] = {MethodKind::CentralizedStream, MethodKind::CentralizedBulk,
                                             MethodKind::Distributed, MethodKind::DistributedFadl};

inline const char* to_string(MethodKind m) {
  switch (m) {
    case MethodKind::CentralizedStream: return "centralized-stream";
    case MethodKind::CentralizedBulk: return "centralized-bulk";
    case MethodKind::Distributed: return "distributed";
    case MethodKind::DistributedFadl: return "distributed-fadl";
  }
  return "?";
}

inline MethodKind method_from_string(std::string_view s) {
  for (MethodKind m : kAllMethods)
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + std::string(s) +
                    "' (expected centralized-stream, centralized-bulk, distributed or distributed-fadl)");
}

inline bool is_centralized(MethodKind m) {
  return m == MethodKind::CentralizedStream || m == MethodKind::CentralizedBulk;
}

// Serialized size of shipped data: nnz * bytes_per_nonzero * ratio, unless an explicit
// dataset size is given, in which case a shard ships its share n_p / N of it.
struct CompressionModel {
  double ratio = 1.0;
  double bytes_per_nonzero = 8.0;  // 4-byte index + 4-byte value
  std::optional<double> dataset_bytes_override;

  void validate() const {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("compression ratio must be in (0, 1]");
    if (!(bytes_per_nonzero > 0.0)) throw ConfigError("bytes_per_nonzero must be > 0");
    if (dataset_bytes_override && !(*dataset_bytes_override >= 0.0))
      throw ConfigError("dataset_bytes_override must be >= 0");
  }

  std::uint64_t shard_bytes(std::size_t nnz, std::size_t n_p, std::size_t N) const {
    if (dataset_bytes_override)
      return N == 0 ? 0
                    : static_cast<std::uint64_t>(
                          std::llround(*dataset_bytes_override * static_cast<double>(n_p) / static_cast<double>(N)));
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(nnz) * bytes_per_nonzero * ratio));
  }
};

// Largest shard; ties go to the lowest id.
inline int largest_shard(std::span<const DcShard> shards) {
  int best = 0;
  for (std::size_t p = 1; p < shards.size(); ++p)
    if (shards[p].examples.size() > shards[static_cast<std::size_t>(best)].examples.size()) best = static_cast<int>(p);
  return best;
}

struct CopyPlan {
  int destination = 0;
  TransferLedger ledger;  // one X-DC entry per source DC
  std::uint64_t bytes = 0;
  double time = 0.0;  // sources ship in parallel: max over sources of latency + bytes / bandwidth
};

inline CopyPlan plan_copy(std::span<const DcShard> shards, const Topology& topo, const CompressionModel& comp,
                          int destination = -1) {
  comp.validate();
  CopyPlan plan;
  plan.destination = destination < 0 ? largest_shard(shards) : destination;
  if (plan.destination >= topo.P) throw ConfigError("centralization destination out of range");
  std::size_t N = 0;
  for (const auto& s : shards) N += s.examples.size();
  for (int p = 0; p < topo.P; ++p) {
    if (p == plan.destination) continue;
    const auto& s = shards[static_cast<std::size_t>(p)];
    const std::uint64_t b = comp.shard_bytes(s.nnz_total(), s.examples.size(), N);
    plan.ledger.append(LedgerEntry{topo.node_name(topo.dc_master(p)), topo.node_name(topo.dc_master(plan.destination)),
                                   topo.dc_name(p), topo.dc_name(plan.destination), b, LinkClass::XDc,
                                   to_string(Tag::Copy), 0.0, 0});
    plan.bytes += b;
    plan.time = std::max(plan.time, topo.transfer_time(LinkClass::XDc, static_cast<double>(b)));
  }
  return plan;
}

// Single-DC topology at the destination holding every slave of the original one.
inline Topology centralized_topology(const Topology& topo, int destination) {
  Topology c = topo;
  c.P = 1;
  c.slaves_per_dc = {topo.total_slaves()};
  c.dc_names = {topo.dc_name(destination)};
  c.global_master_dc = 0;
  return c;
}

enum class CentralizedVariant { Stream, Bulk };

inline TrainResult run_centralized(std::span<const DcShard> shards, const Topology& topo, const FadlConfig& cfg,
                                   CentralizedVariant variant, const CompressionModel& comp,
                                   const RunOptions& opts = {}, int destination = -1) {
  require_shards(shards, topo);
  CopyPlan plan = plan_copy(shards, topo, comp, destination);

  DcShard all;
  all.dc_id = plan.destination;
  for (const auto& s : shards) {
    all.examples.insert(all.examples.end(), s.examples.begin(), s.examples.end());
    all.ids.insert(all.ids.end(), s.ids.begin(), s.ids.end());
  }
  RunOptions inner = opts;
  if (inner.dim == 0) inner.dim = infer_dimension(shards);
  const bool bulk = variant == CentralizedVariant::Bulk;
  TrainResult res = train_logistic(DirectionMethod::Fadl, std::span<const DcShard>(&all, 1),
                                   centralized_topology(topo, plan.destination), cfg, inner,
                                   bulk ? "centralized-bulk" : "centralized-stream");

  const double delay = bulk ? plan.time : 0.0;
  TransferLedger ledger = std::move(plan.ledger);
  ledger.append_all(res.ledger, 0, delay);
  res.ledger = std::move(ledger);
  res.report.copy_bytes = plan.bytes;
  res.report.copy_time = delay;
  for (auto& row : res.report.rows) {
    row.xdc_bytes_cum += plan.bytes;
    row.sim_time += delay;
  }
  return res;
}

inline TrainResult run_distributed_tron(std::span<const DcShard> shards, const Topology& topo, const FadlConfig& cfg,
                                        const RunOptions& opts = {}) {
  return train_logistic(DirectionMethod::GlobalNewton, shards, topo, cfg, opts, "distributed");
}

inline TrainResult run_method(MethodKind m, std::span<const DcShard> shards, const Topology& topo,
                              const FadlConfig& cfg, const CompressionModel& comp, const RunOptions& opts = {},
                              int destination = -1) {
  switch (m) {
    case MethodKind::CentralizedStream:
      return run_centralized(shards, topo, cfg, CentralizedVariant::Stream, comp, opts, destination);
    case MethodKind::CentralizedBulk:
      return run_centralized(shards, topo, cfg, CentralizedVariant::Bulk, comp, opts, destination);
    case MethodKind::Distributed: return run_distributed_tron(shards, topo, cfg, opts);
    case MethodKind::DistributedFadl: return fadl_train(shards, topo, cfg, opts);
  }
  throw ConfigError("unknown method");
}

}  // namespace gdml
