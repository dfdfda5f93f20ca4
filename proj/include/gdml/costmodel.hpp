#pragma once

// Closed-form X-DC byte predictions for centralizing the data (T_C) and for distributed
// training (T_D), their crossover, and storage multipliers.
//
// Paper mode reproduces the textbook arithmetic: T_C = (N - n_p*) d_bar B_nnz ratio and
// T_D = 2 P d T_outer B_float. Exact mode counts what this implementation actually sends:
// per-shard copy sizes, the real number of X-DC tree edges, frame headers, the initial
// loss scalar, line-search scalars, step sizes and the final stop frame.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdml/baselines.hpp"
#include "gdml/comm/frame.hpp"

namespace gdml {

enum class CostMode { Paper, Exact };

struct CostInputs {
  std::vector<double> n_p;       // examples per data center
  double d = 0.0;                // model dimension
  double d_bar = 0.0;            // average non-zeros per example
  int T_outer = 0;
  double bytes_per_float = 4.0;
  double bytes_per_nonzero = 8.0;
  double ratio = 1.0;
  std::optional<double> dataset_bytes;  // serialized (compressed) dataset size, overrides d_bar

  // Exact mode only.
  std::vector<double> nnz_p;       // non-zeros per data center; falls back to n_p * d_bar
  int xdc_edges = -1;              // X-DC edges of the global group; -1 means P
  int line_search_trials = 0;      // summed over the run

  int P() const { return static_cast<int>(n_p.size()); }
  double N() const { return std::accumulate(n_p.begin(), n_p.end(), 0.0); }

  int largest() const {
    return static_cast<int>(std::max_element(n_p.begin(), n_p.end()) - n_p.begin());
  }

  int edges() const { return xdc_edges < 0 ? P() : xdc_edges; }

  void validate() const {
    if (n_p.empty()) throw ConfigError("cost inputs: need at least one partition");
    for (double n : n_p)
      if (!(n > 0.0)) throw ConfigError("cost inputs: every n_p must be > 0");
    if (!(d > 0.0)) throw ConfigError("cost inputs: d must be > 0");
    if (!(d_bar >= 0.0)) throw ConfigError("cost inputs: d_bar must be >= 0");
    if (T_outer < 0) throw ConfigError("cost inputs: T_outer must be >= 0");
    if (!(bytes_per_float > 0.0) || !(bytes_per_nonzero > 0.0)) throw ConfigError("cost inputs: byte sizes must be > 0");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("cost inputs: ratio must be in (0, 1]");
    if (!nnz_p.empty() && nnz_p.size() != n_p.size()) throw ConfigError("cost inputs: nnz_p must list P counts");
    if (xdc_edges > P()) throw ConfigError("cost inputs: more X-DC edges than data centers");
    if (line_search_trials < 0) throw ConfigError("cost inputs: line_search_trials must be >= 0");
  }
};

// Inputs describing actual shards and a compression model.
inline CostInputs cost_inputs_from(std::span<const DcShard> shards, std::size_t d, const CompressionModel& comp,
                                   int T_outer = 0) {
  CostInputs in;
  double nnz = 0.0;
  for (const auto& s : shards) {
    in.n_p.push_back(static_cast<double>(s.examples.size()));
    in.nnz_p.push_back(static_cast<double>(s.nnz_total()));
    nnz += static_cast<double>(s.nnz_total());
  }
  in.d = static_cast<double>(d);
  in.d_bar = in.N() > 0 ? nnz / in.N() : 0.0;
  in.T_outer = T_outer;
  in.bytes_per_nonzero = comp.bytes_per_nonzero;
  in.ratio = comp.ratio;
  in.dataset_bytes = comp.dataset_bytes_override;
  return in;
}

inline double predict_tc(const CostInputs& in, CostMode mode = CostMode::Paper) {
  in.validate();
  const int star = in.largest();
  const double N = in.N();
  if (mode == CostMode::Paper) {
    const double moved = N - in.n_p[static_cast<std::size_t>(star)];
    if (in.dataset_bytes) return *in.dataset_bytes * moved / N;
    return moved * in.d_bar * in.bytes_per_nonzero * in.ratio;
  }
  // Exact: the same rounding the copy ledger applies, shard by shard.
  double total = 0.0;
  for (int p = 0; p < in.P(); ++p) {
    if (p == star) continue;
    const auto q = static_cast<std::size_t>(p);
    const double raw = in.dataset_bytes ? *in.dataset_bytes * in.n_p[q] / N
                                        : (in.nnz_p.empty() ? in.n_p[q] * in.d_bar : in.nnz_p[q]) *
                                              in.bytes_per_nonzero * in.ratio;
    total += static_cast<double>(std::llround(raw));
  }
  return total;
}

inline double predict_td(const CostInputs& in, CostMode mode = CostMode::Paper) {
  in.validate();
  const double P = in.P();
  const double T = in.T_outer;
  if (mode == CostMode::Paper) return 2.0 * P * in.d * T * in.bytes_per_float;

  const double E = in.edges();
  auto frame = [&](double len) { return static_cast<double>(kFrameHeaderBytes) + in.bytes_per_float * len; };
  const double grad = (T + 1.0) * E * frame(in.d) + T * E * frame(in.d);  // reduces, then broadcasts
  const double direction = 2.0 * T * E * frame(in.d);
  const double scalars = E * frame(1)                                      // initial loss
                         + 2.0 * in.line_search_trials * E * frame(1)       // trial t and loss delta
                         + T * E * frame(1)                                 // accepted step
                         + E * frame(0);                                    // stop
  return grad + direction + scalars;
}

enum class Regime { Centralized, Distributed };

inline const char* to_string(Regime r) { return r == Regime::Centralized ? "centralized" : "distributed"; }

struct Crossover {
  Regime favors = Regime::Distributed;
  double tc = 0.0;
  double td = 0.0;
  double margin = 1.0;  // the losing side's bytes over the winning side's
};

// Distributed wins when 2 P d T_outer < (N - n_p*) d_bar, both in bytes.
inline Crossover crossover(const CostInputs& in, CostMode mode = CostMode::Paper) {
  Crossover c;
  c.tc = predict_tc(in, mode);
  c.td = predict_td(in, mode);
  c.favors = c.td < c.tc ? Regime::Distributed : Regime::Centralized;
  const double hi = std::max(c.tc, c.td);
  const double lo = std::min(c.tc, c.td);
  c.margin = lo > 0.0 ? hi / lo : (hi > 0.0 ? INFINITY : 1.0);
  return c;
}

struct StorageReport {
  std::vector<double> per_dc;  // bytes stored at each data center
  double original = 0.0;       // bytes of the dataset itself
  double total = 0.0;
  double multiplier() const { return original > 0.0 ? total / original : 1.0; }
};

// Distributed methods keep the shards where they are; centralized methods additionally
// hold a copy of every other shard at the destination.
inline StorageReport storage_report(std::span<const double> shard_bytes, MethodKind method, int destination = -1) {
  StorageReport r;
  r.per_dc.assign(shard_bytes.begin(), shard_bytes.end());
  r.original = std::accumulate(shard_bytes.begin(), shard_bytes.end(), 0.0);
  if (is_centralized(method) && !shard_bytes.empty()) {
    const auto star = destination >= 0
                          ? static_cast<std::size_t>(destination)
                          : static_cast<std::size_t>(std::max_element(shard_bytes.begin(), shard_bytes.end()) -
                                                     shard_bytes.begin());
    if (star >= shard_bytes.size()) throw ConfigError("storage report: destination out of range");
    r.per_dc[star] += r.original - shard_bytes[star];
  }
  r.total = std::accumulate(r.per_dc.begin(), r.per_dc.end(), 0.0);
  return r;
}

inline StorageReport storage_report(std::span<const DcShard> shards, MethodKind method, const CompressionModel& comp,
                                    int destination = -1) {
  std::size_t N = 0;
  for (const auto& s : shards) N += s.examples.size();
  std::vector<double> bytes;
  for (const auto& s : shards) bytes.push_back(static_cast<double>(comp.shard_bytes(s.nnz_total(), s.examples.size(), N)));
  if (destination < 0 && !shards.empty()) destination = largest_shard(shards);
  return storage_report(bytes, method, destination);
}

}  // namespace gdml
