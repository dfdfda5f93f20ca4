#pragma once

// The distributed optimizer over the two-level communication tree.
//
// Every outer iteration the global master G gathers the loss gradient (slaves -> DC
// masters -> G), tests for convergence, obtains a search direction, runs a backtracking
// line search with scalar queries and finally broadcasts the accepted step size. Two ways
// of getting the direction share this skeleton:
//
//   Fadl           G broadcasts the gradient; each DC master minimizes its local quadratic
//                  model with CG, using only in-DC Hessian-vector products; G averages the
//                  local directions.
//   GlobalNewton   G runs CG itself and every Hessian-vector product is a round trip over
//                  the whole tree (the communication-heavy baseline).
//
// Every node holds its own copy of w and applies the same quantized update, so weights
// never travel after initialization.

#include <chrono>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "gdml/comm/collectives.hpp"
#include "gdml/comm/transport.hpp"
#include "gdml/loss.hpp"
#include "gdml/optim.hpp"
#include "gdml/report.hpp"

namespace gdml {

enum class DirectionMethod { Fadl, GlobalNewton };

struct RunOptions {
  TransportKind transport = TransportKind::Simulated;
  TransportOptions transport_options;
  std::size_t dim = 0;  // 0: infer from the data
};

namespace detail {

[[noreturn]] inline void protocol_error(const Endpoint& ep, const Frame& f, const char* expecting) {
  throw TransportError("protocol error at " + ep.topology().node_name(ep.self()) + ": got '" + to_string(f.tag) +
                       "' while expecting " + expecting);
}

inline double frame_scalar(const Endpoint& ep, const Frame& f) {
  if (f.payload.size() != 1)
    throw TransportError("protocol error at " + ep.topology().node_name(ep.self()) + ": '" + to_string(f.tag) +
                         "' must carry one value");
  return f.payload[0];
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline nlohmann::json global_master_program(Endpoint& ep, const FadlConfig& cfg, DirectionMethod method,
                                            std::size_t d) {
  const auto t0 = std::chrono::steady_clock::now();
  const Topology& topo = ep.topology();
  const CommGroup gcg = topo.global_group();
  const double P = topo.P;
  const Vector zeros(d, 0.0);
  Vector w(d, 0.0);

  nlohmann::json rows = nlohmann::json::array();
  double f = 0.0;
  double g0_norm = 0.0;
  bool converged = false;
  int cg_total = 0;
  int ls_total = 0;
  int r = 0;
  for (;; ++r) {
    Vector loss_grad = reduce(ep, gcg, Tag::Grad, zeros);
    if (r == 0) f = global_objective(reduce_scalar(ep, gcg, Tag::Loss, 0.0), w, cfg.lambda);
    Vector g = loss_grad;
    la::axpy(cfg.lambda, w, g);
    const double gn = la::norm2(g);
    if (!std::isfinite(gn) || !std::isfinite(f)) throw OptimizationError("non-finite objective or gradient");
    if (r == 0) g0_norm = gn;
    rows.push_back({r, f, gn, ep.lamport(), ep.clock(), seconds_since(t0)});

    converged = gn <= cfg.eps_g * g0_norm;
    if (converged || r >= cfg.max_outer) {
      broadcast(ep, gcg, Tag::Stop);
      break;
    }

    Vector dir;
    if (method == DirectionMethod::Fadl) {
      broadcast(ep, gcg, Tag::Grad, loss_grad);
      Vector sum = reduce(ep, gcg, Tag::Direction, zeros);
      la::scale(1.0 / P, sum);
      dir = broadcast(ep, gcg, Tag::Direction, sum);
    } else {
      Vector rhs = g;
      la::scale(-1.0, rhs);
      auto hv = [&](std::span<const double> u) {
        Vector uq = broadcast(ep, gcg, Tag::HvRequest, u);
        Vector out = reduce(ep, gcg, Tag::Hv, zeros);
        la::axpy(cfg.lambda, uq, out);
        return out;
      };
      auto cg = conjugate_gradient(hv, rhs, cfg.cg_tol, cfg.cg_max_iter);
      cg_total += cg.iterations;
      dir = broadcast(ep, gcg, Tag::Direction, cg.solution);
    }

    // f(w + t d) = f(w) + lambda/2 (||w + t d||^2 - ||w||^2) + sum of loss deltas.
    const double wd = la::dot(w, dir);
    const double dd = la::dot(dir, dir);
    auto objective_at = [&](double t) {
      const double trial = t;
      broadcast(ep, gcg, Tag::LineSearchTrial, std::span<const double>(&trial, 1));
      const double delta = reduce_scalar(ep, gcg, Tag::LineSearchDelta, 0.0);
      return f + 0.5 * cfg.lambda * t * (2.0 * wd + t * dd) + delta;
    };
    auto on_wire = [&](double t) { return quantize(t, ep.precision()); };
    auto ls = line_search(f, la::dot(g, dir), cfg, objective_at, on_wire);
    ls_total += ls.trials;
    broadcast(ep, gcg, Tag::Step, std::span<const double>(&ls.t, 1));
    la::axpy(ls.t, dir, w);
    f = ls.f_new;
  }

  return {{"w", w},
          {"rows", rows},
          {"converged", converged},
          {"outer_iterations", r},
          {"cg_iterations", cg_total},
          {"line_search_trials", ls_total}};
}

inline nlohmann::json dc_master_program(Endpoint& ep, const FadlConfig& cfg, std::size_t d) {
  const Topology& topo = ep.topology();
  const int p = topo.dc_of(ep.self());
  const CommGroup gcg = topo.global_group();
  const CommGroup lcg = topo.local_group(p);
  const Vector zeros(d, 0.0);
  Vector w(d, 0.0);
  int cg_total = 0;

  for (int r = 0;; ++r) {
    reduce(ep, gcg, Tag::Grad, reduce(ep, lcg, Tag::Grad, zeros));
    if (r == 0) reduce_scalar(ep, gcg, Tag::Loss, reduce_scalar(ep, lcg, Tag::Loss, 0.0));

    Vector dir;
    while (dir.empty()) {
      Frame cmd = receive_broadcast(ep, gcg);
      switch (cmd.tag) {
        case Tag::Stop:
          broadcast(ep, lcg, Tag::Stop);
          return {{"cg_iterations", cg_total}};
        case Tag::Grad: {
          auto local_hessian = [&](std::span<const double> u) {
            broadcast(ep, lcg, Tag::HvRequest, u);
            return reduce(ep, lcg, Tag::Hv, zeros);
          };
          auto model = build_local_model(w, cmd.payload, cfg.lambda, topo.P, local_hessian);
          auto solve = cg_minimize(model, cfg.cg_tol, cfg.cg_max_iter);
          cg_total += solve.cg_iterations;
          la::axpy(-1.0, w, solve.w_p);  // d_p = w_p - w^r
          reduce(ep, gcg, Tag::Direction, solve.w_p);
          break;
        }
        case Tag::HvRequest:
          broadcast(ep, lcg, Tag::HvRequest, cmd.payload);
          reduce(ep, gcg, Tag::Hv, reduce(ep, lcg, Tag::Hv, zeros));
          break;
        case Tag::Direction:
          if (cmd.payload.size() != d) throw DimensionError("direction has the wrong length");
          dir = broadcast(ep, lcg, Tag::Direction, cmd.payload);
          break;
        default:
          protocol_error(ep, cmd, "a command");
      }
    }

    for (;;) {
      Frame cmd = receive_broadcast(ep, gcg);
      if (cmd.tag == Tag::LineSearchTrial) {
        broadcast(ep, lcg, Tag::LineSearchTrial, cmd.payload);
        reduce_scalar(ep, gcg, Tag::LineSearchDelta, reduce_scalar(ep, lcg, Tag::LineSearchDelta, 0.0));
      } else if (cmd.tag == Tag::Step) {
        broadcast(ep, lcg, Tag::Step, cmd.payload);
        la::axpy(frame_scalar(ep, cmd), dir, w);
        break;
      } else {
        protocol_error(ep, cmd, "a line-search trial or step");
      }
    }
  }
}

template <LocalObjective Obj>
nlohmann::json slave_program(Endpoint& ep, Obj& obj) {
  const Topology& topo = ep.topology();
  const CommGroup lcg = topo.local_group(topo.dc_of(ep.self()));
  const std::size_t d = obj.dimension();
  const double work = obj.work_units();
  Vector w(d, 0.0);
  int hv_count = 0;

  for (int r = 0;; ++r) {
    LossStats st = obj.begin_iterate(w);
    ep.charge_compute(2.0 * work);
    reduce(ep, lcg, Tag::Grad, st.grad);
    if (r == 0) reduce_scalar(ep, lcg, Tag::Loss, st.loss_sum);

    Vector dir;
    while (dir.empty()) {
      Frame cmd = receive_broadcast(ep, lcg);
      switch (cmd.tag) {
        case Tag::Stop:
          return {{"hv_products", hv_count}};
        case Tag::HvRequest: {
          if (cmd.payload.size() != d) throw DimensionError("Hessian-vector request has the wrong length");
          Vector hv = obj.hessian_vec(cmd.payload);
          ep.charge_compute(2.0 * work);
          ++hv_count;
          reduce(ep, lcg, Tag::Hv, hv);
          break;
        }
        case Tag::Direction:
          dir = std::move(cmd.payload);
          obj.set_direction(dir);
          ep.charge_compute(work);
          break;
        default:
          protocol_error(ep, cmd, "a command");
      }
    }

    // Line-search trials reuse the cached margins and are not charged.
    for (;;) {
      Frame cmd = receive_broadcast(ep, lcg);
      if (cmd.tag == Tag::LineSearchTrial) {
        reduce_scalar(ep, lcg, Tag::LineSearchDelta, obj.loss_delta(frame_scalar(ep, cmd)));
      } else if (cmd.tag == Tag::Step) {
        la::axpy(frame_scalar(ep, cmd), dir, w);
        break;
      } else {
        protocol_error(ep, cmd, "a line-search trial or step");
      }
    }
  }
}

inline TrainResult assemble_result(ClusterRun run, std::string method, TransportKind kind) {
  const auto& g = run.results.at(0);
  TrainResult out;
  out.w = g.at("w").get<Vector>();
  auto& rep = out.report;
  rep.method = std::move(method);
  rep.time_axis = kind == TransportKind::Simulated ? "sim_time" : "wall_time";
  rep.converged = g.at("converged").get<bool>();
  rep.outer_iterations = g.at("outer_iterations").get<int>();
  rep.line_search_trials = g.at("line_search_trials").get<int>();
  rep.cg_iterations = g.at("cg_iterations").get<int>();
  for (std::size_t n = 1; n < run.results.size(); ++n)
    if (run.results[n].contains("cg_iterations")) rep.cg_iterations += run.results[n]["cg_iterations"].get<int>();
  for (const auto& row : g.at("rows")) {
    ReportRow rr;
    rr.iter = row[0].get<int>();
    rr.f = row[1].get<double>();
    rr.grad_norm = row[2].get<double>();
    auto totals = run.ledger.totals_through(row[3].get<std::uint64_t>());
    rr.xdc_bytes_cum = totals.xdc;
    rr.indc_bytes_cum = totals.indc;
    rr.sim_time = row[4].get<double>();
    rr.wall_time = row[5].get<double>();
    rep.rows.push_back(rr);
  }
  out.ledger = std::move(run.ledger);
  return out;
}

}  // namespace detail

// Contiguous block j of S blocks of a DC's examples.
inline std::span<const SparseExample> slave_block(std::span<const SparseExample> examples, int j, int S) {
  const std::size_t n = examples.size();
  const std::size_t lo = n * static_cast<std::size_t>(j) / static_cast<std::size_t>(S);
  const std::size_t hi = n * static_cast<std::size_t>(j + 1) / static_cast<std::size_t>(S);
  return examples.subspan(lo, hi - lo);
}

// Runs the optimizer with one objective per slave. `make_objective(p, j)` builds the
// objective of slave j in data center p; it is called on the slave's own thread/process.
template <class Factory>
  requires LocalObjective<std::invoke_result_t<Factory&, int, int>>
TrainResult train_distributed(DirectionMethod method, const Topology& topo, const FadlConfig& cfg,
                              const RunOptions& opts, std::size_t dim, Factory make_objective,
                              std::string method_name) {
  cfg.validate();
  topo.validate();
  if (dim == 0) throw DimensionError("model dimension must be >= 1");
  Transport transport(opts.transport, topo, opts.transport_options);
  NodeProgram program = [&](Endpoint& ep) -> nlohmann::json {
    switch (topo.role_of(ep.self())) {
      case NodeRole::GlobalMaster: return detail::global_master_program(ep, cfg, method, dim);
      case NodeRole::DcMaster: return detail::dc_master_program(ep, cfg, dim);
      case NodeRole::Slave: {
        auto obj = make_objective(topo.dc_of(ep.self()), topo.slave_index(ep.self()));
        if (obj.dimension() != dim) throw DimensionError("slave objective dimension differs from the model");
        return detail::slave_program(ep, obj);
      }
    }
    return {};
  };
  return detail::assemble_result(transport.run(program), std::move(method_name), opts.transport);
}

inline std::size_t infer_dimension(std::span<const DcShard> shards) {
  std::size_t d = 0;
  for (const auto& s : shards) d = std::max(d, feature_dimension(s.examples));
  return d;
}

inline void require_shards(std::span<const DcShard> shards, const Topology& topo) {
  if (shards.size() != static_cast<std::size_t>(topo.P))
    throw ConfigError("expected " + std::to_string(topo.P) + " shards, got " + std::to_string(shards.size()));
  for (std::size_t p = 0; p < shards.size(); ++p)
    if (shards[p].examples.empty()) throw ConfigError("shard of data center " + std::to_string(p) + " is empty");
}

// Logistic regression on the shards held at each data center.
inline TrainResult train_logistic(DirectionMethod method, std::span<const DcShard> shards, const Topology& topo,
                                  const FadlConfig& cfg, const RunOptions& opts, std::string method_name) {
  require_shards(shards, topo);
  const std::size_t dim = opts.dim ? opts.dim : infer_dimension(shards);
  auto factory = [&](int p, int j) {
    return LogisticShardObjective(slave_block(shards[p].examples, j, topo.slaves_per_dc[p]), dim);
  };
  return train_distributed(method, topo, cfg, opts, dim, factory, std::move(method_name));
}

inline TrainResult fadl_train(std::span<const DcShard> shards, const Topology& topo, const FadlConfig& cfg,
                              const RunOptions& opts = {}) {
  return train_logistic(DirectionMethod::Fadl, shards, topo, cfg, opts, "distributed-fadl");
}

}  // namespace gdml
