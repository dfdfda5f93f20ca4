#pragma once

// Runs one program per node on a chosen transport and gathers each node's result and the
// merged transfer ledger. Simulated: one thread per node. Socket: one forked process per
// node on this machine, talking over loopback TCP (or the configured addresses).

#include <sys/wait.h>

#include <exception>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <thread>

#include "gdml/comm/simulated.hpp"
#include "gdml/comm/socket.hpp"

namespace gdml {

enum class TransportKind { Simulated, Socket };

inline const char* to_string(TransportKind k) { return k == TransportKind::Simulated ? "simulated" : "socket"; }

inline TransportKind transport_kind_from_string(std::string_view s) {
  if (s == "simulated") return TransportKind::Simulated;
  if (s == "socket") return TransportKind::Socket;
  throw ConfigError("unknown transport '" + std::string(s) + "'");
}

using NodeProgram = std::function<nlohmann::json(Endpoint&)>;

struct ClusterRun {
  std::vector<nlohmann::json> results;  // indexed by node id
  TransferLedger ledger;
};

namespace detail {

struct NodeFailure {
  NodeId node = 0;
  std::string kind;
  std::string what;
};

inline NodeFailure classify(NodeId node, std::exception_ptr e) {
  try {
    std::rethrow_exception(e);
  } catch (const OptimizationError& x) {
    return {node, "optimization", x.what()};
  } catch (const DimensionError& x) {
    return {node, "dimension", x.what()};
  } catch (const ConfigError& x) {
    return {node, "config", x.what()};
  } catch (const TransportError& x) {
    return {node, "transport", x.what()};
  } catch (const std::exception& x) {
    return {node, "error", x.what()};
  } catch (...) {
    return {node, "error", "unknown exception"};
  }
}

// Failures caused by a peer going away are secondary; report the first primary one.
[[noreturn]] inline void raise_root_cause(std::vector<NodeFailure> failures, const Topology& topo) {
  const NodeFailure* pick = &failures.front();
  for (const auto& f : failures)
    if (f.kind != "transport") {
      pick = &f;
      break;
    }
  const std::string msg = topo.node_name(pick->node) + ": " + pick->what;
  if (pick->kind == "optimization") throw OptimizationError(msg);
  if (pick->kind == "dimension") throw DimensionError(msg);
  if (pick->kind == "config") throw ConfigError(msg);
  if (pick->kind == "transport") throw TransportError(msg);
  throw Error(msg);
}

inline nlohmann::json entry_to_json(const LedgerEntry& e) {
  return nlohmann::json::array({e.src, e.dst, e.src_dc, e.dst_dc, e.bytes, static_cast<int>(e.link), e.tag,
                                e.sim_time, e.lamport});
}

inline LedgerEntry entry_from_json(const nlohmann::json& j) {
  return LedgerEntry{j[0].get<std::string>(), j[1].get<std::string>(), j[2].get<std::string>(),
                     j[3].get<std::string>(), j[4].get<std::uint64_t>(), static_cast<LinkClass>(j[5].get<int>()),
                     j[6].get<std::string>(), j[7].get<double>(), j[8].get<std::uint64_t>()};
}

}  // namespace detail

class Transport {
 public:
  Transport(TransportKind kind, Topology topo, TransportOptions opts)
      : kind_(kind), topo_(std::move(topo)), opts_(std::move(opts)) {
    topo_.validate();
    if (kind_ == TransportKind::Socket && !opts_.socket_addresses.empty() &&
        opts_.socket_addresses.size() != static_cast<std::size_t>(topo_.node_count()))
      throw ConfigError("socket transport needs host:port assignments for all " +
                        std::to_string(topo_.node_count()) + " nodes");
  }

  TransportKind kind() const noexcept { return kind_; }
  const Topology& topology() const noexcept { return topo_; }
  const TransportOptions& options() const noexcept { return opts_; }

  ClusterRun run(const NodeProgram& program) const {
    return kind_ == TransportKind::Simulated ? run_threads(program) : run_processes(program);
  }

 private:
  ClusterRun run_threads(const NodeProgram& program) const {
    const int n = topo_.node_count();
    SimNetwork network(topo_, opts_.unreachable);
    std::vector<nlohmann::json> results(static_cast<std::size_t>(n));
    std::vector<std::vector<LedgerEntry>> sent(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    {
      std::vector<std::jthread> threads;
      threads.reserve(static_cast<std::size_t>(n));
      for (NodeId id = 0; id < n; ++id) {
        bool down = std::find(opts_.unreachable.begin(), opts_.unreachable.end(), id) != opts_.unreachable.end();
        if (down) continue;
        threads.emplace_back([&, id] {
          try {
            SimulatedEndpoint ep(topo_, id, opts_, network);
            try {
              results[id] = program(ep);
            } catch (...) {
              sent[id] = ep.sent();
              throw;
            }
            sent[id] = ep.sent();
          } catch (...) {
            errors[id] = std::current_exception();
          }
          network.mark_down(id);
        });
      }
    }
    std::vector<detail::NodeFailure> failures;
    for (NodeId id = 0; id < n; ++id)
      if (errors[id]) failures.push_back(detail::classify(id, errors[id]));
    if (!failures.empty()) detail::raise_root_cause(std::move(failures), topo_);

    std::vector<LedgerEntry> all;
    for (auto& s : sent) all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    return ClusterRun{std::move(results), TransferLedger::from_unordered(std::move(all))};
  }

  ClusterRun run_processes(const NodeProgram& program) const {
    const int n = topo_.node_count();
    std::vector<std::string> addresses = opts_.socket_addresses;
    std::vector<net::Fd> listeners(static_cast<std::size_t>(n));
    if (addresses.empty()) {
      addresses.assign(static_cast<std::size_t>(n), "127.0.0.1:0");
      for (NodeId id = 0; id < n; ++id) {
        if (topo_.children_of(id).empty()) continue;
        auto [fd, port] = net::listen_on(net::Address{"127.0.0.1", 0});
        listeners[id] = std::move(fd);
        addresses[id] = "127.0.0.1:" + std::to_string(port);
      }
    }

    const auto start = std::chrono::steady_clock::now();
    std::vector<pid_t> pids(static_cast<std::size_t>(n), -1);
    std::vector<net::Fd> pipes(static_cast<std::size_t>(n));
    for (NodeId id = 0; id < n; ++id) {
      int fds[2];
      if (::pipe(fds) != 0) throw TransportError(std::string("pipe(): ") + std::strerror(errno));
      pid_t pid = ::fork();
      if (pid < 0) throw TransportError(std::string("fork(): ") + std::strerror(errno));
      if (pid == 0) {
        ::close(fds[0]);
        for (NodeId other = 0; other < n; ++other)
          if (other != id) listeners[other].reset();
        for (auto& p : pipes) p.reset();
        child_main(id, program, addresses, std::move(listeners[id]), start, fds[1]);
      }
      ::close(fds[1]);
      pids[id] = pid;
      pipes[id] = net::Fd(fds[0]);
    }
    for (auto& l : listeners) l.reset();

    // Drain every pipe concurrently so no child blocks on a full pipe.
    std::vector<std::string> outputs(static_cast<std::size_t>(n));
    std::vector<char> open(static_cast<std::size_t>(n), 1);
    for (int remaining = n; remaining > 0;) {
      std::vector<pollfd> pfds;
      std::vector<NodeId> owners;
      for (NodeId id = 0; id < n; ++id)
        if (open[id]) {
          pfds.push_back(pollfd{pipes[id].get(), POLLIN, 0});
          owners.push_back(id);
        }
      if (::poll(pfds.data(), pfds.size(), -1) < 0) {
        if (errno == EINTR) continue;
        break;
      }
      for (std::size_t k = 0; k < pfds.size(); ++k) {
        if (pfds[k].revents == 0) continue;
        char buf[65536];
        ssize_t r = ::read(pfds[k].fd, buf, sizeof(buf));
        if (r > 0) {
          outputs[owners[k]].append(buf, static_cast<std::size_t>(r));
        } else if (r == 0 || errno != EINTR) {
          open[owners[k]] = 0;
          --remaining;
        }
      }
    }
    for (NodeId id = 0; id < n; ++id) {
      int status = 0;
      ::waitpid(pids[id], &status, 0);
    }

    std::vector<nlohmann::json> results(static_cast<std::size_t>(n));
    std::vector<LedgerEntry> all;
    std::vector<detail::NodeFailure> failures;
    for (NodeId id = 0; id < n; ++id) {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(outputs[id]);
      } catch (const std::exception&) {
        failures.push_back({id, "transport", "worker process terminated abnormally"});
        continue;
      }
      for (const auto& e : doc["ledger"]) all.push_back(detail::entry_from_json(e));
      if (doc.contains("error")) {
        failures.push_back({id, doc["error"]["kind"].get<std::string>(), doc["error"]["what"].get<std::string>()});
      } else {
        results[id] = std::move(doc["result"]);
      }
    }
    if (!failures.empty()) detail::raise_root_cause(std::move(failures), topo_);
    return ClusterRun{std::move(results), TransferLedger::from_unordered(std::move(all))};
  }

  [[noreturn]] void child_main(NodeId id, const NodeProgram& program, const std::vector<std::string>& addresses,
                               net::Fd listener, std::chrono::steady_clock::time_point start, int out_fd) const {
    ::signal(SIGPIPE, SIG_IGN);
    nlohmann::json doc;
    doc["ledger"] = nlohmann::json::array();
    try {
      std::optional<SocketEndpoint> ep;
      try {
        ep.emplace(topo_, id, opts_, addresses, std::move(listener), start);
        doc["result"] = program(*ep);
      } catch (...) {
        if (ep)
          for (const auto& e : ep->sent()) doc["ledger"].push_back(detail::entry_to_json(e));
        throw;
      }
      for (const auto& e : ep->sent()) doc["ledger"].push_back(detail::entry_to_json(e));
    } catch (...) {
      auto f = detail::classify(id, std::current_exception());
      doc["error"] = {{"kind", f.kind}, {"what", f.what}};
    }
    std::string text = doc.dump();
    net::write_all_fd(out_fd, text);
    ::close(out_fd);
    ::_exit(0);
  }

  TransportKind kind_;
  Topology topo_;
  TransportOptions opts_;
};

inline Transport make_transport(TransportKind kind, const Topology& topo, TransportOptions opts = {}) {
  return Transport(kind, topo, std::move(opts));
}

}  // namespace gdml
