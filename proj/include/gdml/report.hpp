#pragma once

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "gdml/comm/ledger.hpp"
#include "gdml/loss.hpp"

namespace gdml {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct ReportRow {
  int iter = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  std::uint64_t xdc_bytes_cum = 0;
  std::uint64_t indc_bytes_cum = 0;
  double sim_time = 0.0;   // simulated seconds, or wall seconds on the socket transport
  double wall_time = 0.0;  // real seconds since the global master started

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct TrainReport {
  std::string method;
  std::string time_axis = "sim_time";
  std::vector<ReportRow> rows;
  bool converged = false;
  int outer_iterations = 0;
  int cg_iterations = 0;  // summed over DCs (FADL) or at the global master (distributed)
  int line_search_trials = 0;
  std::uint64_t copy_bytes = 0;
  double copy_time = 0.0;

  double final_objective() const { return rows.empty() ? 0.0 : rows.back().f; }
  double final_grad_norm() const { return rows.empty() ? 0.0 : rows.back().grad_norm; }

  void write_csv(std::ostream& out) const {
    out << "iter,f,grad_norm,xdc_bytes_cum,indc_bytes_cum,sim_time,wall_time\n";
    for (const auto& r : rows)
      out << r.iter << ',' << format_double(r.f) << ',' << format_double(r.grad_norm) << ',' << r.xdc_bytes_cum << ','
          << r.indc_bytes_cum << ',' << format_double(r.sim_time) << ',' << format_double(r.wall_time) << '\n';
  }
};

struct TrainResult {
  WeightVector w;
  TrainReport report;
  TransferLedger ledger;
};

}  // namespace gdml
