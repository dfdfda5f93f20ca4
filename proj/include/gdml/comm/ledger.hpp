#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "gdml/comm/frame.hpp"
#include "gdml/comm/topology.hpp"
#include "gdml/error.hpp"

namespace gdml {

struct LedgerEntry {
  std::string src;
  std::string dst;
  std::string src_dc;
  std::string dst_dc;
  std::uint64_t bytes = 0;
  LinkClass link = LinkClass::InDc;
  std::string tag;
  double sim_time = 0.0;
  std::uint64_t lamport = 0;  // sender's logical clock; orders the ledger causally

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

struct ByteTotals {
  std::uint64_t indc = 0;
  std::uint64_t xdc = 0;

  friend bool operator==(const ByteTotals&, const ByteTotals&) = default;
};

// Append-only record of every message. Totals always equal the sum of the entries.
class TransferLedger {
 public:
  void append(LedgerEntry e) {
    if ((e.link == LinkClass::XDc) != (e.src_dc != e.dst_dc))
      throw Error("ledger: link class of " + e.src + " -> " + e.dst + " disagrees with its data centers");
    (e.link == LinkClass::XDc ? totals_.xdc : totals_.indc) += e.bytes;
    entries_.push_back(std::move(e));
  }

  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }
  const ByteTotals& totals() const noexcept { return totals_; }
  std::uint64_t xdc_bytes() const noexcept { return totals_.xdc; }
  std::uint64_t indc_bytes() const noexcept { return totals_.indc; }

  // Bytes of all entries whose logical send time is <= lamport.
  ByteTotals totals_through(std::uint64_t lamport) const {
    ByteTotals t;
    for (const auto& e : entries_)
      if (e.lamport <= lamport) (e.link == LinkClass::XDc ? t.xdc : t.indc) += e.bytes;
    return t;
  }

  ByteTotals totals_for_tag(const std::string& tag) const {
    ByteTotals t;
    for (const auto& e : entries_)
      if (e.tag == tag) (e.link == LinkClass::XDc ? t.xdc : t.indc) += e.bytes;
    return t;
  }

  std::size_t count(LinkClass c) const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [c](const LedgerEntry& e) { return e.link == c; }));
  }

  // CSV `src,dst,bytes,link_class,tag,sim_time`.
  void write_csv(std::ostream& out) const {
    out << "src,dst,bytes,link_class,tag,sim_time\n";
    for (const auto& e : entries_) {
      out << e.src << ',' << e.dst << ',' << e.bytes << ',' << to_string(e.link) << ',' << e.tag << ','
          << std::setprecision(17) << e.sim_time << '\n';
    }
  }

  // Builds a ledger from unordered entries (one batch per worker) in canonical causal order:
  // ascending (lamport, src, dst). The order does not depend on thread or socket timing.
  static TransferLedger from_unordered(std::vector<LedgerEntry> entries) {
    std::sort(entries.begin(), entries.end(), [](const LedgerEntry& a, const LedgerEntry& b) {
      return std::tie(a.lamport, a.src, a.dst) < std::tie(b.lamport, b.src, b.dst);
    });
    TransferLedger l;
    for (auto& e : entries) l.append(std::move(e));
    return l;
  }

  // Appends every entry of `other`, shifting its logical clock by `lamport_offset` and its time by `time_offset`.
  void append_all(const TransferLedger& other, std::uint64_t lamport_offset = 0, double time_offset = 0.0) {
    for (auto e : other.entries_) {
      e.lamport += lamport_offset;
      e.sim_time += time_offset;
      append(std::move(e));
    }
  }

 private:
  std::vector<LedgerEntry> entries_;
  ByteTotals totals_;
};

// True when two ledgers carry the same messages, ignoring timestamps.
inline bool same_traffic(const TransferLedger& a, const TransferLedger& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    const auto& x = a.entries()[i];
    const auto& y = b.entries()[i];
    if (std::tie(x.src, x.dst, x.bytes, x.link, x.tag, x.lamport) !=
        std::tie(y.src, y.dst, y.bytes, y.link, y.tag, y.lamport))
      return false;
  }
  return a.totals() == b.totals();
}

}  // namespace gdml
