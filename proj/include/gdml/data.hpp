#pragma once

// Dataset ingestion: LibSVM text, feature hashing, per-data-center partitioning and
// the binary shard file format.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gdml/error.hpp"

namespace gdml {

struct SparseExample {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;          // finite, non-zero
  int label = 1;                       // -1 or +1

  std::size_t nnz() const noexcept { return indices.size(); }

  friend bool operator==(const SparseExample&, const SparseExample&) = default;
};

using Dataset = std::vector<SparseExample>;

struct DcShard {
  int dc_id = 0;
  std::vector<SparseExample> examples;
  std::vector<std::size_t> ids;  // position of each example in the source dataset

  std::size_t n() const noexcept { return examples.size(); }
  std::size_t nnz_total() const noexcept {
    std::size_t s = 0;
    for (const auto& ex : examples) s += ex.nnz();
    return s;
  }
};

// Sorts by index, sums duplicates, drops entries that end up zero.
inline void normalize_features(std::vector<std::uint32_t>& idx, std::vector<double>& val) {
  std::vector<std::size_t> order(idx.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return idx[a] < idx[b]; });
  std::vector<std::uint32_t> out_idx;
  std::vector<double> out_val;
  out_idx.reserve(idx.size());
  out_val.reserve(idx.size());
  for (std::size_t k = 0; k < order.size();) {
    std::uint32_t i = idx[order[k]];
    double sum = 0.0;
    for (; k < order.size() && idx[order[k]] == i; ++k) sum += val[order[k]];
    if (sum != 0.0) {
      out_idx.push_back(i);
      out_val.push_back(sum);
    }
  }
  idx = std::move(out_idx);
  val = std::move(out_val);
}

// Throws DimensionError if the example violates the SparseExample invariants for dimension d.
inline void validate_example(const SparseExample& ex, std::size_t d) {
  if (ex.indices.size() != ex.values.size()) throw DimensionError("indices/values length mismatch");
  if (ex.label != 1 && ex.label != -1) throw DimensionError("label must be -1 or +1");
  for (std::size_t k = 0; k < ex.indices.size(); ++k) {
    if (ex.indices[k] >= d) throw DimensionError("feature index out of range");
    if (k > 0 && ex.indices[k] <= ex.indices[k - 1])
      throw DimensionError("feature indices not strictly increasing");
    if (!std::isfinite(ex.values[k]) || ex.values[k] == 0.0)
      throw DimensionError("feature value must be finite and non-zero");
  }
}

inline std::size_t feature_dimension(std::span<const SparseExample> data) {
  std::size_t d = 0;
  for (const auto& ex : data)
    if (!ex.indices.empty()) d = std::max<std::size_t>(d, ex.indices.back() + 1);
  return d;
}

// Mean number of non-zeros per example (d-bar). Zero for an empty set.
inline double average_sparsity(std::span<const SparseExample> data) {
  if (data.empty()) return 0.0;
  std::size_t nnz = 0;
  for (const auto& ex : data) nnz += ex.nnz();
  return static_cast<double>(nnz) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// LibSVM text

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace detail

// Parses one `label idx:val ...` line. Labels 0/1 are mapped to -1/+1.
inline SparseExample parse_libsvm_line(std::string_view line, std::size_t line_no) {
  SparseExample ex;
  std::vector<std::string_view> tokens;
  for (std::size_t pos = 0; pos < line.size();) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    if (end > pos) tokens.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  if (tokens.empty()) throw ParseError(line_no, "empty line");

  double label = 0.0;
  if (!detail::parse_double(tokens[0], label)) throw ParseError(line_no, "bad label '" + std::string(tokens[0]) + "'");
  if (label == 1.0) {
    ex.label = 1;
  } else if (label == -1.0 || label == 0.0) {
    ex.label = -1;
  } else {
    throw ParseError(line_no, "label must be one of -1, 0, +1");
  }

  for (std::size_t t = 1; t < tokens.size(); ++t) {
    auto tok = tokens[t];
    auto colon = tok.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size())
      throw ParseError(line_no, "expected idx:val, got '" + std::string(tok) + "'");
    std::uint64_t idx = 0;
    auto idx_str = tok.substr(0, colon);
    auto [p, ec] = std::from_chars(idx_str.data(), idx_str.data() + idx_str.size(), idx);
    if (ec != std::errc{} || p != idx_str.data() + idx_str.size() ||
        idx > std::numeric_limits<std::uint32_t>::max())
      throw ParseError(line_no, "bad feature index '" + std::string(idx_str) + "'");
    double v = 0.0;
    if (!detail::parse_double(tok.substr(colon + 1), v))
      throw ParseError(line_no, "bad feature value '" + std::string(tok.substr(colon + 1)) + "'");
    if (!std::isfinite(v)) throw ParseError(line_no, "non-finite feature value");
    ex.indices.push_back(static_cast<std::uint32_t>(idx));
    ex.values.push_back(v);
  }
  normalize_features(ex.indices, ex.values);
  return ex;
}

// Blank lines and lines starting with '#' are skipped; trailing '# ...' comments are stripped.
inline Dataset parse_libsvm(std::istream& in) {
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    out.push_back(parse_libsvm_line(view, line_no));
  }
  return out;
}

inline Dataset read_libsvm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file '" + path + "'");
  return parse_libsvm(in);
}

inline std::string serialize_libsvm(const SparseExample& ex) {
  std::string s = ex.label > 0 ? "+1" : "-1";
  std::array<char, 64> buf{};
  for (std::size_t k = 0; k < ex.indices.size(); ++k) {
    s += ' ';
    s += std::to_string(ex.indices[k]);
    s += ':';
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), ex.values[k]);
    s.append(buf.data(), p);
  }
  return s;
}

inline void write_libsvm(std::ostream& out, std::span<const SparseExample> data) {
  for (const auto& ex : data) out << serialize_libsvm(ex) << '\n';
}

// ---------------------------------------------------------------------------
// Feature hashing
//
// bucket(i) = mix64(i ^ mix64(seed)) mod d
// sign(i)   = +1 if the low bit of mix64(i ^ mix64(seed ^ kSignSalt)) is 0, else -1
//
// mix64 is the SplitMix64 output function applied to x + 0x9e3779b97f4a7c15, so
// mix64(0) is the first output of a SplitMix64 generator seeded with 0 (0xe220a8397b1dcdaf).

inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SplitMixHasher {
  static constexpr std::uint64_t kSignSalt = 0x5851f42d4c957f2dULL;

  explicit SplitMixHasher(std::uint64_t seed = 0)
      : bucket_key_(mix64(seed)), sign_key_(mix64(seed ^ kSignSalt)) {}

  std::uint64_t bucket(std::uint64_t raw, std::uint64_t dim) const noexcept {
    return mix64(raw ^ bucket_key_) % dim;
  }
  int sign(std::uint64_t raw) const noexcept { return (mix64(raw ^ sign_key_) & 1U) ? -1 : 1; }

 private:
  std::uint64_t bucket_key_;
  std::uint64_t sign_key_;
};

// Maps i -> i mod d with positive sign; used to check the hashing plumbing in isolation.
struct IdentityHasher {
  std::uint64_t bucket(std::uint64_t raw, std::uint64_t dim) const noexcept { return raw % dim; }
  int sign(std::uint64_t) const noexcept { return 1; }
};

template <class H>
concept FeatureHasher = requires(const H& h, std::uint64_t x) {
  { h.bucket(x, x) } -> std::convertible_to<std::uint64_t>;
  { h.sign(x) } -> std::convertible_to<int>;
};

struct HashingConfig {
  std::uint64_t target_dim = 1u << 20;
  std::uint64_t seed = 0;
  bool signed_hash = false;

  void validate() const {
    if (target_dim < 1) throw ConfigError("hash target_dim must be >= 1");
    if (target_dim > std::numeric_limits<std::uint32_t>::max())
      throw ConfigError("hash target_dim must fit in 32 bits");
  }
};

template <FeatureHasher H>
SparseExample hash_features(const SparseExample& ex, const HashingConfig& cfg, const H& hasher) {
  cfg.validate();
  SparseExample out;
  out.label = ex.label;
  out.indices.reserve(ex.nnz());
  out.values.reserve(ex.nnz());
  for (std::size_t k = 0; k < ex.nnz(); ++k) {
    out.indices.push_back(static_cast<std::uint32_t>(hasher.bucket(ex.indices[k], cfg.target_dim)));
    double v = ex.values[k];
    if (cfg.signed_hash) v *= hasher.sign(ex.indices[k]);
    out.values.push_back(v);
  }
  normalize_features(out.indices, out.values);
  return out;
}

inline SparseExample hash_features(const SparseExample& ex, const HashingConfig& cfg) {
  return hash_features(ex, cfg, SplitMixHasher(cfg.seed));
}

inline Dataset hash_dataset(std::span<const SparseExample> data, const HashingConfig& cfg) {
  SplitMixHasher hasher(cfg.seed);
  Dataset out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back(hash_features(ex, cfg, hasher));
  return out;
}

// ---------------------------------------------------------------------------
// Partitioning

enum class PartitionKind { RandomUniform, RandomWeighted, LabelBiased };

struct PartitionStrategy {
  PartitionKind kind = PartitionKind::RandomUniform;
  std::vector<double> weights;  // RandomWeighted only
  double skew = 0.0;            // LabelBiased only, in [0, 1]

  static PartitionStrategy uniform() { return {}; }
  static PartitionStrategy weighted(std::vector<double> w) {
    return {PartitionKind::RandomWeighted, std::move(w), 0.0};
  }
  static PartitionStrategy label_biased(double skew) { return {PartitionKind::LabelBiased, {}, skew}; }
};

inline const char* to_string(PartitionKind k) {
  switch (k) {
    case PartitionKind::RandomUniform: return "random-uniform";
    case PartitionKind::RandomWeighted: return "random-weighted";
    case PartitionKind::LabelBiased: return "label-biased";
  }
  return "?";
}

inline PartitionKind partition_kind_from_string(std::string_view s) {
  if (s == "random-uniform") return PartitionKind::RandomUniform;
  if (s == "random-weighted") return PartitionKind::RandomWeighted;
  if (s == "label-biased") return PartitionKind::LabelBiased;
  throw ConfigError("unknown partition strategy '" + std::string(s) + "'");
}

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; std distributions are not portable.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace detail

inline std::vector<DcShard> partition(const Dataset& data, int P, const PartitionStrategy& strategy,
                                      std::uint64_t seed) {
  if (P < 1) throw ConfigError("number of partitions must be >= 1");
  if (static_cast<std::size_t>(P) > data.size())
    throw ConfigError("number of partitions (" + std::to_string(P) + ") exceeds number of examples (" +
                      std::to_string(data.size()) + ")");

  std::vector<double> cumulative;
  if (strategy.kind == PartitionKind::RandomWeighted) {
    if (strategy.weights.size() != static_cast<std::size_t>(P))
      throw ConfigError("random-weighted needs exactly P weights");
    double total = 0.0;
    for (double w : strategy.weights) {
      if (!(w >= 0.0)) throw ConfigError("partition weights must be non-negative");
      total += w;
      cumulative.push_back(total);
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("partition weights must sum to 1");
  }
  if (strategy.kind == PartitionKind::LabelBiased && !(strategy.skew >= 0.0 && strategy.skew <= 1.0))
    throw ConfigError("label-biased skew must be in [0, 1]");

  std::vector<DcShard> shards(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) shards[p].dc_id = p;

  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t dc = 0;
    switch (strategy.kind) {
      case PartitionKind::RandomUniform:
        dc = detail::uniform_below(rng, static_cast<std::uint64_t>(P));
        break;
      case PartitionKind::RandomWeighted: {
        double u = detail::unit_uniform(rng);
        dc = static_cast<std::size_t>(P - 1);
        for (int p = 0; p < P; ++p) {
          if (u < cumulative[p]) {
            dc = static_cast<std::size_t>(p);
            break;
          }
        }
        break;
      }
      case PartitionKind::LabelBiased: {
        // Both draws are taken for every example so the stream does not depend on labels.
        double u = detail::unit_uniform(rng);
        auto uniform_dc = detail::uniform_below(rng, static_cast<std::uint64_t>(P));
        dc = (data[i].label > 0 && u < strategy.skew) ? 0 : uniform_dc;
        break;
      }
    }
    shards[dc].examples.push_back(data[i]);
    shards[dc].ids.push_back(i);
  }
  return shards;
}

// ---------------------------------------------------------------------------
// Binary shard file: "GDML1", u64 count, then per record
// u32 nnz, nnz x (u32 index, f32 value), i8 label. All little-endian.

inline constexpr std::string_view kShardMagic = "GDML1";

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  std::array<unsigned char, sizeof(T)> b{};
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, float>) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    bits = u;
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t k = 0; k < sizeof(T); ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), sizeof(T))) throw Error("shard file truncated");
  std::uint64_t bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  if constexpr (std::is_same_v<T, float>) {
    auto u = static_cast<std::uint32_t>(bits);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace detail

// Values are stored as f32, so a round trip rounds them to single precision.
inline void write_shard(std::ostream& out, std::span<const SparseExample> examples) {
  out.write(kShardMagic.data(), static_cast<std::streamsize>(kShardMagic.size()));
  detail::put_le<std::uint64_t>(out, examples.size());
  for (const auto& ex : examples) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ex.nnz()));
    for (std::size_t k = 0; k < ex.nnz(); ++k) {
      detail::put_le<std::uint32_t>(out, ex.indices[k]);
      detail::put_le<float>(out, static_cast<float>(ex.values[k]));
    }
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(static_cast<std::int8_t>(ex.label)));
  }
}

inline Dataset read_shard(std::istream& in) {
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), 5) || std::string_view(magic.data(), 5) != kShardMagic)
    throw Error("not a GDML1 shard file");
  auto count = detail::get_le<std::uint64_t>(in);
  Dataset out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t r = 0; r < count; ++r) {
    SparseExample ex;
    auto nnz = detail::get_le<std::uint32_t>(in);
    ex.indices.reserve(nnz);
    ex.values.reserve(nnz);
    for (std::uint32_t k = 0; k < nnz; ++k) {
      ex.indices.push_back(detail::get_le<std::uint32_t>(in));
      ex.values.push_back(detail::get_le<float>(in));
    }
    auto label = static_cast<std::int8_t>(detail::get_le<std::uint8_t>(in));
    if (label != 1 && label != -1) throw Error("shard record has invalid label");
    ex.label = label;
    out.push_back(std::move(ex));
  }
  return out;
}

inline void write_shard_file(const std::string& path, std::span<const SparseExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write shard file '" + path + "'");
  write_shard(out, examples);
}

inline Dataset read_shard_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open shard file '" + path + "'");
  return read_shard(in);
}

}  // namespace gdml
