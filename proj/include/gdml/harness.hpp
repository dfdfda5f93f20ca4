#pragma once

// Experiment orchestration: synthetic data, spec files, and method sweeps that write the
// relative-objective curves against X-DC bytes and against time.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "gdml/baselines.hpp"
#include "gdml/costmodel.hpp"
#include "gdml/toml.hpp"

namespace gdml {

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthParams {
  std::size_t N = 10000;
  std::size_t d = 1000;
  double sparsity = 20.0;  // mean non-zeros per example
  double noise = 0.0;      // label flip probability
  std::uint64_t seed = 1;
  double feature_skew = 0.0;  // Zipf exponent of feature popularity; 0 draws features uniformly

  void validate() const {
    if (N == 0) throw ConfigError("synth: N must be >= 1");
    if (d == 0) throw ConfigError("synth: d must be >= 1");
    if (!(sparsity > 0.0 && sparsity <= static_cast<double>(d))) throw ConfigError("synth: need 0 < sparsity <= d");
    if (!(noise >= 0.0 && noise < 0.5)) throw ConfigError("synth: need 0 <= noise < 0.5");
    if (!(feature_skew >= 0.0)) throw ConfigError("synth: feature_skew must be >= 0");
  }
};

namespace detail {

inline double standard_normal(std::mt19937_64& rng) {
  double u1 = unit_uniform(rng);
  while (u1 <= 0.0) u1 = unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

// Ground truth w ~ N(0, I); each example has floor(s) or floor(s)+1 distinct features
// (mean s) with value 1/sqrt(k) and label sign(w.x), flipped with probability `noise`.
// Feature j is drawn with weight (j + 1)^-feature_skew.
inline Dataset synth_dataset(const SynthParams& sp) {
  sp.validate();
  std::mt19937_64 rng(sp.seed);
  Vector w_true(sp.d);
  for (auto& v : w_true) v = detail::standard_normal(rng);

  std::vector<double> cdf;
  if (sp.feature_skew > 0.0) {
    cdf.resize(sp.d);
    double acc = 0.0;
    for (std::size_t j = 0; j < sp.d; ++j) cdf[j] = acc += std::pow(static_cast<double>(j + 1), -sp.feature_skew);
    for (auto& c : cdf) c /= acc;
  }

  const auto base = static_cast<std::size_t>(std::floor(sp.sparsity));
  const double frac = sp.sparsity - static_cast<double>(base);
  Dataset out;
  out.reserve(sp.N);
  std::vector<std::uint32_t> picked;
  for (std::size_t i = 0; i < sp.N; ++i) {
    std::size_t k = base + (detail::unit_uniform(rng) < frac ? 1 : 0);
    k = std::clamp<std::size_t>(k, 1, sp.d);
    picked.clear();
    if (cdf.empty()) {
      // Floyd's sampling of k distinct ids.
      for (std::size_t j = sp.d - k; j < sp.d; ++j) {
        auto t = static_cast<std::uint32_t>(detail::uniform_below(rng, j + 1));
        if (std::find(picked.begin(), picked.end(), t) != picked.end()) t = static_cast<std::uint32_t>(j);
        picked.push_back(t);
      }
    } else {
      while (picked.size() < k) {
        const double u = detail::unit_uniform(rng);
        auto t = static_cast<std::uint32_t>(std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), sp.d - 1));
        if (std::find(picked.begin(), picked.end(), t) == picked.end()) picked.push_back(t);
      }
    }
    std::sort(picked.begin(), picked.end());
    SparseExample ex;
    ex.indices = picked;
    ex.values.assign(k, 1.0 / std::sqrt(static_cast<double>(k)));
    double margin = 0.0;
    for (std::size_t q = 0; q < k; ++q) margin += w_true[ex.indices[q]] * ex.values[q];
    int label = margin >= 0.0 ? 1 : -1;
    if (detail::unit_uniform(rng) < sp.noise) label = -label;
    ex.label = label;
    out.push_back(std::move(ex));
  }
  return out;
}

inline Dataset synth_dataset(std::size_t N, std::size_t d, double sparsity, double noise, std::uint64_t seed) {
  return synth_dataset(SynthParams{N, d, sparsity, noise, seed});
}

// ---------------------------------------------------------------------------
// Experiment spec

struct DatasetSpec {
  std::string source = "synthetic";  // or "file" (LibSVM)
  std::string path;
  SynthParams synth;
  HashingConfig hashing{0, 0, false};  // target_dim 0 leaves file features unhashed
};

struct ExperimentSpec {
  DatasetSpec dataset;
  PartitionStrategy partition = PartitionStrategy::uniform();
  std::uint64_t partition_seed = 0;
  Topology topology;
  std::vector<MethodKind> methods;
  FadlConfig fadl;
  CompressionModel compression;
  std::string output_dir = "gdml-out";
  TransportKind transport = TransportKind::Simulated;
  WirePrecision wire = WirePrecision::F32;
  int centralize_to = -1;  // -1: largest shard
  int jitter_us = 0;
  std::uint64_t jitter_seed = 0;

  void validate() const {
    if (methods.empty()) throw ConfigError("spec: at least one method is required");
    if (dataset.source != "synthetic" && dataset.source != "file")
      throw ConfigError("spec: dataset.source must be 'synthetic' or 'file'");
    if (dataset.source == "synthetic") dataset.synth.validate();
    if (dataset.source == "file" && dataset.path.empty()) throw ConfigError("spec: dataset.path is required");
    topology.validate();
    fadl.validate();
    compression.validate();
    if (centralize_to >= topology.P) throw ConfigError("spec: run.centralize_to out of range");
    if (jitter_us < 0) throw ConfigError("spec: run.jitter_us must be >= 0");
  }
};

namespace detail {

inline std::uint64_t as_u64(const toml::Value& v) {
  const double x = v.as_number();
  if (!(x >= 0.0) || x != std::floor(x) || x > 1.8e19) throw ParseError(v.line, "expected a non-negative integer");
  return static_cast<std::uint64_t>(x);
}

inline int as_int(const toml::Value& v) {
  const double x = v.as_number();
  if (x != std::floor(x) || std::abs(x) > 2e9) throw ParseError(v.line, "expected an integer");
  return static_cast<int>(x);
}

inline std::vector<double> as_reals(const toml::Value& v) {
  std::vector<double> out;
  for (const auto& item : v.as_array()) out.push_back(item.as_number());
  return out;
}

[[noreturn]] inline void unknown_key(const std::string& table, const std::string& key, const toml::Value& v) {
  throw ParseError(v.line, "unknown key '" + key + "' in [" + table + "]");
}

}  // namespace detail

inline ExperimentSpec parse_experiment_spec(std::istream& in) {
  const toml::Document doc = toml::parse(in);
  ExperimentSpec s;
  bool methods_given = false;
  for (const auto& [table, entries] : doc) {
    if (table.empty()) {
      if (!entries.empty()) throw ParseError(entries.begin()->second.line, "keys must follow a [table] header");
      continue;
    }
    if (table == "dataset") {
      for (const auto& [k, v] : entries) {
        if (k == "source") s.dataset.source = v.as_string();
        else if (k == "path") s.dataset.path = v.as_string();
        else if (k == "N") s.dataset.synth.N = detail::as_u64(v);
        else if (k == "d") s.dataset.synth.d = detail::as_u64(v);
        else if (k == "sparsity") s.dataset.synth.sparsity = v.as_number();
        else if (k == "noise") s.dataset.synth.noise = v.as_number();
        else if (k == "seed") s.dataset.synth.seed = detail::as_u64(v);
        else if (k == "feature_skew") s.dataset.synth.feature_skew = v.as_number();
        else if (k == "hash_dim") s.dataset.hashing.target_dim = detail::as_u64(v);
        else if (k == "hash_seed") s.dataset.hashing.seed = detail::as_u64(v);
        else if (k == "signed_hash") s.dataset.hashing.signed_hash = v.as_bool();
        else detail::unknown_key(table, k, v);
      }
    } else if (table == "partition") {
      for (const auto& [k, v] : entries) {
        if (k == "strategy") s.partition.kind = partition_kind_from_string(v.as_string());
        else if (k == "weights") s.partition.weights = detail::as_reals(v);
        else if (k == "skew") s.partition.skew = v.as_number();
        else if (k == "seed") s.partition_seed = detail::as_u64(v);
        else detail::unknown_key(table, k, v);
      }
    } else if (table == "topology") {
      std::vector<std::string> slaves_raw;
      for (const auto& [k, v] : entries) {
        try {
          set_topology_field(s.topology, k, v.text(), slaves_raw);
        } catch (const ConfigError& e) {
          throw ParseError(v.line, e.what());
        }
      }
      finish_topology(s.topology, slaves_raw);
    } else if (table == "fadl") {
      for (const auto& [k, v] : entries) {
        try {
          set_fadl_field(s.fadl, k, v.text());
        } catch (const ConfigError& e) {
          throw ParseError(v.line, e.what());
        }
      }
    } else if (table == "compression") {
      for (const auto& [k, v] : entries) {
        if (k == "ratio") s.compression.ratio = v.as_number();
        else if (k == "bytes_per_nonzero") s.compression.bytes_per_nonzero = v.as_number();
        else if (k == "dataset_bytes_override") s.compression.dataset_bytes_override = v.as_number();
        else detail::unknown_key(table, k, v);
      }
    } else if (table == "run") {
      for (const auto& [k, v] : entries) {
        if (k == "methods") {
          methods_given = true;
          for (const auto& m : v.as_array()) s.methods.push_back(method_from_string(m.as_string()));
        } else if (k == "output_dir") {
          s.output_dir = v.as_string();
        } else if (k == "transport") {
          s.transport = transport_kind_from_string(v.as_string());
        } else if (k == "wire") {
          const auto& w = v.as_string();
          if (w == "f32") s.wire = WirePrecision::F32;
          else if (w == "f64") s.wire = WirePrecision::F64;
          else throw ParseError(v.line, "wire must be 'f32' or 'f64'");
        } else if (k == "centralize_to") {
          s.centralize_to = detail::as_int(v);
        } else if (k == "jitter_us") {
          s.jitter_us = detail::as_int(v);
        } else if (k == "jitter_seed") {
          s.jitter_seed = detail::as_u64(v);
        } else {
          detail::unknown_key(table, k, v);
        }
      }
    } else {
      throw ParseError(entries.empty() ? 0 : entries.begin()->second.line, "unknown table [" + table + "]");
    }
  }
  if (!methods_given) s.methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
  s.validate();
  return s;
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file '" + path + "'");
  return parse_experiment_spec(in);
}

// ---------------------------------------------------------------------------
// Sweeps

struct PreparedData {
  std::vector<DcShard> shards;
  std::size_t dim = 0;
};

inline PreparedData prepare_data(const ExperimentSpec& spec) {
  Dataset data;
  std::size_t dim = 0;
  if (spec.dataset.source == "synthetic") {
    data = synth_dataset(spec.dataset.synth);
    dim = spec.dataset.synth.d;
  } else {
    data = read_libsvm_file(spec.dataset.path);
    if (spec.dataset.hashing.target_dim > 0) {
      data = hash_dataset(data, spec.dataset.hashing);
      dim = spec.dataset.hashing.target_dim;
    } else {
      dim = feature_dimension(data);
    }
  }
  if (data.empty()) throw ConfigError("dataset is empty");
  return {partition(data, spec.topology.P, spec.partition, spec.partition_seed), dim};
}

struct MethodOutcome {
  MethodKind method;
  TrainResult result;
};

struct ExperimentResult {
  std::vector<MethodOutcome> outcomes;  // in spec order; a failed method and later ones are absent
  double f_star = 0.0;
  double t_star = 0.0;                  // total time of centralized-stream (or the fastest method)
  bool complete = true;
  std::string error;                    // set when a method failed
};

inline double relative_objective(double f, double f_star) {
  const double y = (f - f_star) / std::abs(f_star);
  return y < 0.0 ? 0.0 : y;
}

// First point of the trace whose relative objective is at most `target`.
inline const ReportRow* first_row_within(const TrainReport& rep, double f_star, double target) {
  for (const auto& r : rep.rows)
    if (relative_objective(r.f, f_star) <= target) return &r;
  return nullptr;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

inline void write_method_files(const std::filesystem::path& dir, const MethodOutcome& o, double f_star,
                               double t_star) {
  std::filesystem::create_directories(dir);
  const auto& rep = o.result.report;
  const char* name = to_string(o.method);

  std::ostringstream transfer;
  transfer << "method,xdc_bytes,rel_objective\n";
  for (const auto& r : rep.rows)
    transfer << name << ',' << r.xdc_bytes_cum << ',' << format_double(relative_objective(r.f, f_star)) << '\n';
  write_file(dir / "curve_transfer.csv", transfer.str());

  std::ostringstream time;
  time << "method," << rep.time_axis << ",time_normalized,rel_objective\n";
  for (const auto& r : rep.rows)
    time << name << ',' << format_double(r.sim_time) << ',' << format_double(t_star > 0.0 ? r.sim_time / t_star : 0.0)
         << ',' << format_double(relative_objective(r.f, f_star)) << '\n';
  write_file(dir / "curve_time.csv", time.str());

  std::ostringstream ledger;
  o.result.ledger.write_csv(ledger);
  write_file(dir / "ledger.csv", ledger.str());

  std::ostringstream report;
  rep.write_csv(report);
  write_file(dir / "report.csv", report.str());
}

inline double total_time(const TrainReport& rep) { return rep.rows.empty() ? 0.0 : rep.rows.back().sim_time; }

}  // namespace detail

// Computes f*, t* and writes every output file of the outcomes gathered so far.
inline void finalize_outputs(ExperimentResult& res, const std::string& output_dir) {
  const std::filesystem::path root(output_dir);
  std::filesystem::create_directories(root);
  res.f_star = INFINITY;
  for (const auto& o : res.outcomes)
    for (const auto& r : o.result.report.rows) res.f_star = std::min(res.f_star, r.f);
  res.t_star = 0.0;
  for (const auto& o : res.outcomes)
    if (o.method == MethodKind::CentralizedStream) res.t_star = detail::total_time(o.result.report);
  if (res.t_star == 0.0) {
    res.t_star = INFINITY;
    for (const auto& o : res.outcomes) res.t_star = std::min(res.t_star, detail::total_time(o.result.report));
    if (!std::isfinite(res.t_star)) res.t_star = 0.0;
  }

  std::ostringstream summary;
  summary << "method,status,outer_iterations,converged,final_f,rel_objective,xdc_bytes,indc_bytes,copy_bytes,"
             "total_time,time_normalized\n";
  for (const auto& o : res.outcomes) {
    detail::write_method_files(root / to_string(o.method), o, res.f_star, res.t_star);
    const auto& rep = o.result.report;
    const double t = detail::total_time(rep);
    summary << to_string(o.method) << ",ok," << rep.outer_iterations << ',' << (rep.converged ? 1 : 0) << ','
            << format_double(rep.final_objective()) << ','
            << format_double(relative_objective(rep.final_objective(), res.f_star)) << ','
            << o.result.ledger.xdc_bytes() << ',' << o.result.ledger.indc_bytes() << ',' << rep.copy_bytes << ','
            << format_double(t) << ',' << format_double(res.t_star > 0.0 ? t / res.t_star : 0.0) << '\n';
  }
  if (!res.complete) summary << "failed,error,,,,,,,,,\n";
  detail::write_file(root / "summary.csv", summary.str());
  const auto flag = root / "INCOMPLETE";
  if (res.complete) {
    std::filesystem::remove(flag);
  } else {
    detail::write_file(flag, res.error + "\n");
  }
}

inline RunOptions run_options_for(const ExperimentSpec& spec, std::size_t dim) {
  RunOptions o;
  o.transport = spec.transport;
  o.transport_options.wire = spec.wire;
  o.transport_options.jitter_max_us = spec.jitter_us;
  o.transport_options.jitter_seed = spec.jitter_seed;
  o.dim = dim;
  return o;
}

// Runs each method in order on the same shards. A failing method stops the sweep; the
// outputs of the methods that finished are still written and the directory is flagged
// with an INCOMPLETE file carrying the error.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const PreparedData& data) {
  spec.validate();
  ExperimentResult res;
  const RunOptions opts = run_options_for(spec, data.dim);
  for (MethodKind m : spec.methods) {
    try {
      res.outcomes.push_back(
          {m, run_method(m, data.shards, spec.topology, spec.fadl, spec.compression, opts, spec.centralize_to)});
    } catch (const std::exception& e) {
      res.complete = false;
      res.error = std::string(to_string(m)) + ": " + e.what();
      break;
    }
  }
  finalize_outputs(res, spec.output_dir);
  return res;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) { return run_experiment(spec, prepare_data(spec)); }

}  // namespace gdml
