// gdml: command-line front end for synthesis, partitioning, training, cost prediction
// and full method sweeps.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "gdml/gdml.hpp"

namespace fs = std::filesystem;
using namespace gdml;

namespace {

enum ExitCode { kOk = 0, kSpecError = 2, kRuntimeError = 3 };

struct DataOptions {
  std::string input;
  std::size_t hash_dim = 0;
  std::uint64_t hash_seed = 0;
  bool signed_hash = false;
  int partitions = 2;
  std::string strategy = "random-uniform";
  std::vector<double> weights;
  double skew = 0.0;
  std::uint64_t partition_seed = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--input", o.input, "LibSVM input file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--hash-dim", o.hash_dim, "hash features into this many buckets (0: no hashing)");
  cmd->add_option("--hash-seed", o.hash_seed, "feature hashing seed");
  cmd->add_flag("--signed-hash", o.signed_hash, "multiply hashed values by a sign hash");
  cmd->add_option("--partitions", o.partitions, "number of data centers")->check(CLI::PositiveNumber);
  cmd->add_option("--partition-strategy", o.strategy, "random-uniform | random-weighted | label-biased");
  cmd->add_option("--weights", o.weights, "random-weighted: one weight per data center")->delimiter(',');
  cmd->add_option("--skew", o.skew, "label-biased: skew in [0, 1]");
  cmd->add_option("--partition-seed", o.partition_seed, "partitioning seed");
}

PartitionStrategy strategy_of(const DataOptions& o) {
  PartitionStrategy s;
  s.kind = partition_kind_from_string(o.strategy);
  s.weights = o.weights;
  s.skew = o.skew;
  return s;
}

PreparedData load_partitioned(const DataOptions& o) {
  Dataset data = read_libsvm_file(o.input);
  std::size_t dim;
  if (o.hash_dim > 0) {
    data = hash_dataset(data, HashingConfig{o.hash_dim, o.hash_seed, o.signed_hash});
    dim = o.hash_dim;
  } else {
    dim = feature_dimension(data);
  }
  if (data.empty()) throw ConfigError("input has no examples");
  return {partition(data, o.partitions, strategy_of(o), o.partition_seed), dim};
}

void write_text(const fs::path& p, const auto& writer) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  writer(out);
}

// ---------------------------------------------------------------------------

int cmd_run(const std::string& spec_path, const std::string& output_dir, const std::string& transport) {
  ExperimentSpec spec = load_experiment_spec(spec_path);
  if (!output_dir.empty()) spec.output_dir = output_dir;
  if (!transport.empty()) spec.transport = transport_kind_from_string(transport);
  auto res = run_experiment(spec);
  std::cout << std::left << std::setw(20) << "method" << std::right << std::setw(7) << "iters" << std::setw(16)
            << "final_f" << std::setw(14) << "xdc_bytes" << std::setw(14) << "time" << std::setw(10) << "t/t*"
            << '\n';
  for (const auto& o : res.outcomes) {
    const auto& rep = o.result.report;
    const double t = rep.rows.empty() ? 0.0 : rep.rows.back().sim_time;
    std::cout << std::left << std::setw(20) << to_string(o.method) << std::right << std::setw(7)
              << rep.outer_iterations << std::setw(16) << std::setprecision(10) << rep.final_objective()
              << std::setw(14) << o.result.ledger.xdc_bytes() << std::setw(14) << std::setprecision(5) << t
              << std::setw(10) << std::setprecision(4) << (res.t_star > 0 ? t / res.t_star : 0.0) << '\n';
  }
  std::cout << "outputs written to " << spec.output_dir << '\n';
  if (!res.complete) {
    std::cerr << "gdml: sweep incomplete: " << res.error << '\n';
    return kRuntimeError;
  }
  return kOk;
}

struct SynthOptions {
  SynthParams params;
  std::string output;
};

int cmd_synth(const SynthOptions& o) {
  auto data = synth_dataset(o.params);
  write_text(o.output, [&](std::ostream& out) { write_libsvm(out, data); });
  std::cout << "wrote " << data.size() << " examples (d = " << o.params.d << ", mean nnz "
            << average_sparsity(data) << ") to " << o.output << '\n';
  return kOk;
}

int cmd_partition(const DataOptions& d, const std::string& out_dir) {
  auto prepared = load_partitioned(d);
  fs::create_directories(out_dir);
  for (const auto& s : prepared.shards) {
    const fs::path base = fs::path(out_dir) / ("dc" + std::to_string(s.dc_id));
    write_shard_file(base.string() + ".gdml", s.examples);
    write_text(base.string() + ".ids", [&](std::ostream& out) {
      for (auto id : s.ids) out << id << '\n';
    });
    std::cout << base.filename().string() << ": " << s.examples.size() << " examples, " << s.nnz_total()
              << " non-zeros\n";
  }
  std::cout << "dimension " << prepared.dim << '\n';
  return kOk;
}

struct TrainOptions {
  DataOptions data;
  std::string topology_file;
  std::string config_file;
  std::string method = "distributed-fadl";
  double compression_ratio = 1.0;
  double bytes_per_nonzero = 8.0;
  std::optional<double> dataset_bytes;
  int centralize_to = -1;
  std::string transport = "simulated";
  bool f64_wire = false;
  std::string output_dir = "gdml-train";
};

int cmd_train(const TrainOptions& o) {
  Topology topo = o.topology_file.empty() ? Topology::uniform(o.data.partitions, 1) : load_topology_file(o.topology_file);
  DataOptions d = o.data;
  d.partitions = topo.P;
  FadlConfig cfg = o.config_file.empty() ? FadlConfig{} : load_fadl_config_file(o.config_file);
  CompressionModel comp{o.compression_ratio, o.bytes_per_nonzero, o.dataset_bytes};
  comp.validate();
  const MethodKind method = method_from_string(o.method);
  RunOptions opts;
  opts.transport = transport_kind_from_string(o.transport);
  opts.transport_options.wire = o.f64_wire ? WirePrecision::F64 : WirePrecision::F32;

  auto prepared = load_partitioned(d);
  opts.dim = prepared.dim;
  auto res = run_method(method, prepared.shards, topo, cfg, comp, opts, o.centralize_to);

  fs::create_directories(o.output_dir);
  write_text(fs::path(o.output_dir) / "report.csv", [&](std::ostream& out) { res.report.write_csv(out); });
  write_text(fs::path(o.output_dir) / "ledger.csv", [&](std::ostream& out) { res.ledger.write_csv(out); });
  write_text(fs::path(o.output_dir) / "weights.txt", [&](std::ostream& out) {
    for (double v : res.w) out << format_double(v) << '\n';
  });
  std::cout << res.report.method << ": " << res.report.outer_iterations << " outer iterations, f = "
            << std::setprecision(12) << res.report.final_objective() << ", X-DC bytes " << res.ledger.xdc_bytes()
            << ", in-DC bytes " << res.ledger.indc_bytes() << (res.report.converged ? "" : " (not converged)")
            << '\n';
  return kOk;
}

struct CostOptions {
  std::vector<double> n_p;
  double N = 0;
  int P = 2;
  double d = 0;
  double d_bar = 0;
  int T_outer = 0;
  double bytes_per_float = 4;
  double bytes_per_nonzero = 8;
  double ratio = 1;
  std::optional<double> dataset_bytes;
  int edges = -1;
  int ls_trials = 0;
  std::string mode = "paper";
};

std::string human_bytes(double b) {
  const char* units[] = {"B", "KB", "MB", "GB", "TB", "PB"};
  int u = 0;
  while (b >= 1000.0 && u < 5) {
    b /= 1000.0;
    ++u;
  }
  std::ostringstream s;
  s << std::setprecision(4) << b << ' ' << units[u];
  return s.str();
}

int cmd_cost(const CostOptions& o) {
  CostInputs in;
  if (!o.n_p.empty()) {
    in.n_p = o.n_p;
  } else {
    if (!(o.N > 0)) throw ConfigError("cost: give --N with --P, or --n-p");
    if (o.P < 1) throw ConfigError("cost: --P must be >= 1");
    in.n_p.assign(static_cast<std::size_t>(o.P), o.N / o.P);
  }
  in.d = o.d;
  in.d_bar = o.d_bar;
  in.T_outer = o.T_outer;
  in.bytes_per_float = o.bytes_per_float;
  in.bytes_per_nonzero = o.bytes_per_nonzero;
  in.ratio = o.ratio;
  in.dataset_bytes = o.dataset_bytes;
  in.xdc_edges = o.edges;
  in.line_search_trials = o.ls_trials;
  CostMode mode;
  if (o.mode == "paper") mode = CostMode::Paper;
  else if (o.mode == "exact") mode = CostMode::Exact;
  else throw ConfigError("cost: --mode must be 'paper' or 'exact'");

  auto c = crossover(in, mode);
  std::cout << std::left << std::setw(26) << "T_C (centralize)" << std::right << std::setw(22) << std::setprecision(6)
            << c.tc << "  " << human_bytes(c.tc) << '\n';
  std::cout << std::left << std::setw(26) << "T_D (distributed)" << std::right << std::setw(22) << c.td << "  "
            << human_bytes(c.td) << '\n';
  std::cout << "favors " << to_string(c.favors) << " by " << std::setprecision(4) << c.margin << "x\n";
  std::vector<double> shard(in.n_p);
  std::cout << "storage: distributed " << storage_report(shard, MethodKind::DistributedFadl).multiplier()
            << "x, centralized " << storage_report(shard, MethodKind::CentralizedBulk).multiplier() << "x\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geo-distributed logistic regression: FADL and baselines"};
  app.require_subcommand(1);

  std::string spec_path, run_output, run_transport;
  auto* run = app.add_subcommand("run", "run a method sweep from a spec file");
  run->add_option("--spec", spec_path, "experiment spec (TOML subset)")->required()->check(CLI::ExistingFile);
  run->add_option("--output-dir", run_output, "override [run] output_dir");
  run->add_option("--transport", run_transport, "override [run] transport: simulated | socket");

  SynthOptions synth;
  auto* syn = app.add_subcommand("synth", "write a synthetic LibSVM dataset");
  syn->add_option("--N", synth.params.N, "examples")->required();
  syn->add_option("--d", synth.params.d, "features")->required();
  syn->add_option("--sparsity", synth.params.sparsity, "mean non-zeros per example");
  syn->add_option("--noise", synth.params.noise, "label flip probability");
  syn->add_option("--seed", synth.params.seed, "random seed");
  syn->add_option("--feature-skew", synth.params.feature_skew, "Zipf exponent of feature popularity");
  syn->add_option("--output", synth.output, "output file")->required();

  DataOptions part_data;
  std::string part_out = "shards";
  auto* part = app.add_subcommand("partition", "split a LibSVM file into per-DC binary shards");
  add_data_options(part, part_data);
  part->add_option("--output-dir", part_out, "directory for dc<p>.gdml and dc<p>.ids");

  TrainOptions train;
  auto* tr = app.add_subcommand("train", "train one method on a LibSVM file");
  add_data_options(tr, train.data);
  tr->add_option("--topology", train.topology_file, "topology file (key = value); sets the partition count")
      ->check(CLI::ExistingFile);
  tr->add_option("--config", train.config_file, "optimizer config file (key = value)")->check(CLI::ExistingFile);
  tr->add_option("--method", train.method, "centralized-stream | centralized-bulk | distributed | distributed-fadl");
  tr->add_option("--compression-ratio", train.compression_ratio, "fraction in (0, 1]");
  tr->add_option("--bytes-per-nonzero", train.bytes_per_nonzero, "wire size of one index/value pair");
  tr->add_option("--dataset-bytes-override", train.dataset_bytes, "serialized dataset size in bytes");
  tr->add_option("--centralize-to", train.centralize_to, "destination DC for centralized methods");
  tr->add_option("--transport", train.transport, "simulated | socket");
  tr->add_flag("--f64-wire", train.f64_wire, "send doubles instead of floats");
  tr->add_option("--output-dir", train.output_dir, "directory for report.csv, ledger.csv, weights.txt");

  CostOptions cost;
  auto* co = app.add_subcommand("cost", "predict X-DC bytes for centralized and distributed training");
  co->add_option("--n-p", cost.n_p, "examples per data center")->delimiter(',');
  co->add_option("--N", cost.N, "total examples (split evenly over --P)");
  co->add_option("--P", cost.P, "data centers");
  co->add_option("--d", cost.d, "model dimension")->required();
  co->add_option("--d-bar", cost.d_bar, "mean non-zeros per example");
  co->add_option("--T-outer", cost.T_outer, "outer iterations");
  co->add_option("--bytes-per-float", cost.bytes_per_float, "model element size");
  co->add_option("--bytes-per-nonzero", cost.bytes_per_nonzero, "wire size of one index/value pair");
  co->add_option("--compression-ratio", cost.ratio, "fraction in (0, 1]");
  co->add_option("--dataset-bytes-override", cost.dataset_bytes, "compressed dataset size in bytes");
  co->add_option("--edges", cost.edges, "exact mode: X-DC edges of the global group");
  co->add_option("--ls-trials", cost.ls_trials, "exact mode: line-search trials over the run");
  co->add_option("--mode", cost.mode, "paper | exact");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kSpecError;
  }

  try {
    if (*run) return cmd_run(spec_path, run_output, run_transport);
    if (*syn) return cmd_synth(synth);
    if (*part) return cmd_partition(part_data, part_out);
    if (*tr) return cmd_train(train);
    if (*co) return cmd_cost(cost);
  } catch (const ConfigError& e) {
    std::cerr << "gdml: " << e.what() << '\n';
    return kSpecError;
  } catch (const ParseError& e) {
    std::cerr << "gdml: " << e.what() << '\n';
    return kSpecError;
  } catch (const std::exception& e) {
    std::cerr << "gdml: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
