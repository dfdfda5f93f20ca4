#include <gtest/gtest.h>

#include "gdml/baselines.hpp"
#include "gdml/harness.hpp"
#include "oracles.hpp"

using namespace gdml;

namespace {

DcShard block_shard(int dc, std::size_t n, std::uint32_t nnz_each) {
  DcShard s;
  s.dc_id = dc;
  for (std::size_t i = 0; i < n; ++i) {
    SparseExample ex;
    for (std::uint32_t k = 0; k < nnz_each; ++k) {
      ex.indices.push_back(k);
      ex.values.push_back(1.0);
    }
    ex.label = i % 2 ? 1 : -1;
    s.examples.push_back(std::move(ex));
    s.ids.push_back(i);
  }
  return s;
}

class MethodsOnSynth : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto data = synth_dataset(SynthParams{6000, 400, 15, 0.05, 21, 1.0});
    shards_ = new std::vector<DcShard>(partition(data, 2, PartitionStrategy::weighted({0.6, 0.4}), 4));
  }
  static void TearDownTestSuite() { delete shards_; }
  static std::vector<DcShard>* shards_;
};
std::vector<DcShard>* MethodsOnSynth::shards_ = nullptr;

double rel_diff(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(MethodKind, Names) {
  for (MethodKind m : kAllMethods) EXPECT_EQ(method_from_string(to_string(m)), m);
  EXPECT_THROW(method_from_string("centralised"), ConfigError);
  EXPECT_TRUE(is_centralized(MethodKind::CentralizedBulk));
  EXPECT_FALSE(is_centralized(MethodKind::DistributedFadl));
}

TEST(CompressionModel, Validation) {
  CompressionModel c;
  c.ratio = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.ratio = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.bytes_per_nonzero = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.dataset_bytes_override = 1000.0;
  EXPECT_EQ(c.shard_bytes(999, 25, 100), 250u);
}

TEST(CopyPlan, EqualHalvesOfAMillionNonzeros) {
  std::vector<DcShard> shards{block_shard(0, 50'000, 10), block_shard(1, 50'000, 10)};
  CompressionModel comp;
  comp.ratio = 0.5;
  Topology topo = Topology::uniform(2, 1);
  auto plan = plan_copy(shards, topo, comp);
  EXPECT_EQ(plan.destination, 0);  // tie goes to the lowest id
  EXPECT_EQ(plan.bytes, 2'000'000u);
  ASSERT_EQ(plan.ledger.entries().size(), 1u);
  EXPECT_EQ(plan.ledger.entries()[0].src, "M:dc1");
  EXPECT_EQ(plan.ledger.entries()[0].dst, "M:dc0");
  EXPECT_EQ(plan.ledger.entries()[0].tag, "copy");
  EXPECT_DOUBLE_EQ(plan.time, topo.xdc_latency + 2e6 / topo.xdc_bandwidth);
}

TEST(CopyPlan, LargestShardIsDestination) {
  std::vector<DcShard> shards{block_shard(0, 10, 3), block_shard(1, 30, 3), block_shard(2, 20, 3)};
  Topology topo = Topology::uniform(3, 1);
  auto plan = plan_copy(shards, topo, CompressionModel{});
  EXPECT_EQ(plan.destination, 1);
  EXPECT_EQ(plan.bytes, (10u + 20u) * 3u * 8u);
  // Sources ship in parallel; the larger one sets the time.
  EXPECT_DOUBLE_EQ(plan.time, topo.xdc_latency + 20 * 3 * 8 / topo.xdc_bandwidth);
  EXPECT_EQ(plan_copy(shards, topo, CompressionModel{}, 2).destination, 2);
  EXPECT_THROW(plan_copy(shards, topo, CompressionModel{}, 3), ConfigError);
}

TEST(RunCentralized, SinglePartitionCopiesNothing) {
  std::mt19937_64 rng(31);
  auto data = oracle::random_examples(rng, 120, 8);
  auto shards = partition(data, 1, PartitionStrategy::uniform(), 1);
  Topology topo = Topology::uniform(1, 2);
  auto bulk = run_centralized(shards, topo, FadlConfig{}, CentralizedVariant::Bulk, CompressionModel{});
  auto plain = fadl_train(shards, topo, FadlConfig{});
  EXPECT_EQ(bulk.report.copy_bytes, 0u);
  EXPECT_EQ(bulk.report.copy_time, 0.0);
  EXPECT_EQ(bulk.w, plain.w);
  EXPECT_EQ(bulk.ledger.entries(), plain.ledger.entries());
  ASSERT_EQ(bulk.report.rows.size(), plain.report.rows.size());
  for (std::size_t r = 0; r < plain.report.rows.size(); ++r) {
    EXPECT_EQ(bulk.report.rows[r].f, plain.report.rows[r].f);
    EXPECT_EQ(bulk.report.rows[r].sim_time, plain.report.rows[r].sim_time);
  }
}

TEST_F(MethodsOnSynth, StreamAndBulkDifferOnlyInTime) {
  Topology topo = Topology::uniform(2, 2);
  auto stream = run_centralized(*shards_, topo, FadlConfig{}, CentralizedVariant::Stream, CompressionModel{});
  auto bulk = run_centralized(*shards_, topo, FadlConfig{}, CentralizedVariant::Bulk, CompressionModel{});
  EXPECT_EQ(stream.w, bulk.w);
  EXPECT_EQ(stream.report.copy_bytes, bulk.report.copy_bytes);
  EXPECT_GT(bulk.report.copy_time, 0.0);
  EXPECT_EQ(stream.report.copy_time, 0.0);
  ASSERT_EQ(stream.ledger.entries().size(), bulk.ledger.entries().size());
  for (std::size_t i = 0; i < stream.ledger.entries().size(); ++i) {
    const auto& a = stream.ledger.entries()[i];
    const auto& b = bulk.ledger.entries()[i];
    EXPECT_EQ(std::tie(a.src, a.dst, a.bytes, a.tag, a.lamport), std::tie(b.src, b.dst, b.bytes, b.tag, b.lamport));
  }
  ASSERT_EQ(stream.report.rows.size(), bulk.report.rows.size());
  for (std::size_t r = 0; r < stream.report.rows.size(); ++r) {
    EXPECT_EQ(stream.report.rows[r].f, bulk.report.rows[r].f);
    EXPECT_EQ(stream.report.rows[r].xdc_bytes_cum, bulk.report.rows[r].xdc_bytes_cum);
    EXPECT_DOUBLE_EQ(bulk.report.rows[r].sim_time - stream.report.rows[r].sim_time, bulk.report.copy_time);
  }
  EXPECT_GE(bulk.report.rows.back().sim_time, stream.report.rows.back().sim_time);
}

TEST_F(MethodsOnSynth, CentralizedTrafficIsOnlyTheCopy) {
  Topology topo = Topology::uniform(2, 2);
  auto res = run_centralized(*shards_, topo, FadlConfig{}, CentralizedVariant::Stream, CompressionModel{});
  EXPECT_EQ(res.ledger.xdc_bytes(), res.report.copy_bytes);
  std::size_t expect = 0;
  for (const auto& s : *shards_)
    if (s.dc_id != largest_shard(*shards_)) expect += s.nnz_total() * 8;
  EXPECT_EQ(res.report.copy_bytes, expect);
  for (const auto& e : res.ledger.entries())
    if (e.tag != "copy") EXPECT_EQ(e.link, LinkClass::InDc) << e.src << " -> " << e.dst;
  for (const auto& row : res.report.rows) EXPECT_EQ(row.xdc_bytes_cum, expect);
  // All workers run at the destination.
  EXPECT_EQ(res.ledger.entries().back().src_dc, "dc0");
}

TEST_F(MethodsOnSynth, AllMethodsReachTheSameOptimum) {
  Topology topo = Topology::uniform(2, 2);
  FadlConfig cfg;
  cfg.eps_g = 1e-6;
  std::vector<double> finals;
  for (MethodKind m : kAllMethods) {
    auto res = run_method(m, *shards_, topo, cfg, CompressionModel{});
    EXPECT_TRUE(res.report.converged) << to_string(m);
    EXPECT_EQ(res.report.method, to_string(m));
    finals.push_back(res.report.final_objective());
  }
  for (double f : finals) EXPECT_LE(rel_diff(f, finals.back()), 1e-5);
}

TEST_F(MethodsOnSynth, TronPaysForEveryHessianProduct) {
  Topology topo = Topology::uniform(2, 2);
  auto tron = run_distributed_tron(*shards_, topo, FadlConfig{});
  auto fadl = fadl_train(*shards_, topo, FadlConfig{});
  EXPECT_GT(tron.ledger.xdc_bytes(), fadl.ledger.xdc_bytes());
  EXPECT_GE(tron.report.cg_iterations, 2 * tron.report.outer_iterations);
  // One X-DC vector reduce per Hessian product, plus one per gradient.
  const std::size_t edges = static_cast<std::size_t>(topo.xdc_global_edges());
  std::size_t hv = 0, grad_reduce = 0;
  for (const auto& e : tron.ledger.entries()) {
    if (e.link != LinkClass::XDc) continue;
    if (e.tag == "hv") ++hv;
    if (e.tag == "grad") ++grad_reduce;
  }
  EXPECT_EQ(hv, edges * static_cast<std::size_t>(tron.report.cg_iterations));
  EXPECT_EQ(grad_reduce, edges * static_cast<std::size_t>(tron.report.outer_iterations + 1));
  EXPECT_LE(rel_diff(tron.report.final_objective(), fadl.report.final_objective()), 1e-5);
}

TEST(RunDistributedTron, SinglePartitionIsNewton) {
  std::mt19937_64 rng(32);
  auto data = oracle::random_examples(rng, 150, 9);
  auto shards = partition(data, 1, PartitionStrategy::uniform(), 3);
  FadlConfig cfg;
  cfg.cg_tol = 1e-13;
  cfg.cg_max_iter = 200;
  cfg.eps_g = 1e-9;
  RunOptions opts;
  opts.transport_options.wire = WirePrecision::F64;
  auto res = run_distributed_tron(shards, Topology::uniform(1, 3), cfg, opts);
  auto ref = oracle::newton_reference(oracle::densify(shards[0].examples, 9, 1.0), cfg.eps_g, cfg.max_outer);
  const std::size_t n = std::min(res.report.rows.size(), ref.objectives.size());
  ASSERT_GE(n, 3u);
  for (std::size_t r = 0; r < n; ++r) EXPECT_NEAR(res.report.rows[r].f, ref.objectives[r], 1e-8 * ref.objectives[r]);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(res.w[i], ref.iterates.back()(static_cast<Eigen::Index>(i)), 1e-8);
}
