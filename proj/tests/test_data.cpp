#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "gdml/data.hpp"

using namespace gdml;

namespace {

SparseExample make(std::vector<std::uint32_t> idx, std::vector<double> val, int label) {
  return SparseExample{std::move(idx), std::move(val), label};
}

Dataset labelled_range(std::size_t n) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i)
    d.push_back(make({static_cast<std::uint32_t>(i % 7)}, {static_cast<double>(i + 1)}, i % 3 == 0 ? 1 : -1));
  return d;
}

}  // namespace

TEST(LibSvm, ParsesBasicLine) {
  auto ex = parse_libsvm_line("+1 3:1.0 7:2.5", 1);
  EXPECT_EQ(ex, make({3, 7}, {1.0, 2.5}, 1));
}

TEST(LibSvm, MapsZeroLabelToNegative) {
  EXPECT_EQ(parse_libsvm_line("0 1:1", 1).label, -1);
  EXPECT_EQ(parse_libsvm_line("1 1:1", 1).label, 1);
  EXPECT_EQ(parse_libsvm_line("-1 1:1", 1).label, -1);
}

TEST(LibSvm, SumsDuplicateIndices) {
  auto ex = parse_libsvm_line("+1 5:1 5:2", 1);
  EXPECT_EQ(ex, make({5}, {3.0}, 1));
}

TEST(LibSvm, SortsAndDropsZeros) {
  auto ex = parse_libsvm_line("-1 9:1 2:0 4:3 4:-3 1:0.5", 1);
  EXPECT_EQ(ex, make({1, 9}, {0.5, 1.0}, -1));
}

TEST(LibSvm, ErrorsCarryLineNumber) {
  std::istringstream in("+1 1:1\n\n# comment\n+1 2:x\n");
  try {
    parse_libsvm(in);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(LibSvm, RejectsMalformedTokens) {
  EXPECT_THROW(parse_libsvm_line("2 1:1", 1), ParseError);
  EXPECT_THROW(parse_libsvm_line("+1 1", 1), ParseError);
  EXPECT_THROW(parse_libsvm_line("+1 :1", 1), ParseError);
  EXPECT_THROW(parse_libsvm_line("+1 -3:1", 1), ParseError);
  EXPECT_THROW(parse_libsvm_line("x 1:1", 1), ParseError);
}

TEST(LibSvm, RejectsNonFiniteValues) {
  EXPECT_THROW(parse_libsvm_line("+1 1:inf", 1), ParseError);
  EXPECT_THROW(parse_libsvm_line("+1 1:nan", 1), ParseError);
}

TEST(LibSvm, SkipsBlankAndCommentLines) {
  std::istringstream in("# header\n+1 1:1\n\n   \n-1 2:2 # trailing\n");
  auto data = parse_libsvm(in);
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data[1], make({2}, {2.0}, -1));
}

TEST(LibSvm, RoundTripEqualsNormalizedInput) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> idx(0, 30);
  std::uniform_real_distribution<double> val(-5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::ostringstream line;
    line << (trial % 2 ? "+1" : "0");
    std::vector<std::uint32_t> ii;
    std::vector<double> vv;
    for (int k = 0; k < 6; ++k) {
      auto i = static_cast<std::uint32_t>(idx(rng));
      double v = val(rng);
      line << ' ' << i << ':' << v;
      ii.push_back(i);
      vv.push_back(v);
    }
    auto parsed = parse_libsvm_line(line.str(), 1);
    auto again = parse_libsvm_line(serialize_libsvm(parsed), 1);
    EXPECT_EQ(parsed, again);
    normalize_features(ii, vv);
    // The parser saw the decimal text, so compare against the same text's values.
    EXPECT_EQ(parsed.indices, ii);
  }
}

TEST(Hashing, Mix64MatchesSplitMix64) {
  // First outputs of SplitMix64 seeded with 0 and 1.
  EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(mix64(1), 0x910a2dec89025cc1ULL);
}

TEST(Hashing, GoldenBuckets) {
  SplitMixHasher h(42);
  EXPECT_EQ(h.bucket(0, 1024), 516u);
  EXPECT_EQ(h.bucket(1, 1024), 741u);
  EXPECT_EQ(h.bucket(7, 1024), 256u);
  EXPECT_EQ(h.bucket(1000, 1024), 735u);
  EXPECT_EQ(h.bucket(123456789, 1024), 603u);
  EXPECT_EQ(h.sign(0), 1);
  EXPECT_EQ(h.sign(1), -1);
  EXPECT_EQ(h.sign(123456789), 1);
}

TEST(Hashing, GoldenExample) {
  const auto ex = make({1, 5, 9, 100, 4096, 70000}, {1.0, -2.0, 0.5, 3.0, 1.5, -1.0}, 1);
  EXPECT_EQ(serialize_libsvm(hash_features(ex, HashingConfig{16, 42, true})), "+1 5:-1 6:0.5 9:2 10:1.5 15:-4");
  EXPECT_EQ(serialize_libsvm(hash_features(ex, HashingConfig{16, 42, false})), "+1 5:1 6:0.5 9:-2 10:1.5 15:2");
}

TEST(Hashing, IdentityHasherLeavesExampleUnchanged) {
  const auto ex = make({0, 3, 17, 99}, {1.0, -2.0, 0.25, 4.0}, -1);
  EXPECT_EQ(hash_features(ex, HashingConfig{128, 0, false}, IdentityHasher{}), ex);
}

TEST(Hashing, CollisionsSum) {
  // Identity mod 10 sends 2 and 12 to the same bucket.
  const auto ex = make({2, 12}, {1.5, 2.0}, 1);
  EXPECT_EQ(hash_features(ex, HashingConfig{10, 0, false}, IdentityHasher{}), make({2}, {3.5}, 1));
}

TEST(Hashing, DeterministicAndInRange) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    SparseExample ex;
    for (std::uint32_t i = 0; i < 50; ++i)
      if (rng() % 3 == 0) {
        ex.indices.push_back(i * 1000003u);
        ex.values.push_back(1.0 + static_cast<double>(rng() % 5));
      }
    ex.label = t % 2 ? 1 : -1;
    HashingConfig cfg{64, 9, t % 2 == 0};
    auto a = hash_features(ex, cfg);
    auto b = hash_features(ex, cfg);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.label, ex.label);
    EXPECT_TRUE(std::is_sorted(a.indices.begin(), a.indices.end()));
    EXPECT_TRUE(std::adjacent_find(a.indices.begin(), a.indices.end()) == a.indices.end());
    for (auto i : a.indices) EXPECT_LT(i, 64u);
    EXPECT_LE(a.nnz(), ex.nnz());
  }
}

TEST(Hashing, AverageSparsityNeverGrows) {
  std::mt19937_64 rng(5);
  Dataset data;
  for (int i = 0; i < 300; ++i) {
    SparseExample ex;
    for (std::uint32_t j = 0; j < 200; ++j)
      if (rng() % 10 == 0) {
        ex.indices.push_back(j);
        ex.values.push_back(1.0);
      }
    data.push_back(ex);
  }
  const auto hashed = hash_dataset(data, HashingConfig{32, 1, false});
  EXPECT_LE(average_sparsity(hashed), average_sparsity(data));
}

TEST(Hashing, RejectsZeroDimension) {
  EXPECT_THROW(hash_features(make({1}, {1.0}, 1), HashingConfig{0, 0, false}), ConfigError);
}

TEST(Partition, SingleDcKeepsEverything) {
  auto data = labelled_range(10);
  auto shards = partition(data, 1, PartitionStrategy::uniform(), 1);
  ASSERT_EQ(shards.size(), 1u);
  EXPECT_EQ(shards[0].examples, data);
}

TEST(Partition, UniformSizesWithinThreeSigma) {
  auto data = labelled_range(1000);
  auto shards = partition(data, 4, PartitionStrategy::uniform(), 2024);
  // Binomial(1000, 1/4): mean 250, sigma = sqrt(1000 * 1/4 * 3/4) = 13.69.
  const double sigma = std::sqrt(1000.0 * 0.25 * 0.75);
  std::size_t total = 0;
  for (const auto& s : shards) {
    total += s.n();
    EXPECT_LE(std::abs(static_cast<double>(s.n()) - 250.0), 3.0 * sigma);
  }
  EXPECT_EQ(total, 1000u);
}

TEST(Partition, IsABijectionOnExampleIds) {
  auto data = labelled_range(500);
  for (auto strategy : {PartitionStrategy::uniform(), PartitionStrategy::weighted({0.2, 0.3, 0.5}),
                        PartitionStrategy::label_biased(0.7)}) {
    auto shards = partition(data, 3, strategy, 77);
    std::vector<std::size_t> ids;
    for (const auto& s : shards) {
      ASSERT_EQ(s.ids.size(), s.examples.size());
      for (std::size_t k = 0; k < s.ids.size(); ++k) EXPECT_EQ(s.examples[k], data[s.ids[k]]);
      ids.insert(ids.end(), s.ids.begin(), s.ids.end());
    }
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(ids[i], i);
    EXPECT_EQ(ids.size(), data.size());
  }
}

TEST(Partition, FullSkewPutsAllPositivesInDcZero) {
  auto data = labelled_range(300);
  auto shards = partition(data, 2, PartitionStrategy::label_biased(1.0), 5);
  for (const auto& ex : shards[1].examples) EXPECT_EQ(ex.label, -1);
  std::size_t positives = 0;
  for (const auto& ex : data) positives += ex.label > 0;
  std::size_t in_zero = 0;
  for (const auto& ex : shards[0].examples) in_zero += ex.label > 0;
  EXPECT_EQ(in_zero, positives);
}

TEST(Partition, SameSeedSameShards) {
  auto data = labelled_range(200);
  auto a = partition(data, 3, PartitionStrategy::uniform(), 9);
  auto b = partition(data, 3, PartitionStrategy::uniform(), 9);
  for (int p = 0; p < 3; ++p) EXPECT_EQ(a[p].ids, b[p].ids);
}

TEST(Partition, Errors) {
  auto data = labelled_range(5);
  EXPECT_THROW(partition(data, 6, PartitionStrategy::uniform(), 1), ConfigError);
  EXPECT_THROW(partition(data, 0, PartitionStrategy::uniform(), 1), ConfigError);
  EXPECT_THROW(partition(data, 2, PartitionStrategy::weighted({0.5, 0.4}), 1), ConfigError);
  EXPECT_NO_THROW(partition(data, 2, PartitionStrategy::weighted({0.5, 0.5 + 5e-10}), 1));
  EXPECT_THROW(partition(data, 2, PartitionStrategy::weighted({1.0}), 1), ConfigError);
}

TEST(Partition, WeightedFollowsWeights) {
  auto data = labelled_range(4000);
  auto shards = partition(data, 2, PartitionStrategy::weighted({0.1, 0.9}), 3);
  const double sigma = std::sqrt(4000 * 0.1 * 0.9);
  EXPECT_LE(std::abs(static_cast<double>(shards[0].n()) - 400.0), 3.0 * sigma);
}

TEST(Shard, NnzTotalIsSumOfExampleCounts) {
  DcShard s;
  s.examples = {make({1, 2}, {1, 1}, 1), make({3}, {1}, -1), make({}, {}, 1)};
  EXPECT_EQ(s.nnz_total(), 3u);
  EXPECT_EQ(s.n(), 3u);
}

TEST(Shard, BinaryRoundTripRoundsToSinglePrecision) {
  Dataset data = {make({1, 40000}, {0.1, -2.0}, 1), make({}, {}, -1), make({7}, {3.5}, -1)};
  std::stringstream buf;
  write_shard(buf, data);
  auto back = read_shard(buf);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].indices, data[i].indices);
    EXPECT_EQ(back[i].label, data[i].label);
    for (std::size_t k = 0; k < data[i].nnz(); ++k)
      EXPECT_EQ(back[i].values[k], static_cast<double>(static_cast<float>(data[i].values[k])));
  }
}

TEST(Shard, RejectsForeignFiles) {
  std::stringstream buf("NOPE1....");
  EXPECT_THROW(read_shard(buf), Error);
}

TEST(Validation, ChecksDimension) {
  EXPECT_NO_THROW(validate_example(make({0, 9}, {1, 1}, 1), 10));
  EXPECT_THROW(validate_example(make({0, 10}, {1, 1}, 1), 10), DimensionError);
}
