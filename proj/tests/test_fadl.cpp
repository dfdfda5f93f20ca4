#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gdml/costmodel.hpp"
#include "gdml/fadl.hpp"
#include "gdml/harness.hpp"
#include "oracles.hpp"

using namespace gdml;

namespace {

Vector random_vector(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(d);
  for (auto& x : v) x = g(rng);
  return v;
}

std::vector<DcShard> split(const Dataset& data, int P, std::uint64_t seed = 7) {
  return partition(data, P, PartitionStrategy::uniform(), seed);
}

RunOptions f64() {
  RunOptions o;
  o.transport_options.wire = WirePrecision::F64;
  return o;
}

double max_abs_diff(const Vector& a, const Eigen::VectorXd& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b(static_cast<Eigen::Index>(i))));
  return m;
}

// Quadratic loss sum_s (1/2 w'A_s w + b_s'w) with A_s = diag(a) / (P S): every DC sees the same Hessian.
class SharedHessianQuadratic {
 public:
  SharedHessianQuadratic(Vector a_scaled, Vector b) : a_(std::move(a_scaled)), b_(std::move(b)) {}

  std::size_t dimension() const { return a_.size(); }
  LossStats begin_iterate(std::span<const double> w) {
    w_.assign(w.begin(), w.end());
    LossStats st{0.0, Vector(a_.size())};
    for (std::size_t i = 0; i < a_.size(); ++i) {
      st.loss_sum += 0.5 * a_[i] * w[i] * w[i] + b_[i] * w[i];
      st.grad[i] = a_[i] * w[i] + b_[i];
    }
    return st;
  }
  Vector hessian_vec(std::span<const double> v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = a_[i] * v[i];
    return out;
  }
  void set_direction(std::span<const double> d) { d_.assign(d.begin(), d.end()); }
  double loss_delta(double t) {
    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i) {
      lin += (a_[i] * w_[i] + b_[i]) * d_[i];
      quad += a_[i] * d_[i] * d_[i];
    }
    return t * lin + 0.5 * t * t * quad;
  }
  double work_units() const { return static_cast<double>(a_.size()); }

 private:
  Vector a_, b_, w_, d_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Local quadratic model

TEST(LocalModel, GradientAtAnchorIsFullGradient) {
  std::mt19937_64 rng(11);
  auto shard = oracle::random_examples(rng, 30, 8);
  Vector w_r = random_vector(rng, 8, 0.3);
  Vector g_total = random_vector(rng, 8);  // aggregated loss gradient from all DCs
  auto model = build_local_model(shard, w_r, g_total, 0.7, 3);
  Vector grad = model.gradient(w_r);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(grad[i], 0.7 * w_r[i] + g_total[i], 1e-14);
}

TEST(LocalModel, SinglePartitionIsSecondOrderTaylor) {
  std::mt19937_64 rng(12);
  auto shard = oracle::random_examples(rng, 40, 6);
  auto prob = oracle::densify(shard, 6, 1.0);
  Vector w_r = random_vector(rng, 6, 0.3);
  auto g = local_loss_grad(shard, w_r);
  auto model = build_local_model(shard, w_r, g.grad, 1.0, 1);
  Eigen::VectorXd wr = oracle::to_eigen(w_r);
  Eigen::MatrixXd H = oracle::hessian(prob, wr);
  const double f0 = oracle::objective(prob, wr);
  Eigen::VectorXd g0 = oracle::gradient(prob, wr);
  for (int k = 0; k < 5; ++k) {
    Vector w = random_vector(rng, 6, 0.5);
    Eigen::VectorXd delta = oracle::to_eigen(w) - wr;
    const double taylor = f0 + g0.dot(delta) + 0.5 * delta.dot(H * delta);
    // The model omits the constant loss at w^r.
    EXPECT_NEAR(model.value(w) + g.loss_sum, taylor, 1e-10 * std::abs(taylor));
  }
}

TEST(LocalModel, HessianMatchesGradientDifferences) {
  std::mt19937_64 rng(13);
  auto shard = oracle::random_examples(rng, 25, 7);
  Vector w_r = random_vector(rng, 7, 0.3);
  auto model = build_local_model(shard, w_r, random_vector(rng, 7), 0.5, 4);
  Vector w = random_vector(rng, 7), u = random_vector(rng, 7);
  // The model is exactly quadratic, so a central difference has no truncation error.
  const double h = 1e-3;
  Vector wp = w, wm = w;
  la::axpy(h, u, wp);
  la::axpy(-h, u, wm);
  Vector gp = model.gradient(wp), gm = model.gradient(wm), hu = model.hessian_vec(u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR((gp[i] - gm[i]) / (2 * h), hu[i], 1e-8 * (1 + std::abs(hu[i])));
}

// ---------------------------------------------------------------------------
// Conjugate gradient

TEST(ConjugateGradient, ZeroRightHandSide) {
  int calls = 0;
  auto res = conjugate_gradient(
      [&](std::span<const double> u) {
        ++calls;
        return Vector(u.begin(), u.end());
      },
      Vector(5, 0.0), 1e-10, 10);
  EXPECT_EQ(res.iterations, 0);
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(res.solution, Vector(5, 0.0));
}

TEST(ConjugateGradient, DiagonalSystem) {
  const Vector diag{1.0, 2.0, 4.0, 8.0};
  auto apply = [&](std::span<const double> u) {
    Vector out(4);
    for (int i = 0; i < 4; ++i) out[i] = diag[i] * u[i];
    return out;
  };
  auto res = conjugate_gradient(apply, Vector{1.0, 1.0, 1.0, 1.0}, 1e-12, 100);
  EXPECT_LE(res.iterations, 4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(res.solution[i], 1.0 / diag[i], 1e-12);
}

TEST(ConjugateGradient, SpdSystemWithinDimensionIterations) {
  std::mt19937_64 rng(14);
  const int d = 50;
  Eigen::MatrixXd B = Eigen::MatrixXd::Random(d, d);
  Eigen::MatrixXd A = B.transpose() * B + 5.0 * Eigen::MatrixXd::Identity(d, d);
  Vector b = random_vector(rng, d);
  auto apply = [&](std::span<const double> u) {
    Eigen::VectorXd x = A * Eigen::Map<const Eigen::VectorXd>(u.data(), d);
    return oracle::to_std(x);
  };
  auto res = conjugate_gradient(apply, b, 1e-10, 10 * d);
  EXPECT_LE(res.iterations, d + 5);  // exact arithmetic needs d; allow for rounding
  Eigen::VectorXd x = oracle::to_eigen(res.solution);
  EXPECT_LE((A * x - oracle::to_eigen(b)).norm(), 1e-10 * oracle::to_eigen(b).norm() * 1.0001);
}

TEST(ConjugateGradient, RejectsIndefiniteOperator) {
  auto neg = [](std::span<const double> u) {
    Vector out(u.begin(), u.end());
    la::scale(-1.0, out);
    return out;
  };
  EXPECT_THROW(conjugate_gradient(neg, Vector{1.0, 2.0}, 1e-8, 10), OptimizationError);
}

TEST(ConjugateGradient, MinimizesLocalModel) {
  std::mt19937_64 rng(15);
  auto shard = oracle::random_examples(rng, 60, 9);
  Vector w_r = random_vector(rng, 9, 0.2);
  auto model = build_local_model(shard, w_r, random_vector(rng, 9), 1.0, 2);
  auto sol = cg_minimize(model, 1e-12, 100);
  EXPECT_LE(la::norm2(model.gradient(sol.w_p)), 1e-9);
  EXPECT_LT(model.value(sol.w_p), model.value(w_r));
}

// ---------------------------------------------------------------------------
// Line search

TEST(LineSearch, AcceptsFullStepOnQuadratic) {
  // f(t) = (t - 1)^2 along the direction; slope -2 at t = 0.
  FadlConfig cfg;
  auto res = line_search(1.0, -2.0, cfg, [](double t) { return (t - 1) * (t - 1); }, [](double t) { return t; });
  EXPECT_EQ(res.t, 1.0);
  EXPECT_EQ(res.trials, 1);
}

TEST(LineSearch, BacktracksUntilArmijo) {
  FadlConfig cfg;
  // f(t) = (t - 0.1)^2, f(0) = 0.01, slope -0.2. t = 1, 0.5, 0.25 fail; 0.125 passes.
  auto res = line_search(0.01, -0.2, cfg, [](double t) { return (t - 0.1) * (t - 0.1); }, [](double t) { return t; });
  EXPECT_EQ(res.t, 0.125);
  EXPECT_EQ(res.trials, 4);
  EXPECT_LE(res.f_new, 0.01 + cfg.ls_c1 * res.t * -0.2);
}

TEST(LineSearch, FailsOnNonDescentDirection) {
  FadlConfig cfg;
  auto f = [](double t) { return t; };
  EXPECT_THROW(line_search(0.0, 0.5, cfg, f, [](double t) { return t; }), OptimizationError);
  // A descent slope that the evaluator never honours exhausts the step budget.
  cfg.ls_max_steps = 5;
  EXPECT_THROW(line_search(0.0, -1.0, cfg, [](double) { return 1.0; }, [](double t) { return t; }), OptimizationError);
}

TEST(LineSearch, SpanOverloadUsesGradientSlope) {
  FadlConfig cfg;
  Vector w{0.0}, d{1.0}, g{-2.0};
  auto res = line_search(w, d, 1.0, g, cfg, [](double t) { return (t - 1) * (t - 1); });
  EXPECT_EQ(res.t, 1.0);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(FadlConfig, ParsesAndValidates) {
  std::istringstream in("# tuned\nlambda = 0.5\neps_g = 1e-6\nmax_outer = 20\ncg_max_iter = 7\n");
  auto cfg = parse_fadl_config(in);
  EXPECT_EQ(cfg.lambda, 0.5);
  EXPECT_EQ(cfg.eps_g, 1e-6);
  EXPECT_EQ(cfg.max_outer, 20);
  EXPECT_EQ(cfg.cg_max_iter, 7);
  EXPECT_EQ(cfg.cg_tol, 0.1);
  for (const char* bad : {"lambda = 0\n", "eps_g = 1\n", "max_outer = 2.5\n", "frobnicate = 1\n", "lambda 1\n",
                          "ls_backtrack = 1\n", "ls_c1 = 0.7\n", "cg_tol = x\n"}) {
    std::istringstream b(bad);
    EXPECT_THROW(parse_fadl_config(b), ConfigError) << bad;
  }
}

// ---------------------------------------------------------------------------
// Distributed training

TEST(FadlTrain, SharedHessianQuadraticConvergesInOneStep) {
  const int P = 3, S = 2;
  const std::size_t d = 6;
  std::mt19937_64 rng(16);
  Vector a(d);
  for (std::size_t i = 0; i < d; ++i) a[i] = 1.0 + static_cast<double>(i);
  std::vector<Vector> b(P * S);
  for (auto& v : b) v = random_vector(rng, d);
  Topology topo = Topology::uniform(P, S);
  FadlConfig cfg;
  cfg.cg_tol = 1e-12;
  cfg.eps_g = 1e-6;
  auto factory = [&](int p, int j) {
    Vector as = a;
    la::scale(1.0 / (P * S), as);
    return SharedHessianQuadratic(as, b[static_cast<std::size_t>(p * S + j)]);
  };
  auto res = train_distributed(DirectionMethod::Fadl, topo, cfg, f64(), d, factory, "distributed-fadl");
  EXPECT_TRUE(res.report.converged);
  EXPECT_EQ(res.report.outer_iterations, 1);
  EXPECT_EQ(res.report.line_search_trials, 1);  // t = 1 accepted first
  // Minimizer of 1/2 w'(lambda I + A) w + (sum b)'w.
  for (std::size_t i = 0; i < d; ++i) {
    double bs = 0.0;
    for (const auto& v : b) bs += v[i];
    EXPECT_NEAR(res.w[i], -bs / (cfg.lambda + a[i]), 1e-10);
  }
}

TEST(FadlTrain, SinglePartitionMatchesNewton) {
  std::mt19937_64 rng(17);
  auto data = oracle::random_examples(rng, 200, 10);
  auto shards = split(data, 1);
  auto prob = oracle::densify(shards[0].examples, 10, 1.0);
  FadlConfig cfg;
  cfg.cg_tol = 1e-13;
  cfg.cg_max_iter = 200;
  cfg.eps_g = 1e-9;
  auto res = fadl_train(shards, Topology::uniform(1, 1), cfg, f64());
  auto ref = oracle::newton_reference(prob, cfg.eps_g, cfg.max_outer);
  ASSERT_GE(res.report.rows.size(), 3u);
  const std::size_t n = std::min(res.report.rows.size(), ref.objectives.size());
  for (std::size_t r = 0; r < n; ++r)
    EXPECT_NEAR(res.report.rows[r].f, ref.objectives[r], 1e-8 * std::abs(ref.objectives[r])) << "iteration " << r;
  EXPECT_LE(max_abs_diff(res.w, ref.iterates.back()), 1e-8);
}

class SynthTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new Dataset(synth_dataset(SynthParams{4000, 300, 12, 0.05, 3, 1.0}));
  }
  static void TearDownTestSuite() { delete data_; }
  static Dataset* data_;
};
Dataset* SynthTraining::data_ = nullptr;

TEST_F(SynthTraining, ObjectiveDecreasesMonotonically) {
  for (int P : {1, 2, 4}) {
    auto shards = split(*data_, P);
    FadlConfig cfg;
    auto res = fadl_train(shards, Topology::uniform(P, 2), cfg);
    ASSERT_TRUE(res.report.converged) << "P = " << P;
    for (std::size_t r = 1; r < res.report.rows.size(); ++r) {
      EXPECT_LT(res.report.rows[r].f, res.report.rows[r - 1].f) << "P = " << P << " row " << r;
      EXPECT_GE(res.report.rows[r].xdc_bytes_cum, res.report.rows[r - 1].xdc_bytes_cum);
      EXPECT_GE(res.report.rows[r].sim_time, res.report.rows[r - 1].sim_time);
    }
    EXPECT_LE(res.report.final_grad_norm(), cfg.eps_g * res.report.rows.front().grad_norm);
  }
}

TEST_F(SynthTraining, LocalSolvesStayInsideDataCenters) {
  auto shards = split(*data_, 3);
  auto fadl = fadl_train(shards, Topology::uniform(3, 2), FadlConfig{});
  EXPECT_GT(fadl.report.cg_iterations, 0);
  std::size_t hv_indc = 0;
  for (const auto& e : fadl.ledger.entries()) {
    if (e.tag == "hv" || e.tag == "hv-request") {
      EXPECT_EQ(e.link, LinkClass::InDc) << e.src << " -> " << e.dst;
      ++hv_indc;
    }
  }
  EXPECT_GT(hv_indc, 0u);
}

TEST_F(SynthTraining, ExactCostModelEqualsLedger) {
  for (int gm : {0, Topology::kExternal}) {
    for (auto wire : {WirePrecision::F32, WirePrecision::F64}) {
      auto shards = split(*data_, 3);
      Topology topo = Topology::uniform(3, 2);
      topo.global_master_dc = gm;
      RunOptions opts;
      opts.transport_options.wire = wire;
      auto res = fadl_train(shards, topo, FadlConfig{}, opts);
      CostInputs in = cost_inputs_from(shards, infer_dimension(shards), CompressionModel{}, res.report.outer_iterations);
      in.bytes_per_float = static_cast<double>(bytes_per_element(wire));
      in.xdc_edges = topo.xdc_global_edges();
      in.line_search_trials = res.report.line_search_trials;
      EXPECT_EQ(predict_td(in, CostMode::Exact), static_cast<double>(res.ledger.xdc_bytes()));
      EXPECT_EQ(res.report.rows.back().xdc_bytes_cum + in.edges() * frame_bytes(0, wire), res.ledger.xdc_bytes());
    }
  }
}

TEST_F(SynthTraining, IdenticalAcrossJitterAndTransports) {
  auto shards = split(*data_, 2);
  Topology topo = Topology::uniform(2, 2);
  auto ref = fadl_train(shards, topo, FadlConfig{});
  for (std::uint64_t seed : {1u, 2u}) {
    RunOptions o;
    o.transport_options.jitter_max_us = 200;
    o.transport_options.jitter_seed = seed;
    auto res = fadl_train(shards, topo, FadlConfig{}, o);
    EXPECT_EQ(res.w, ref.w);
    ASSERT_EQ(res.report.rows.size(), ref.report.rows.size());
    for (std::size_t r = 0; r < res.report.rows.size(); ++r) {
      EXPECT_EQ(res.report.rows[r].f, ref.report.rows[r].f);
      EXPECT_EQ(res.report.rows[r].xdc_bytes_cum, ref.report.rows[r].xdc_bytes_cum);
      EXPECT_EQ(res.report.rows[r].sim_time, ref.report.rows[r].sim_time);
    }
    EXPECT_EQ(res.ledger.entries(), ref.ledger.entries());
  }
  RunOptions sock;
  sock.transport = TransportKind::Socket;
  auto s = fadl_train(shards, topo, FadlConfig{}, sock);
  EXPECT_EQ(s.w, ref.w);
  EXPECT_EQ(s.report.time_axis, "wall_time");
  EXPECT_TRUE(same_traffic(s.ledger, ref.ledger));
}

TEST_F(SynthTraining, SlaveCountDoesNotChangeXdcTraffic) {
  auto shards = split(*data_, 2);
  auto one = fadl_train(shards, Topology::uniform(2, 1), FadlConfig{});
  auto four = fadl_train(shards, Topology::uniform(2, 4), FadlConfig{});
  EXPECT_EQ(one.report.outer_iterations, four.report.outer_iterations);
  EXPECT_EQ(one.ledger.xdc_bytes(), four.ledger.xdc_bytes());
  EXPECT_NEAR(one.report.final_objective(), four.report.final_objective(), 1e-6 * one.report.final_objective());  // f32 partial sums differ
  EXPECT_GT(four.ledger.indc_bytes(), one.ledger.indc_bytes());
}

TEST(FadlTrain, LineSearchTrafficIsNegligibleAtLargeDimension) {
  auto data = synth_dataset(SynthParams{3000, 100000, 10, 0.05, 5, 0.0});
  auto shards = split(data, 2);
  auto res = fadl_train(shards, Topology::uniform(2, 1), FadlConfig{}, RunOptions{{}, {}, 100000});
  const auto ls = res.ledger.totals_for_tag("ls-trial").xdc + res.ledger.totals_for_tag("ls-delta").xdc +
                  res.ledger.totals_for_tag("step").xdc;
  EXPECT_GT(ls, 0u);
  EXPECT_LT(static_cast<double>(ls), 0.01 * static_cast<double>(res.ledger.xdc_bytes()));
}

TEST(FadlTrain, InputErrors) {
  std::mt19937_64 rng(18);
  auto data = oracle::random_examples(rng, 20, 4);
  auto shards = split(data, 2);
  EXPECT_THROW(fadl_train(shards, Topology::uniform(3, 1), FadlConfig{}), ConfigError);
  shards[1].examples.clear();
  EXPECT_THROW(fadl_train(shards, Topology::uniform(2, 1), FadlConfig{}), ConfigError);
  FadlConfig bad;
  bad.lambda = 0.0;
  EXPECT_THROW(fadl_train(split(data, 1), Topology::uniform(1, 1), bad), ConfigError);
}

TEST(FadlTrain, MaxOuterZeroReportsInitialPoint) {
  std::mt19937_64 rng(19);
  auto data = oracle::random_examples(rng, 50, 5);
  FadlConfig cfg;
  cfg.max_outer = 0;
  auto res = fadl_train(split(data, 2), Topology::uniform(2, 1), cfg);
  ASSERT_EQ(res.report.rows.size(), 1u);
  EXPECT_FALSE(res.report.converged);
  EXPECT_NEAR(res.report.rows[0].f, 50 * std::log(2.0), 1e-5);
  EXPECT_EQ(res.w, Vector(5, 0.0));
}
