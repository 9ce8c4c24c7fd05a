#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "rbcd/rbcd.hpp"

using namespace rbcd;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

DenseBlockOperator two_scalars() { return DenseBlockOperator({scalar(1.0), scalar(2.0)}); }

struct DenseProblem {
  DenseBlockOperator op;
  Vector y;
};

DenseProblem random_dense(std::uint64_t seed, std::size_t blocks = 4, Index m = 20, Index n = 5) {
  Rng rng(seed);
  std::vector<Matrix> mats;
  for (std::size_t i = 0; i < blocks; ++i) mats.push_back(gaussian_matrix(m, n, rng));
  return {DenseBlockOperator(std::move(mats)), gaussian_vector(m, rng)};
}

SolverConfig apriori(std::size_t k_max, std::uint64_t seed = 1) {
  SolverConfig c;
  c.stop = AprioriStop{k_max};
  c.seed = seed;
  return c;
}

}  // namespace

TEST(RbcdStep, ZeroResidualOnlyAdvancesCounter) {
  const DenseBlockOperator op = two_scalars();
  IterationState s = make_state(op, Vector::Constant(1, 5.0), BlockVector({Vector::Constant(1, 1.0), Vector::Constant(1, 2.0)}));
  ASSERT_EQ(s.r[0], 0.0);
  const BlockVector before = s.x;
  rbcd_step(s, op, 0.3, 1);
  EXPECT_EQ(s.k, 1u);
  EXPECT_EQ(s.x[0], before[0]);
  EXPECT_EQ(s.x[1], before[1]);
  EXPECT_EQ(s.r[0], 0.0);
}

TEST(RbcdStep, ScalarHandArithmetic) {
  const DenseBlockOperator op = two_scalars();
  IterationState s = make_state(op, Vector::Constant(1, 5.0), op.zeros());
  EXPECT_EQ(s.r[0], -5.0);
  rbcd_step(s, op, 0.3, 1);
  EXPECT_EQ(s.x[0][0], 0.0);
  EXPECT_NEAR(s.x[1][0], 3.0, 1e-15);
  EXPECT_NEAR(s.r[0], 1.0, 1e-14);
  EXPECT_EQ(s.last_index, 1u);
  EXPECT_EQ(s.gamma_k, 0.3);
}

TEST(RbcdStep, ZeroStepFreezes) {
  const DenseBlockOperator op = two_scalars();
  IterationState s = make_state(op, Vector::Constant(1, 5.0), op.zeros());
  rbcd_step(s, op, 0.0, 0);
  EXPECT_EQ(s.k, 1u);
  EXPECT_EQ(s.x[0][0], 0.0);
  EXPECT_EQ(s.r[0], -5.0);
}

TEST(RbcdStep, LandweberEquivalenceForOneBlock) {
  Rng rng(3);
  const Matrix A = gaussian_matrix(30, 12, rng);
  const DenseBlockOperator op({A});
  const Vector y = gaussian_vector(30, rng), x = gaussian_vector(12, rng);
  IterationState s = make_state(op, y, BlockVector({x}));
  const double gamma = 0.01;
  rbcd_step(s, op, gamma, 0);
  const Vector landweber = x - gamma * A.transpose() * (A * x - y);
  EXPECT_LE((s.x[0] - landweber).cwiseAbs().maxCoeff(), 1e-15 * (1.0 + landweber.norm()));
}

TEST(RbcdStep, DivergenceCarriesStepAndBlock) {
  const DenseBlockOperator op = two_scalars();
  IterationState s = make_state(op, Vector::Constant(1, 5.0), op.zeros());
  s.k = 7;
  try {
    rbcd_step(s, op, std::numeric_limits<double>::max(), 1);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 7u);
    EXPECT_EQ(e.block(), 1u);
  }
}

TEST(RbcdStep, HugeGammaRunDiverges) {
  const DenseProblem p = random_dense(4);
  SolverConfig c = apriori(100000);
  c.gamma = 1e3;
  EXPECT_THROW(run(p.op, p.y, 0.0, p.op.zeros(), c), DivergenceError);
}

TEST(SelectIndex, SingleBlock) {
  Rng rng(1);
  for (std::size_t k = 0; k < 20; ++k) {
    EXPECT_EQ(select_index(IndexRule::uniform, k, 1, rng), 0u);
    EXPECT_EQ(select_index(IndexRule::cyclic, k, 1, rng), 0u);
  }
}

TEST(SelectIndex, CyclicOrder) {
  Rng rng(1);
  std::vector<std::size_t> got;
  for (std::size_t k = 0; k < 8; ++k) got.push_back(select_index(IndexRule::cyclic, k, 4, rng));
  EXPECT_EQ(got, (std::vector<std::size_t>{0, 1, 2, 3, 0, 1, 2, 3}));
}

TEST(SelectIndex, UniformFrequencies) {
  Rng rng(2024);
  std::vector<int> counts(8, 0);
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) ++counts[select_index(IndexRule::uniform, std::size_t(k), 8, rng)];
  for (int c : counts) EXPECT_NEAR(double(c) / draws, 0.125, 0.01);
}

TEST(SelectIndex, StreamFixedBySeed) {
  Rng a(9), b(9), c(10);
  bool differs = false;
  for (int k = 0; k < 50; ++k) {
    const auto ia = select_index(IndexRule::uniform, 0, 7, a);
    EXPECT_EQ(ia, select_index(IndexRule::uniform, 0, 7, b));
    differs |= ia != select_index(IndexRule::uniform, 0, 7, c);
  }
  EXPECT_TRUE(differs);
}

TEST(Run, AlreadyWithinDiscrepancy) {
  const DenseProblem p = random_dense(5);
  SolverConfig c;
  c.stop = DiscrepancyStop{1.1, 100};
  const BlockVector x0 = p.op.zeros();
  const double delta = p.y.norm();  // ||A 0 - y|| = delta <= tau delta
  const RunResult r = run(p.op, p.y, delta, x0, c);
  EXPECT_EQ(r.stop_index, 0u);
  EXPECT_EQ(r.stop_reason, StopReason::discrepancy);
  EXPECT_EQ(r.x_final.flatten(), x0.flatten());
}

TEST(Run, ZeroNoiseDiscrepancyRunsToCap) {
  const DenseProblem p = random_dense(6);
  SolverConfig c;
  c.stop = DiscrepancyStop{1.1, 250};
  const RunResult r = run(p.op, p.y, 0.0, p.op.zeros(), c);
  EXPECT_EQ(r.stop_reason, StopReason::cap);
  EXPECT_EQ(r.stop_index, 250u);
}

TEST(Run, DiscrepancyStopSatisfiesBound) {
  Rng rng(8);
  std::vector<Matrix> mats;
  for (int i = 0; i < 4; ++i) mats.push_back(gaussian_matrix(40, 5, rng));
  const DenseBlockOperator op(std::move(mats));
  BlockVector truth({gaussian_vector(5, rng), gaussian_vector(5, rng), gaussian_vector(5, rng),
                     gaussian_vector(5, rng)});
  const NoisyData d = add_noise(op.apply(truth), 0.05, 3);
  SolverConfig c;
  c.mu = 1.0;
  c.stop = DiscrepancyStop{1.1, 1'000'000};
  c.seed = 4;
  const RunResult r = run(op, d.y_delta, d.delta, op.zeros(), c);
  EXPECT_EQ(r.stop_reason, StopReason::discrepancy);
  EXPECT_LE(r.final_residual_norm(), 1.1 * d.delta);
  EXPECT_GT(r.stop_index, 0u);
}

TEST(Run, DiscrepancyFreezeIsPermanent) {
  // Driving the step loop by hand with the discrepancy step rule: once the
  // step is zero, the state never changes again.
  const DenseProblem p = random_dense(9, 3, 30, 4);
  const double gamma = 1.0 / std::pow(operator_norm(p.op).value, 2);
  const double delta = 0.9 * p.y.norm(), tau = 1.05;
  IterationState s = make_state(p.op, p.y, p.op.zeros());
  Rng rng(2);
  std::optional<std::size_t> frozen_at;
  Vector frozen_x;
  DataVector frozen_r;
  for (std::size_t k = 0; k < 400; ++k) {
    const double g = discrepancy_step_size(s.r.norm(), tau, delta, gamma);
    if (g == 0.0 && !frozen_at) {
      frozen_at = k;
      frozen_x = s.x.flatten();
      frozen_r = s.r;
    }
    if (frozen_at) {
      EXPECT_EQ(g, 0.0);
      EXPECT_EQ(s.x.flatten(), frozen_x);
      EXPECT_EQ(s.r, frozen_r);
    }
    rbcd_step(s, p.op, g, select_index(IndexRule::uniform, k, 3, rng));
  }
  ASSERT_TRUE(frozen_at.has_value());
}

TEST(Run, DeterministicGivenSeed) {
  const DenseProblem p = random_dense(10);
  Rng rng(1);
  const BlockVector ref({gaussian_vector(5, rng), gaussian_vector(5, rng), gaussian_vector(5, rng),
                         gaussian_vector(5, rng)});
  const RunResult a = run(p.op, p.y, 0.0, p.op.zeros(), apriori(500, 77), &ref);
  const RunResult b = run(p.op, p.y, 0.0, p.op.zeros(), apriori(500, 77), &ref);
  const RunResult c = run(p.op, p.y, 0.0, p.op.zeros(), apriori(500, 78), &ref);
  EXPECT_EQ(a.x_final.flatten(), b.x_final.flatten());
  EXPECT_EQ(a.residual, b.residual);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t j = 0; j < a.history.size(); ++j) {
    EXPECT_EQ(a.history[j].residual, b.history[j].residual);
    EXPECT_EQ(a.history[j].rel_sq_error, b.history[j].rel_sq_error);
  }
  EXPECT_NE(a.x_final.flatten(), c.x_final.flatten());
  EXPECT_EQ(a.rng_algorithm, kRngAlgorithm);
}

TEST(Run, ResidualRecursionFidelity) {
  const DenseProblem p = random_dense(11, 4, 25, 6);
  const RunResult r = run(p.op, p.y, 0.0, p.op.zeros(), apriori(1000, 3));
  const Vector fresh = p.op.apply(r.x_final) - p.y;
  EXPECT_LE((r.residual - fresh).norm(), 1e-10 * (1.0 + p.y.norm()));
}

TEST(Run, CyclicRuleSweepsBlocksInOrder) {
  const DenseProblem p = random_dense(12, 3, 10, 2);
  SolverConfig c = apriori(3);
  c.index_rule = IndexRule::cyclic;
  c.gamma = 0.01;
  const RunResult r = run(p.op, p.y, 0.0, p.op.zeros(), c);
  IterationState s = make_state(p.op, p.y, p.op.zeros());
  for (std::size_t i = 0; i < 3; ++i) rbcd_step(s, p.op, 0.01, i);
  EXPECT_EQ(r.x_final.flatten(), s.x.flatten());
}

TEST(Run, ValidationErrors) {
  const DenseProblem p = random_dense(13);
  const BlockVector x0 = p.op.zeros();
  SolverConfig c = apriori(10);
  c.mu = 2.0;
  EXPECT_THROW(run(p.op, p.y, 0.0, x0, c), ConfigError);
  c.mu = 0.0;
  EXPECT_THROW(run(p.op, p.y, 0.0, x0, c), ConfigError);
  c.mu = 1.0;
  c.gamma = -1.0;
  EXPECT_THROW(run(p.op, p.y, 0.0, x0, c), ConfigError);
  c.gamma.reset();
  c.stop = DiscrepancyStop{1.0, 10};
  EXPECT_THROW(run(p.op, p.y, 0.1, x0, c), ConfigError);
  c.stop = DiscrepancyStop{1.1, 0};
  EXPECT_THROW(run(p.op, p.y, 0.1, x0, c), ConfigError);
  c.stop = AprioriStop{10};
  EXPECT_THROW(run(p.op, p.y, -1.0, x0, c), ConfigError);
  EXPECT_THROW(run(p.op, Vector::Zero(3), 0.0, x0, c), ShapeError);
  EXPECT_THROW(run(p.op, p.y, 0.0, BlockVector({Vector::Zero(5)}), c), ShapeError);
  c.stop = TargetErrorStop{0.05, 10};
  EXPECT_THROW(run(p.op, p.y, 0.0, x0, c), ConfigError);
}

TEST(Run, RecordSchedule) {
  const DenseProblem p = random_dense(14, 2, 8, 2);
  SolverConfig c = apriori(1205);
  c.gamma = 1e-3;
  const RunResult d = run(p.op, p.y, 0.0, p.op.zeros(), c);
  // 0..1000 every step, then 1010..1200 every tenth, plus the final step.
  ASSERT_EQ(d.history.size(), 1001u + 20u + 1u);
  EXPECT_EQ(d.history[1000].k, 1000u);
  EXPECT_EQ(d.history[1001].k, 1010u);
  EXPECT_EQ(d.history.back().k, 1205u);

  c.record_every = 100;
  const RunResult s = run(p.op, p.y, 0.0, p.op.zeros(), c);
  ASSERT_EQ(s.history.size(), 14u);
  EXPECT_EQ(s.history[12].k, 1200u);
  EXPECT_EQ(s.history.back().k, 1205u);
  EXPECT_FALSE(s.history.front().rel_sq_error.has_value());
}

TEST(Run, TargetErrorStop) {
  Rng rng(15);
  const DenseBlockOperator op({gaussian_matrix(30, 4, rng), gaussian_matrix(30, 4, rng)});
  const BlockVector truth({gaussian_vector(4, rng), gaussian_vector(4, rng)});
  SolverConfig c;
  c.stop = TargetErrorStop{0.01, 100000};
  const RunResult r = run(op, op.apply(truth), 0.0, op.zeros(), c, &truth);
  EXPECT_EQ(r.stop_reason, StopReason::target);
  EXPECT_LT(relative_error(truth, r.x_final), 0.01);
  EXPECT_GE(r.history.at(r.history.size() - 2).rel_sq_error.value(), 0.0);
}

TEST(MonteCarlo, SingleRunEqualsTrajectory) {
  const DenseProblem p = random_dense(16);
  const BlockVector ref = BlockVector::split(Vector::Ones(20), p.op.block_dims());
  auto closure = [&](std::uint64_t seed) { return run(p.op, p.y, 0.0, p.op.zeros(), apriori(200, seed), &ref); };
  const MonteCarloResult mc = monte_carlo(closure, 1, 42);
  const RunResult single = closure(derive_seed(42, 0));
  ASSERT_EQ(mc.k.size(), single.history.size());
  for (std::size_t j = 0; j < mc.k.size(); ++j) {
    EXPECT_EQ(mc.k[j], single.history[j].k);
    EXPECT_EQ(mc.mean[j], *single.history[j].rel_sq_error);
    EXPECT_EQ(mc.stddev[j], 0.0);
    EXPECT_EQ(mc.count[j], 1u);
  }
}

TEST(MonteCarlo, TwoRunsAverageAndDeterminism) {
  const DenseProblem p = random_dense(17);
  const BlockVector ref = BlockVector::split(Vector::Ones(20), p.op.block_dims());
  auto closure = [&](std::uint64_t seed) { return run(p.op, p.y, 0.0, p.op.zeros(), apriori(300, seed), &ref); };
  const MonteCarloResult mc = monte_carlo(closure, 2, 7);
  const RunResult a = closure(derive_seed(7, 0)), b = closure(derive_seed(7, 1));
  ASSERT_EQ(mc.k.size(), a.history.size());
  for (std::size_t j = 0; j < mc.k.size(); ++j)
    EXPECT_NEAR(mc.mean[j], 0.5 * (*a.history[j].rel_sq_error + *b.history[j].rel_sq_error), 1e-15);

  const MonteCarloResult again = monte_carlo(closure, 2, 7);
  EXPECT_EQ(mc.mean, again.mean);
  EXPECT_EQ(mc.stddev, again.stddev);
  EXPECT_EQ(mc.seeds, again.seeds);

  const MonteCarloResult threaded = monte_carlo(closure, 2, 7, 2);
  EXPECT_EQ(mc.mean, threaded.mean);
  EXPECT_EQ(mc.stddev, threaded.stddev);
}

TEST(MonteCarlo, DivergentRunIsFlagged) {
  const DenseProblem p = random_dense(18);
  const BlockVector ref = BlockVector::split(Vector::Ones(20), p.op.block_dims());
  std::uint64_t bad_seed = derive_seed(5, 1);
  auto closure = [&](std::uint64_t seed) {
    SolverConfig c = apriori(100, seed);
    if (seed == bad_seed) c.gamma = 1e3;
    return run(p.op, p.y, 0.0, p.op.zeros(), c, &ref);
  };
  const MonteCarloResult mc = monte_carlo(closure, 3, 5);
  EXPECT_EQ(mc.runs_ok, 2u);
  EXPECT_EQ(mc.failed_runs, (std::vector<std::size_t>{1}));
  for (std::size_t c : mc.count) EXPECT_EQ(c, 2u);
  EXPECT_THROW(monte_carlo(closure, 0, 5), ConfigError);
}

TEST(RelativeError, Examples) {
  const BlockVector ref({Vector::LinSpaced(4, 1, 4), Vector::Constant(2, -1.0)});
  EXPECT_EQ(relative_error(ref, ref), 0.0);
  BlockVector zero = ref;
  for (auto& b : zero) b.setZero();
  EXPECT_EQ(relative_error(ref, zero), 1.0);
  EXPECT_EQ(relative_error(ref, zero, false), 1.0);
  BlockVector scaled = ref;
  for (auto& b : scaled) b *= 1.1;
  EXPECT_NEAR(relative_error(ref, scaled), 0.01, 1e-14);
  EXPECT_NEAR(relative_error(ref, scaled, false), 0.1, 1e-14);
  EXPECT_THROW(relative_error(zero, ref), ConfigError);
}

TEST(Random, DeriveSeedIsStableAndDistinct) {
  EXPECT_EQ(derive_seed(2024, 3), derive_seed(2024, 3));
  EXPECT_NE(derive_seed(2024, 3), derive_seed(2024, 4));
  EXPECT_NE(derive_seed(2024, 3), derive_seed(2025, 3));
}

TEST(Random, NormalMoments) {
  Rng rng(31);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
  Rng u(32);
  for (int k = 0; k < 1000; ++k) {
    const double v = u.uniform01();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(BlockVectorOps, SplitFlattenAndNorms) {
  const Vector flat = Vector::LinSpaced(6, 1, 6);
  const std::vector<Index> dims{2, 4};
  const BlockVector v = BlockVector::split(flat, dims);
  EXPECT_EQ(v.block_count(), 2u);
  EXPECT_EQ(v[1][0], 3.0);
  EXPECT_EQ(v.flatten(), flat);
  EXPECT_EQ(v.total_size(), 6);
  EXPECT_NEAR(v.squared_norm(), flat.squaredNorm(), 1e-14);
  EXPECT_NEAR(v.dot(v), flat.squaredNorm(), 1e-14);
  EXPECT_THROW(BlockVector::split(flat, std::vector<Index>{2, 3}), ShapeError);
  EXPECT_THROW(v.dot(BlockVector::zeros(std::vector<Index>{3, 3})), ShapeError);
}
