#include <algorithm>
#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "catgcn/autodiff.hpp"
#include "catgcn/error.hpp"
#include "catgcn/graph.hpp"
#include "catgcn/rng.hpp"
#include "test_util.hpp"

namespace catgcn {
namespace {

using testing::random_matrix;

// Random values with every |entry| at least `gap`, so relu kinks stay
// further away than any finite-difference step.
DenseMatrix away_from_zero(std::size_t r, std::size_t c, CounterRng& rng, double gap = 1e-2) {
  DenseMatrix m = random_matrix(r, c, rng);
  for (double& v : m.values())
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  return m;
}

// Contract a matrix output against fixed random weights into a scalar.
Var contract(Tape& t, Var out, const DenseMatrix& weights) { return t.sum(t.mul(out, t.constant(weights))); }

constexpr double kStep = 1e-4;
constexpr double kTol = 1e-6;
constexpr int kCases = 100;

struct Shape {
  std::size_t r, k, c;
};

Shape random_shape(CounterRng& rng) { return {1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5)}; }

TEST(Primitives, Matmul) {
  CounterRng rng(1);
  for (int i = 0; i < kCases; ++i) {
    const Shape s = random_shape(rng);
    const DenseMatrix w = random_matrix(s.r, s.c, rng);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) { return contract(t, t.matmul(v[0], v[1]), w); },
        {random_matrix(s.r, s.k, rng), random_matrix(s.k, s.c, rng)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

TEST(Primitives, AddAndBias) {
  CounterRng rng(2);
  for (int i = 0; i < kCases; ++i) {
    const Shape s = random_shape(rng);
    const DenseMatrix w = random_matrix(s.r, s.c, rng);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) { return contract(t, t.add_bias(t.add(v[0], v[1]), v[2]), w); },
        {random_matrix(s.r, s.c, rng), random_matrix(s.r, s.c, rng), random_matrix(1, s.c, rng)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

TEST(Primitives, MulSquareScale) {
  CounterRng rng(3);
  for (int i = 0; i < kCases; ++i) {
    const Shape s = random_shape(rng);
    const DenseMatrix w = random_matrix(s.r, s.c, rng);
    const double c = rng.uniform(-3, 3);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) { return contract(t, t.scale(t.mul(t.square(v[0]), v[1]), c), w); },
        {random_matrix(s.r, s.c, rng), random_matrix(s.r, s.c, rng)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

TEST(Primitives, ReluAwayFromKinks) {
  CounterRng rng(4);
  for (int i = 0; i < kCases; ++i) {
    const Shape s = random_shape(rng);
    const DenseMatrix w = random_matrix(s.r, s.c, rng);
    const auto rep = finite_diff_check([&](Tape& t, std::span<const Var> v) { return contract(t, t.relu(v[0]), w); },
                                       {away_from_zero(s.r, s.c, rng)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

TEST(Primitives, GroupedReductions) {
  CounterRng rng(5);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t group = 1 + rng.below(4), groups = 1 + rng.below(4), d = 1 + rng.below(5);
    const DenseMatrix w = random_matrix(groups, d, rng);
    const double rho = rng.uniform(0, 10);
    const DenseMatrix wide = random_matrix(groups * group, d, rng);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) {
          const Var a = contract(t, t.mean_rows(v[0], group), w);
          const Var b = contract(t, t.sum_rows(v[0], group), w);
          const Var c = contract(t, t.biinteraction(v[0], group), w);
          const Var e = contract(t, t.artificial_prop(v[0], group, rho), wide);
          return t.add(t.add(a, b), t.add(c, e));
        },
        {random_matrix(groups * group, d, rng)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

TEST(Primitives, GatherRows) {
  CounterRng rng(6);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t rows = 2 + rng.below(6), d = 1 + rng.below(4), k = 1 + rng.below(8);
    std::vector<FeatureId> ids;
    std::vector<double> weights;
    for (std::size_t j = 0; j < k; ++j) {
      ids.push_back(static_cast<FeatureId>(rng.below(rows)));
      weights.push_back(rng.uniform(0.5, 2));
    }
    const DenseMatrix w = random_matrix(k, d, rng);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) { return contract(t, t.square(t.gather_rows(v[0], ids, weights)), w); },
        {random_matrix(rows, d, rng)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

std::shared_ptr<const SlotRows> random_slots(std::size_t rows, CounterRng& rng) {
  auto s = std::make_shared<SlotRows>();
  s->group = 1 + rng.below(4);
  const std::size_t nodes = 1 + rng.below(5);
  for (std::size_t j = 0; j < nodes * s->group; ++j) {
    s->ids.push_back(static_cast<FeatureId>(rng.below(rows)));
    s->weights.push_back(rng.uniform(0.5, 2));
  }
  return s;
}

TEST(Primitives, PooledLocal) {
  CounterRng rng(7);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t rows = 2 + rng.below(6), d = 1 + rng.below(4);
    const auto slots = random_slots(rows, rng);
    const DenseMatrix w = random_matrix(slots->nodes(), d, rng);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) {
          return t.add(contract(t, t.pooled_biinteraction(v[0], slots), w), contract(t, t.pooled_mean(v[0], slots), w));
        },
        {random_matrix(rows, d, rng)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

TEST(Primitives, PooledGlobalAwayFromKinks) {
  CounterRng rng(8);
  int checked = 0;
  while (checked < kCases) {
    const std::size_t rows = 2 + rng.below(6), d = 1 + rng.below(4);
    const auto slots = random_slots(rows, rng);
    const double rho = rng.uniform(0, 10);
    const DenseMatrix point = random_matrix(rows, d, rng);
    double margin = 0;
    pooled_global(point, *slots, rho, &margin);
    if (margin <= 1e-3) continue;
    const DenseMatrix w = random_matrix(slots->nodes(), d, rng);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) { return contract(t, t.pooled_global(v[0], slots, rho), w); }, {point},
        std::min(kStep, margin / 10));
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << checked;
    ++checked;
  }
}

CsrMatrix random_norm_adj(std::size_t n, CounterRng& rng) {
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.bernoulli(0.4)) edges.emplace_back(u, v);
  return normalize_sym(build_adjacency(edges, n)).matrix;
}

TEST(Primitives, SparsePropagate) {
  CounterRng rng(9);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t n = 1 + rng.below(7), d = 1 + rng.below(4), hops = rng.below(4);
    const CsrMatrix adj = random_norm_adj(n, rng);
    const DenseMatrix w = random_matrix(n, d, rng);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) { return contract(t, t.sparse_propagate(adj, v[0], hops), w); },
        {random_matrix(n, d, rng)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

TEST(Primitives, SoftmaxCrossEntropy) {
  CounterRng rng(10);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t n = 1 + rng.below(6), c = 2 + rng.below(4);
    std::vector<ClassId> labels(n);
    for (auto& y : labels) y = static_cast<ClassId>(rng.below(c));
    std::vector<NodeId> rows;
    for (NodeId u = 0; u < n; ++u)
      if (u == 0 || rng.bernoulli(0.6)) rows.push_back(u);
    const auto rep = finite_diff_check(
        [&](Tape& t, std::span<const Var> v) { return t.softmax_cross_entropy(v[0], labels, rows); },
        {random_matrix(n, c, rng, -2, 2)}, kStep);
    ASSERT_LE(rep.max_rel_error, kTol) << "case " << i;
  }
}

TEST(Backward, BiInteractionExample) {
  Tape t;
  const Var x = t.leaf(DenseMatrix{{1, 2}, {3, 4}});
  const GradientSet g = t.backward(t.sum(t.biinteraction(x, 2)));
  EXPECT_EQ(g.of(x), (DenseMatrix{{3, 4}, {1, 2}}));
}

TEST(Backward, ReluAtZeroIsZero) {
  Tape t;
  const Var x = t.leaf(DenseMatrix{{0.0, 1.0, -1.0}});
  const GradientSet g = t.backward(t.sum(t.relu(x)));
  EXPECT_EQ(g.of(x), (DenseMatrix{{0.0, 1.0, 0.0}}));
}

TEST(Backward, GatherDuplicatesAccumulate) {
  Tape t;
  const Var table = t.leaf(DenseMatrix{{1, 1}, {2, 2}});
  const GradientSet g = t.backward(t.sum(t.gather_rows(table, {1, 1, 0}, {1.0, 2.0, 1.0})));
  EXPECT_EQ(g.of(table), (DenseMatrix{{1, 1}, {3, 3}}));
}

TEST(Backward, SumAndHalfSquaredNorm) {
  CounterRng rng(11);
  const DenseMatrix p = random_matrix(3, 4, rng);
  Tape t;
  const Var v = t.leaf(p);
  EXPECT_EQ(t.backward(t.sum(v)).of(v), DenseMatrix(3, 4, 1.0));
  Tape t2;
  const Var w = t2.leaf(p);
  EXPECT_EQ(t2.backward(t2.scale(t2.sum(t2.square(w)), 0.5)).of(w), p);
}

TEST(Backward, ConstantsGetNoGradient) {
  Tape t;
  const Var a = t.leaf(DenseMatrix{{2}});
  const Var c = t.constant(DenseMatrix{{3}});
  const GradientSet g = t.backward(t.mul(a, c));
  EXPECT_TRUE(g.contains(a));
  EXPECT_FALSE(g.contains(c));
  EXPECT_EQ(g.of(a), (DenseMatrix{{3}}));
  EXPECT_THROW(g.of(c), ContractError);
}

TEST(Backward, Errors) {
  Tape t;
  const Var a = t.leaf(DenseMatrix(2, 2, 1.0));
  EXPECT_THROW(t.backward(a), ContractError);
  EXPECT_THROW(t.matmul(a, t.leaf(DenseMatrix(3, 1))), ContractError);
  EXPECT_THROW(t.add(a, t.leaf(DenseMatrix(2, 3))), ContractError);
  EXPECT_THROW(t.mean_rows(a, 3), ContractError);
  const std::vector<ClassId> labels{0, 1};
  EXPECT_THROW(t.softmax_cross_entropy(a, labels, {}), ContractError);
  EXPECT_THROW(finite_diff_check([](Tape& tp, std::span<const Var> v) { return tp.sum(v[0]); }, {DenseMatrix{{1}}}, 0.0),
               ContractError);
}

TEST(Backward, AccumulationIsAdditive) {
  CounterRng rng(12);
  const DenseMatrix p = random_matrix(3, 3, rng), q = random_matrix(3, 3, rng), w = random_matrix(3, 3, rng);
  auto first = [&](Tape& t, Var a, Var b) { return contract(t, t.square(a), w); };
  auto second = [&](Tape& t, Var a, Var b) { return t.sum(t.matmul(a, b)); };
  Tape t1, t2, t3;
  const Var a1 = t1.leaf(p), b1 = t1.leaf(q);
  const Var a2 = t2.leaf(p), b2 = t2.leaf(q);
  const Var a3 = t3.leaf(p), b3 = t3.leaf(q);
  const GradientSet g1 = t1.backward(first(t1, a1, b1));
  const GradientSet g2 = t2.backward(second(t2, a2, b2));
  const GradientSet g3 = t3.backward(t3.add(first(t3, a3, b3), second(t3, a3, b3)));
  DenseMatrix sum_a = g1.of(a1);
  for (std::size_t i = 0; i < sum_a.size(); ++i) sum_a.values()[i] += g2.of(a2).values()[i];
  EXPECT_EQ(g3.of(a3), sum_a);
  EXPECT_EQ(g3.of(b3), g2.of(b2));
}

TEST(Backward, SparsePropagateIsSelfAdjoint) {
  CounterRng rng(13);
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 2 + rng.below(30), d = 1 + rng.below(6), hops = rng.below(5);
    const CsrMatrix adj = random_norm_adj(n, rng);
    const DenseMatrix up = random_matrix(n, d, rng);
    Tape t;
    const Var x = t.leaf(random_matrix(n, d, rng));
    const GradientSet g = t.backward(contract(t, t.sparse_propagate(adj, x, hops), up));
    ASSERT_LE(max_abs_diff(g.of(x), propagate(adj, up, hops)), 1e-12);
  }
}

TEST(Backward, ReverseOrderIsDeterministic) {
  CounterRng rng(14);
  const DenseMatrix p = random_matrix(4, 3, rng);
  auto run = [&] {
    Tape t;
    const Var x = t.leaf(p);
    const Var y = t.relu(t.biinteraction(t.artificial_prop(x, 2, 1.5), 2));
    return t.backward(t.sum(t.square(y))).of(x);
  };
  EXPECT_EQ(run(), run());
}

TEST(FiniteDiff, Examples) {
  const auto sq = finite_diff_check([](Tape& t, std::span<const Var> v) { return t.sum(t.square(v[0])); },
                                    {DenseMatrix{{3.0}}}, 1e-5);
  EXPECT_LE(sq.max_rel_error, 1e-9);
  CounterRng rng(15);
  DenseMatrix pos = random_matrix(4, 4, rng, 0.5, 1.5);
  const auto relu_mean = finite_diff_check(
      [](Tape& t, std::span<const Var> v) { return t.scale(t.sum(t.relu(v[0])), 1.0 / 16); }, {pos}, 1e-5);
  EXPECT_LE(relu_mean.max_rel_error, 1e-7);
  EXPECT_EQ(relu_mean.coordinates, 16u);
  EXPECT_THROW(finite_diff_check([](Tape& t, std::span<const Var> v) { return t.sum(t.scale(v[0], NAN)); },
                                 {DenseMatrix{{1.0}}}, 1e-5),
               NumericError);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  CounterRng rng(16);
  const DenseMatrix y = random_matrix(20, 5, rng, -30, 30);
  const DenseMatrix p = softmax_rows(y);
  DenseMatrix shifted = y;
  for (std::size_t r = 0; r < 20; ++r)
    for (double& v : shifted.row(r)) v += 100.0 * static_cast<double>(r);
  EXPECT_LE(max_abs_diff(softmax_rows(shifted), p), 1e-12);
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0;
    for (double v : p.row(r)) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace catgcn
