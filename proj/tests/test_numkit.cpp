#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "sharekd/numkit/check.hpp"
#include "sharekd/numkit/ops.hpp"
#include "sharekd/rng.hpp"

namespace sharekd::nk {
namespace {

Tensor param(Shape shape, Rng& rng, double std = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal(0.0, std);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

Tensor random_simplex(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) s += x = -std::log(1.0 - rng.uniform());
  for (double& x : v) x /= s;
  return Tensor::vector(std::move(v));
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({2, 0}, {}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, CopiesAliasAndCloneDoesNot) {
  Tensor a = Tensor::matrix(1, 2, {1, 2});
  Tensor b = a;
  b.data()[0] = 5;
  EXPECT_EQ(a.at(0), 5);
  Tensor c = a.clone();
  c.data()[0] = 7;
  EXPECT_EQ(a.at(0), 5);
  EXPECT_FALSE(a.same_storage(c));
}

TEST(Softmax, WorkedExamples) {
  Tape tape(false);
  auto s = softmax_rows(tape, Tensor::matrix(1, 2, {0, 0}));
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(1), 0.5);

  s = softmax_rows(tape, Tensor::matrix(1, 2, {3.0, -1e300}));
  EXPECT_NEAR(s.at(0), 1.0, 1e-15);
  EXPECT_NEAR(s.at(1), 0.0, 1e-15);

  s = softmax_rows(tape, Tensor::matrix(1, 2, {1, 0}));
  const double e = std::exp(1.0);
  EXPECT_NEAR(s.at(0), e / (e + 1.0), 1e-12);
  EXPECT_NEAR(s.at(1), 1.0 / (e + 1.0), 1e-12);
  EXPECT_NEAR(s.at(0), 0.73105857863, 1e-11);
}

TEST(Softmax, RejectsNonFiniteNamingIndex) {
  Tape tape(false);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    softmax_rows(tape, Tensor::matrix(2, 2, {0, 1, 2, nan}));
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("(1,1)"), std::string::npos) << e.what();
  }
}

TEST(Softmax, RowsSumToOneOnRandomInputs) {
  Rng rng(1);
  Tape tape(false);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(9);
    std::vector<double> v(r * c);
    for (double& x : v) x = -50.0 + 100.0 * rng.uniform();
    auto s = softmax_rows(tape, Tensor::matrix(r, c, v));
    for (std::size_t i = 0; i < r; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) sum += s.at(i, j);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(CrossEntropy, WorkedExamples) {
  Tape tape(false);
  EXPECT_DOUBLE_EQ(cross_entropy(tape, Tensor::vector({1.0, 0.0}), 0).item(), 0.0);
  EXPECT_NEAR(cross_entropy(tape, Tensor::vector({0.5, 0.5}), 1).item(), std::log(2.0), 1e-15);
  const double p1 = 1.0 / (std::exp(1.0) + 1.0);
  EXPECT_NEAR(cross_entropy(tape, Tensor::vector({1.0 - p1, p1}), 1).item(), 1.31326168752, 1e-10);
  EXPECT_NEAR(cross_entropy(tape, Tensor::vector({1.0 - p1, p1}), 1).item(), -std::log(p1), 1e-15);
}

TEST(CrossEntropy, LabelOutOfRangeThrows) {
  Tape tape(false);
  EXPECT_THROW(cross_entropy(tape, Tensor::vector({0.5, 0.5}), 2), std::out_of_range);
}

TEST(CrossEntropy, NonNegativeOnRandomSimplex) {
  Rng rng(2);
  Tape tape(false);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng.below(5);
    EXPECT_GE(cross_entropy(tape, random_simplex(n, rng), rng.below(n)).item(), 0.0);
  }
}

TEST(KlDiv, WorkedExamples) {
  Tape tape(false);
  const auto p = Tensor::vector({0.2, 0.3, 0.5});
  EXPECT_DOUBLE_EQ(kl_div(tape, p, p).item(), 0.0);
  EXPECT_NEAR(kl_div(tape, Tensor::vector({1, 0}), Tensor::vector({0.5, 0.5})).item(),
              std::log(2.0), 1e-15);
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  const double got = kl_div(tape, Tensor::vector({0.5, 0.5}), Tensor::vector({0.9, 0.1})).item();
  EXPECT_NEAR(got, expected, 1e-14);
  EXPECT_NEAR(got, 0.51082562376, 1e-10);
}

TEST(KlDiv, InfiniteDivergenceThrows) {
  Tape tape(false);
  EXPECT_THROW(kl_div(tape, Tensor::vector({0.5, 0.5}), Tensor::vector({1.0, 0.0})),
               std::domain_error);
}

TEST(KlDiv, NonNegativeAndZeroOnlyForEqualInputs) {
  Rng rng(3);
  Tape tape(false);
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = 2 + rng.below(6);
    auto p = random_simplex(n, rng), q = random_simplex(n, rng);
    const double d = kl_div(tape, p, q).item();
    EXPECT_GE(d, 0.0);
    double maxdiff = 0.0;
    for (std::size_t j = 0; j < n; ++j) maxdiff = std::max(maxdiff, std::abs(p.at(j) - q.at(j)));
    if (maxdiff > 1e-6) EXPECT_GT(d, 0.0);
    EXPECT_NEAR(kl_div(tape, p, p).item(), 0.0, 1e-12);
  }
}

TEST(Mse, WorkedExamples) {
  Tape tape(false);
  const auto v = Tensor::vector({1.5, -2.0});
  EXPECT_DOUBLE_EQ(mse(tape, v, v).item(), 0.0);
  EXPECT_DOUBLE_EQ(mse(tape, Tensor::vector({1, 2}), Tensor::vector({0, 0})).item(), 5.0);
  EXPECT_NEAR(mse(tape, Tensor::vector({0.3, -0.7}), Tensor::vector({0.1, 0.1})).item(),
              0.04 + 0.64, 1e-15);
  EXPECT_THROW(mse(tape, Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})),
               std::invalid_argument);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Tensor w = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  w.set_requires_grad(true);
  tape.backward(sum(tape, w));
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoW) {
  Tape tape;
  Tensor w = Tensor::vector({3.0});
  w.set_requires_grad(true);
  tape.backward(mse(tape, w, Tensor::vector({0.0})));
  EXPECT_EQ(w.grad()[0], 6.0);
}

TEST(Backward, RejectsNonScalarAndReuse) {
  Tape tape;
  Tensor w = Tensor::vector({1.0, 2.0});
  w.set_requires_grad(true);
  Tensor y = scale(tape, w, 2.0);
  EXPECT_THROW(tape.backward(y), std::invalid_argument);
  Tensor l = sum(tape, y);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), std::logic_error);
}

TEST(Backward, RepeatedUseAccumulatesLikeDuplicatedParameter) {
  Rng rng(4);
  Tensor w = param({3, 3}, rng);
  Tensor x = param({2, 3}, rng);
  x.set_requires_grad(false);

  Tape t1;
  Tensor h = matmul(t1, matmul(t1, x, w), w);
  t1.backward(sum(t1, gelu(t1, h)));

  // Same graph with the second use replaced by an independent copy.
  Tensor w1 = w.clone(), w2 = w.clone();
  Tape t2;
  Tensor h2 = matmul(t2, matmul(t2, x, w1), w2);
  t2.backward(sum(t2, gelu(t2, h2)));

  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_NEAR(w.grad()[i], w1.grad()[i] + w2.grad()[i], 1e-12);
  }
}

TEST(GradCheck, LinearModelIsExact) {
  Rng rng(5);
  Tensor w = param({3, 2}, rng), b = param({2}, rng);
  Tensor x = Tensor::matrix(4, 3, {1, 2, 3, -1, 0, 2, 0.5, 0.5, 0.5, 3, -2, 1});
  std::vector<Tensor> ps{w, b};
  auto res = finite_diff_check([&](Tape& t) { return sum(t, linear(t, x, w, b)); }, ps, 1e-5);
  EXPECT_LE(res.max_rel_error, 1e-9);
  EXPECT_EQ(res.coords_checked, 8u);
}

TEST(GradCheck, EveryOpPasses) {
  Rng rng(6);
  Tensor x = param({6, 4}, rng, 0.5);
  Tensor w = param({4, 4}, rng, 0.5), b = param({4}, rng, 0.1);
  Tensor g = param({4}, rng, 0.3), beta = param({4}, rng, 0.1);
  Tensor table = param({5, 4}, rng, 0.5);
  Tensor target = param({6, 4}, rng, 0.5);
  const std::vector<std::size_t> ids{0, 3, 3, 1, 4, 0};
  const std::vector<std::size_t> labels{1, 0, 3, 2, 2, 1};
  std::vector<Tensor> ps{x, w, b, g, beta, table};
  auto loss = [&](Tape& t) {
    Tensor h = add(t, x, gather_rows(t, table, ids));
    Tensor q = linear(t, h, w, b);
    Tensor a = block_attention(t, q, h, gelu(t, q), 3, 2);
    Tensor n = layer_norm_rows(t, add(t, a, h), g, beta, 1e-12);
    Tensor u = normalize_rows(t, transpose(t, transpose(t, n)));
    Tensor p = softmax_rows(t, scale(t, n, 1.5));
    Tensor p_ref = softmax_rows(t, u);
    Tensor l = add(t, cross_entropy_rows(t, p, labels), kl_div_rows(t, p_ref, p));
    return add(t, l, scale(t, mse(t, u, target), 0.3));
  };
  auto res = finite_diff_check(loss, ps, 1e-5);
  EXPECT_LE(res.max_rel_error, 1e-4) << "param " << res.worst_param << " index "
                                     << res.worst_index << " analytic " << res.analytic
                                     << " numeric " << res.numeric;
}

TEST(Attention, ShapeMismatchThrows) {
  Tape tape(false);
  EXPECT_THROW(block_attention(tape, Tensor::zeros({4, 4}), Tensor::zeros({4, 2}),
                               Tensor::zeros({4, 4}), 2, 1),
               std::invalid_argument);
  EXPECT_THROW(block_attention(tape, Tensor::zeros({4, 4}), Tensor::zeros({4, 4}),
                               Tensor::zeros({4, 4}), 3, 1),
               std::invalid_argument);
}

TEST(LayerNorm, MatchesOracle) {
  Rng rng(7);
  Tape tape(false);
  Tensor x = param({3, 5}, rng), g = param({5}, rng), b = param({5}, rng);
  Tensor out = layer_norm_rows(tape, x, g, b, 1e-12);
  for (std::size_t r = 0; r < 3; ++r) {
    oracle::Vec row(x.data().begin() + r * 5, x.data().begin() + r * 5 + 5);
    oracle::Vec gv(g.data().begin(), g.data().end()), bv(b.data().begin(), b.data().end());
    const auto ref = oracle::layer_norm(row, gv, bv, 1e-12);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(out.at(r, j), ref[j], 1e-12);
  }
}

TEST(Rng, DeterministicAndStageSeedsDiffer) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(derive_seed(1, "teacher"), derive_seed(1, "student"));
  EXPECT_NE(derive_seed(1, "teacher"), derive_seed(2, "teacher"));
  EXPECT_EQ(derive_seed(1, "teacher"), derive_seed(1, "teacher"));
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
}

}  // namespace
}  // namespace sharekd::nk
