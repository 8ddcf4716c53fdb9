// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sllm/numerics.hpp"
#include "test_util.hpp"

using namespace sllm;
using namespace sllm::testing;

TEST(Matmul, IdentityLeavesInputAlone) {
  const Matrix x = random_matrix(2, 5, 1);
  EXPECT_EQ(matmul(Matrix::identity(2), x), x);
}

TEST(Matmul, SmallHandExample) {
  const Matrix a(2, 2, {1, 2, 3, 4});
  const Matrix b(2, 1, {1, 1});
  EXPECT_EQ(matmul(a, b), Matrix(2, 1, {3, 7}));
}

TEST(Matmul, MatchesTripleLoop) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix a = random_matrix(5, 7, s, 1);
    const Matrix b = random_matrix(7, 3, s, 2);
    const Matrix got = matmul(a, b);
    const Matrix want = naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  const Matrix a = random_matrix(4, 6, 3, 1);
  const Matrix b = random_matrix(5, 6, 3, 2);
  const Matrix c = random_matrix(4, 3, 3, 3);
  const Matrix nt = matmul_nt(a, b);
  const Matrix nt_ref = naive_matmul(a, transpose(b));
  const Matrix tn = matmul_tn(a, c);
  const Matrix tn_ref = naive_matmul(transpose(a), c);
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt.data()[i], nt_ref.data()[i], 1e-12);
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn.data()[i], tn_ref.data()[i], 1e-12);
}

TEST(Matmul, Associative) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Matrix a = random_matrix(3, 4, s, 1);
    const Matrix b = random_matrix(4, 5, s, 2);
    const Matrix c = random_matrix(5, 2, s, 3);
    const Matrix l = matmul(matmul(a, b), c);
    const Matrix r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_LE(rel_err(l.data()[i], r.data()[i]), 1e-9);
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(add(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST(Matmul, BackwardMatchesFiniteDifferences) {
  Matrix a = random_matrix(3, 4, 9, 1);
  Matrix b = random_matrix(4, 2, 9, 2);
  const Matrix w = random_matrix(3, 2, 9, 3);  // L = Σ w ⊙ (a·b)
  auto loss = [&] {
    const Matrix c = matmul(a, b);
    double l = 0;
    for (std::size_t i = 0; i < c.size(); ++i) l += w.data()[i] * c.data()[i];
    return l;
  };
  const MatmulGrads g = matmul_backward(a, b, w);
  EXPECT_LE(max_grad_error(a.data(), g.da.data(), loss), 1e-4);
  EXPECT_LE(max_grad_error(b.data(), g.db.data(), loss), 1e-4);
}

TEST(Softmax, UniformOnEqualScores) {
  const auto y = softmax(std::vector<double>{0, 0});
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, StableForLargeInputs) {
  const auto y = softmax(std::vector<double>{1000, 0});
  EXPECT_TRUE(std::isfinite(y[0]) && std::isfinite(y[1]));
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
}

TEST(Softmax, MatchesExpOverSum) {
  const auto y = softmax(std::vector<double>{1, 2, 3});
  long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], static_cast<double>(std::exp(static_cast<long double>(i + 1)) / z), 1e-12);
}

TEST(Softmax, RowsAreStochastic) {
  const Matrix y = softmax_rows(random_matrix(20, 9, 4, 0, 5.0));
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double s = 0;
    for (double v : y.row(r)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SoftmaxBackward, EqualUpstreamGivesZero) {
  const Matrix y = softmax_rows(random_matrix(3, 4, 5));
  const Matrix g = softmax_rows_backward(y, Matrix(3, 4, 0.7));
  for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(SoftmaxBackward, SaturatedCoordinateHasNoGradient) {
  const Matrix y(2, 2, {1, 0, 0, 1});
  const Matrix g = softmax_rows_backward(y, random_matrix(2, 2, 6));
  for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(SoftmaxBackward, MatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Matrix x = random_matrix(2, 2, s, 1);
    const Matrix w = random_matrix(2, 2, s, 2);
    auto loss = [&] {
      const Matrix y = softmax_rows(x);
      double l = 0;
      for (std::size_t i = 0; i < y.size(); ++i) l += w.data()[i] * y.data()[i];
      return l;
    };
    const Matrix g = softmax_rows_backward(softmax_rows(x), w);
    EXPECT_LE(max_grad_error(x.data(), g.data(), loss, 1e-6), 1e-6);
  }
}

TEST(Vectors, CosineEdgeCases) {
  const FeatureVec v = random_vec(7, 1);
  FeatureVec neg = v;
  for (double& x : neg) x = -x;
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
  EXPECT_NEAR(cosine(v, neg), -1.0, 1e-15);
  EXPECT_THROW(cosine(v, FeatureVec(7, 0.0)), DegenerateInputError);
  EXPECT_THROW(l2_normalize(FeatureVec(3, 0.0)), DegenerateInputError);
}

TEST(Vectors, CosineMatchesFormula) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const FeatureVec u = random_vec(11, s, 1);
    const FeatureVec v = random_vec(11, s, 2);
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      uv += u[i] * v[i];
      uu += u[i] * u[i];
      vv += v[i] * v[i];
    }
    EXPECT_NEAR(cosine(u, v), uv / std::sqrt(uu * vv), 1e-12);
  }
}

TEST(Vectors, NormalizeBackwardMatchesFiniteDifferences) {
  FeatureVec x = random_vec(6, 2, 1);
  const FeatureVec w = random_vec(6, 2, 2);
  auto loss = [&] { return dot(l2_normalize(x), w); };
  EXPECT_LE(max_grad_error(x, l2_normalize_backward(x, w), loss), 1e-4);
}

TEST(Vectors, VecMatAndMatVecMatchMatmul) {
  const Matrix m = random_matrix(4, 3, 8);
  const FeatureVec v = random_vec(4, 8, 1);
  const FeatureVec u = random_vec(3, 8, 2);
  const Matrix vm = naive_matmul(Matrix(1, 4, v), m);
  const Matrix mu = naive_matmul(m, Matrix(3, 1, u));
  const FeatureVec got_vm = vec_mat(v, m);
  const FeatureVec got_mu = mat_vec(m, u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got_vm[j], vm(0, j), 1e-12);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got_mu[i], mu(i, 0), 1e-12);
}

TEST(CounterRng, ReproducibleAndStreamsIndependent) {
  CounterRng a(42, 1), b(42, 1), c(42, 2), d(43, 1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_bits();
    EXPECT_EQ(x, b.next_bits());
    EXPECT_NE(x, c.next_bits());
    EXPECT_NE(x, d.next_bits());
    seen.insert(x);
  }
  EXPECT_EQ(seen.size(), 100u);
  // random access equals sequential draws
  CounterRng e(42, 1);
  EXPECT_EQ(e.bits_at(5), CounterRng(42, 1).bits_at(5));
}

TEST(CounterRng, GaussianMoments) {
  CounterRng rng(7, 0);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    s += g;
    s2 += g * g;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(CounterRng, UniformRangeAndBelow) {
  CounterRng rng(3, 3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}
