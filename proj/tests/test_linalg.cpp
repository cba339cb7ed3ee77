#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bfq/error.hpp"
#include "bfq/linalg.hpp"
#include "support.hpp"

using namespace bfq;

namespace {

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(DenseVector, RejectsNonFinite) {
  EXPECT_EQ(code_of([] { DenseVector v({1.0, std::nan("")}); }), "non-finite");
  EXPECT_EQ(code_of([] {
              DenseVector v({std::numeric_limits<double>::infinity()});
            }),
            "non-finite");
}

TEST(MatVec, Identity) {
  EXPECT_EQ(mat_vec(DenseMatrix::identity(3), DenseVector{1, 2, 3}), (DenseVector{1, 2, 3}));
}

TEST(MatVec, Permutation) {
  const auto p = DenseMatrix::from_rows({{0, 1}, {1, 0}});
  EXPECT_EQ(mat_vec(p, DenseVector{5, 7}), (DenseVector{7, 5}));
}

TEST(MatVec, FirstColumnOfH4) {
  const auto h4 = DenseMatrix::from_rows(
      {{.5, .5, .5, .5}, {.5, -.5, .5, -.5}, {.5, .5, -.5, -.5}, {.5, -.5, -.5, .5}});
  EXPECT_EQ(mat_vec(h4, DenseVector::basis(4, 0)), (DenseVector{.5, .5, .5, .5}));
}

TEST(MatVec, ShapeMismatch) {
  EXPECT_EQ(code_of([] { mat_vec(DenseMatrix::identity(3), DenseVector{1, 2}); }), "shape");
}

TEST(LuSolve, Identity) {
  const auto b = DenseMatrix::from_rows({{3}, {4}});
  EXPECT_EQ(lu_solve(DenseMatrix::identity(2), b), b);
}

TEST(LuSolve, DiagonalInverse) {
  const auto x = lu_solve(DenseMatrix::from_rows({{2, 0}, {0, 4}}), DenseMatrix::identity(2));
  EXPECT_EQ(x, DenseMatrix::from_rows({{0.5, 0}, {0, 0.25}}));
}

TEST(LuSolve, CayleyImage) {
  // (I + A)^{-1} (I - A) for A = [[0,1],[-1,0]]: hand value [[0,-1],[1,0]].
  const auto x = lu_solve(DenseMatrix::from_rows({{1, 1}, {-1, 1}}),
                          DenseMatrix::from_rows({{1, -1}, {1, 1}}));
  const auto want = DenseMatrix::from_rows({{0, -1}, {1, 0}});
  EXPECT_LE(max_abs_diff(x.span(), want.span()), 1e-15);
}

TEST(LuSolve, Singular) {
  EXPECT_EQ(code_of([] {
              lu_solve(DenseMatrix::from_rows({{1, 2}, {2, 4}}), DenseMatrix::identity(2));
            }),
            "singular");
}

TEST(LuSolve, RandomSystemResidual) {
  Rng rng(11);
  const auto a = support::random_matrix(12, 12, rng);
  const auto b = support::random_matrix(12, 3, rng);
  const auto x = lu_solve(a, b);
  EXPECT_LE(max_abs_diff(mat_mul(a, x).span(), b.span()), 1e-10);
}

TEST(HadamardDirect, SmallCases) {
  EXPECT_EQ(hadamard_direct(1), DenseMatrix::from_rows({{1}}));
  const double r = 1 / std::sqrt(2.0);
  const auto h2 = hadamard_direct(2);
  EXPECT_LE(max_abs_diff(h2.span(), DenseMatrix::from_rows({{r, r}, {r, -r}}).span()), 1e-15);
  const auto h4 = hadamard_direct(4);
  const auto want = DenseMatrix::from_rows(
      {{.5, .5, .5, .5}, {.5, -.5, .5, -.5}, {.5, .5, -.5, -.5}, {.5, -.5, -.5, .5}});
  EXPECT_LE(max_abs_diff(h4.span(), want.span()), 1e-15);
}

TEST(HadamardDirect, NotPowerOfTwo) {
  EXPECT_EQ(code_of([] { hadamard_direct(6); }), "dimension");
}

TEST(HaarOrthogonal, OneByOne) {
  const auto q = haar_orthogonal(1, 5);
  EXPECT_EQ(std::abs(q(0, 0)), 1.0);
}

TEST(HaarOrthogonal, Deterministic) {
  EXPECT_EQ(haar_orthogonal(16, 3), haar_orthogonal(16, 3));
  EXPECT_NE(haar_orthogonal(16, 3), haar_orthogonal(16, 4));
}

TEST(HaarOrthogonal, OrthogonalByExplicitProduct) {
  const auto q = haar_orthogonal(64, 7);
  const auto g = mat_mul(q.transpose(), q);
  EXPECT_LE(max_abs_diff(g.span(), DenseMatrix::identity(64).span()), 1e-10);
}

TEST(Materialize, Examples) {
  EXPECT_EQ(materialize([](const DenseVector& x) { return x; }, 3), DenseMatrix::identity(3));
  const auto neg = materialize(
      [](const DenseVector& x) {
        DenseVector y = x;
        for (auto& v : y.span()) v = -v;
        return y;
      },
      2);
  EXPECT_EQ(neg, DenseMatrix::from_rows({{-1, 0}, {0, -1}}));
  EXPECT_EQ(code_of([] { materialize([](const DenseVector&) { return DenseVector(3); }, 2); }),
            "shape");
}

TEST(Kron, MatchesDefinition) {
  const auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
  const auto b = DenseMatrix::from_rows({{0, 5}, {6, 7}});
  const auto k = kron(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(k(i, j), a(i / 2, j / 2) * b(i % 2, j % 2));
}

TEST(OrthogonalityDeviation, DetectsScaling) {
  auto q = DenseMatrix::identity(70);
  EXPECT_EQ(orthogonality_deviation(q), 0.0);
  q(69, 69) = 1.5;
  EXPECT_NEAR(orthogonality_deviation(q), 1.25, 1e-15);
}
