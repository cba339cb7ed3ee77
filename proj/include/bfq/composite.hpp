#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "bfq/butterfly.hpp"
#include "bfq/linalg.hpp"

namespace bfq {

/// Skew-symmetric generator of a Cayley orthogonal block. skew holds the strict
/// upper triangle of A row-major: (0,1), (0,2), ..., (0,d-1), (1,2), ...
struct CayleyParams {
  std::size_t d = 1;
  std::vector<double> skew;

  static CayleyParams zero(std::size_t d);
  static std::size_t count(std::size_t d) { return d * (d - 1) / 2; }

  DenseMatrix generator() const;  // the full A
  void validate() const;

  friend bool operator==(const CayleyParams&, const CayleyParams&) = default;
};

/// Q1 (x) B2 on d = d1 * d2 coordinates. A vector is read as a d1 x d2 array in
/// row-major order; Q1 mixes rows, the butterfly acts within each row.
struct CompositeParams {
  std::size_t d1 = 1;
  std::size_t d2 = 1;
  CayleyParams q1;
  ButterflyParams b2;

  std::size_t dim() const noexcept { return d1 * d2; }
  std::size_t learnable_count() const noexcept {
    return q1.skew.size() + b2.angles.size();
  }
  void validate() const;

  static CompositeParams identity(std::size_t d1, std::size_t d2);

  friend bool operator==(const CompositeParams&, const CompositeParams&) = default;
};

// (I - A)(I + A)^{-1}, formed as the LU solve (I + A)^{-1}(I - A); the two
// factors commute.
DenseMatrix cayley_materialize(const CayleyParams& p);

// dL/d(skew) given dL/dQ. With M = (I + A)^{-1}, dQ = -(I + Q) dA M, so
// dL/dA = -(I + Q)^T G M^T, folded onto the upper triangle as G_ij - G_ji.
std::vector<double> cayley_backward(const CayleyParams& p, const DenseMatrix& grad_q);

DenseVector kron_apply(const CompositeParams& c, const DenseVector& x);
DenseVector kron_transpose(const CompositeParams& c, const DenseVector& y);

struct CompositeGrad {
  std::vector<double> skew;
  std::vector<double> angles;
  DenseVector x;
};

CompositeGrad kron_backward(const CompositeParams& c, const DenseVector& x,
                            const DenseVector& grad_out);

// Precomputed Q1 for repeated application within one pass.
struct CompositeWork {
  explicit CompositeWork(const CompositeParams& c);
  CompositeWork(const CompositeParams& c, DenseMatrix q1_materialized)
      : params(c), q1(std::move(q1_materialized)) {}
  const CompositeParams& params;
  DenseMatrix q1;
};

void kron_apply_inplace(const CompositeWork& w, std::span<double> x);
void kron_transpose_inplace(const CompositeWork& w, std::span<double> y);
// Accumulates angle gradients and dL/dQ1 into grad_q1; grad_q1 is
// turned into skew gradients with cayley_backward once per pass.
void kron_backward_accumulate(const CompositeWork& w, std::span<const double> x,
                              std::span<const double> grad_out, DenseMatrix& grad_q1,
                              std::span<double> grad_angles, std::span<double> grad_x);

// Power of 2 -> (1, d). Otherwise the smallest power-of-2 divisor d2 with
// d / d2 <= d2. Error("no-pow2-factor") for odd d > 1.
std::pair<std::size_t, std::size_t> choose_factorization(std::size_t d);

}  // namespace bfq
