#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>

#include "bfq/butterfly.hpp"
#include "bfq/composite.hpp"
#include "bfq/linalg.hpp"

namespace bfq {

/// A fixed dense orthogonal matrix (Hadamard, Haar-random, identity baselines).
struct DenseTransform {
  DenseMatrix q;
};

/// Any orthogonal transform the toolkit can apply: x -> Q x and y -> Q^T y.
class Transform {
 public:
  using Variant = std::variant<DenseTransform, ButterflyParams, CompositeParams>;

  Transform(ButterflyParams p);
  Transform(CompositeParams p);
  Transform(DenseTransform d);

  std::size_t dim() const noexcept;
  // Learnable parameter count; zero for dense baselines.
  std::size_t learnable_count() const noexcept;
  std::string kind() const;

  void apply_inplace(std::span<double> x) const;
  void transpose_inplace(std::span<double> y) const;
  DenseVector apply(const DenseVector& x) const;
  DenseVector transpose_apply(const DenseVector& y) const;
  DenseMatrix materialize() const;

  const Variant& params() const noexcept { return params_; }
  const ButterflyParams* butterfly() const noexcept {
    return std::get_if<ButterflyParams>(&params_);
  }
  const CompositeParams* composite() const noexcept {
    return std::get_if<CompositeParams>(&params_);
  }

 private:
  Variant params_;
  // Materialized Q1 for composites, kept alongside the parameters.
  DenseMatrix composite_q1_;
};

}  // namespace bfq
