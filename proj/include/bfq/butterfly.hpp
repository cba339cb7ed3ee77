#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bfq/linalg.hpp"

namespace bfq {

inline constexpr const char* kPairingConvention = "stride-doubling-v1";

/// Parameters of a learnable butterfly transform on n = 2^k coordinates.
///
/// The transform is B = B_k ... B_2 B_1: layer l (1-based) pairs indices whose
/// distance is 2^{l-1} and applies, to every pair (lo, hi), the unit
/// D G(theta) with G the Givens rotation [[c, -s], [s, c]] and D a fixed
/// diag(sigma_lo, sigma_hi) of +-1 entries. Layer 1 is applied first.
///
/// Storage is flat and layer-major: angle index l * n/2 + p is unit p of layer
/// l (0-based), units ordered by ascending low index. signs holds two entries
/// per unit in the same order (sigma_lo, sigma_hi).
struct ButterflyParams {
  std::size_t n = 0;
  std::vector<double> angles;
  std::vector<std::int8_t> signs;
  std::string pairing_convention = kPairingConvention;

  std::size_t num_layers() const noexcept { return n < 2 ? 0 : log2_floor(n); }
  std::size_t units_per_layer() const noexcept { return n / 2; }

  // Throws Error("dimension") / Error("format") when the invariants fail.
  void validate() const;

  friend bool operator==(const ButterflyParams&, const ButterflyParams&) = default;
};

struct PairList {
  int layer_index = 0;  // 1-based
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

// Pairs (j, j + 2^{layer-1}) for every j with bit (layer-1) clear, ascending.
PairList pairing(std::size_t n, int layer);

// a' = s1 (a cos t - b sin t), b' = s2 (a sin t + b cos t).
std::pair<double, double> givens_apply(double theta, int sign_lo, int sign_hi,
                                       double a, double b) noexcept;

// n log2(n) / 2.
std::size_t param_count(std::size_t n);

ButterflyParams init_identity(std::size_t n);
// Every unit theta = -pi/4 with signs (+1, -1): each unit is exactly H_2, so the
// product of layers is the Sylvester-Hadamard matrix H_n.
ButterflyParams init_hadamard(std::size_t n);
ButterflyParams init_random(std::size_t n, std::uint64_t seed, double scale = 0.1);

DenseVector butterfly_forward(const ButterflyParams& params, const DenseVector& x);
DenseVector butterfly_transpose(const ButterflyParams& params, const DenseVector& y);

// In-place variants over raw spans; used on matrix rows without copies.
void butterfly_forward_inplace(const ButterflyParams& params, std::span<double> x);
void butterfly_transpose_inplace(const ButterflyParams& params, std::span<double> y);

struct ButterflyGrad {
  std::vector<double> angles;  // same layout as ButterflyParams::angles
  DenseVector x;               // dL/dx = B^T grad_out
};

// Gradient of L(B x) given grad_out = dL/dy at y = B x. Layer inputs are
// recomputed from x.
ButterflyGrad butterfly_backward(const ButterflyParams& params, const DenseVector& x,
                                 const DenseVector& grad_out);

// Accumulates dL/dtheta into grad_angles and writes dL/dx into grad_x.
void butterfly_backward_accumulate(const ButterflyParams& params,
                                   std::span<const double> x,
                                   std::span<const double> grad_out,
                                   std::span<double> grad_angles,
                                   std::span<double> grad_x);

DenseMatrix butterfly_materialize(const ButterflyParams& params);

// Number of Givens units applied by forward/transpose on the calling thread
// since the last reset.
std::uint64_t givens_op_count() noexcept;
void reset_givens_op_count() noexcept;

}  // namespace bfq
