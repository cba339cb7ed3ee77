#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bfq {

/// How entries share a quantization scale.
struct Grouping {
  enum class Kind { PerTensor, PerRow, PerGroup };
  Kind kind = Kind::PerTensor;
  std::size_t group_size = 0;  // PerGroup only: contiguous entries within a row

  static Grouping per_tensor() { return {Kind::PerTensor, 0}; }
  static Grouping per_row() { return {Kind::PerRow, 0}; }
  static Grouping per_group(std::size_t g) { return {Kind::PerGroup, g}; }

  // "per-tensor", "per-row", "per-group:<g>".
  std::string to_string() const;
  static Grouping parse(const std::string& text);

  friend bool operator==(const Grouping&, const Grouping&) = default;
};

/// Symmetric uniform b-bit quantization; codes span [-2^{b-1}, 2^{b-1} - 1],
/// rounding half away from zero.
struct QuantScheme {
  int bits = 2;
  Grouping grouping;

  int qmin() const noexcept { return -(1 << (bits - 1)); }
  int qmax() const noexcept { return (1 << (bits - 1)) - 1; }
  std::size_t levels() const noexcept { return std::size_t{1} << bits; }
  void validate() const;

  friend bool operator==(const QuantScheme&, const QuantScheme&) = default;
};

struct QuantizedBlock {
  std::vector<std::int32_t> codes;
  double scale = 1.0;
};

// max|x| / (2^{b-1} - 1); 1.0 for an all-zero input.
double compute_scale(std::span<const double> x, int bits);
std::vector<std::int32_t> quantize(std::span<const double> x, double scale, int bits);
std::vector<double> dequantize(std::span<const std::int32_t> codes, double scale);
QuantizedBlock quantize_block(std::span<const double> x, int bits);

/// Result of quantize-then-dequantize. mask[i] is the straight-through
/// derivative of value[i] with respect to the input: 1 when the pre-round code
/// x/s lies inside [qmin, qmax], 0 when clipping changed it.
struct FakeQuantResult {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  std::vector<double> scales;  // one per group, in group order
};

// x is a rows x cols row-major block; a vector is rows = 1.
FakeQuantResult fake_quant(std::span<const double> x, std::size_t rows,
                           std::size_t cols, const QuantScheme& scheme);
std::vector<double> fake_quant(std::span<const double> x, const QuantScheme& scheme);

// Straight-through gradient of fake_quant. Rounding passes gradients where the
// mask is 1; with scale_path the dependence of each group scale on its
// largest-magnitude entry is included, using d(s q)/ds = q - mask * x / s.
std::vector<double> fake_quant_backward(std::span<const double> x, std::size_t rows,
                                        std::size_t cols, const QuantScheme& scheme,
                                        std::span<const double> grad_out,
                                        bool scale_path = true);

// Straight-through mask for a fixed scale.
std::vector<std::uint8_t> ste_mask(std::span<const double> x, double scale, int bits);

// Normalized code counts over the 2^b bins, bin k holding code qmin + k. The
// last bin is 1 minus the others so the vector sums to one.
std::vector<double> hard_histogram(std::span<const std::int32_t> codes, int bits);

// Each sample spreads a softmax over bins with logits -(x/s - level)^2 / tau;
// tau is in code units, so tau = 0.25 corresponds to 0.25 s^2 in data units.
std::vector<double> soft_histogram(std::span<const double> x, double scale, int bits,
                                   double temperature);

// dL/dx for L(soft_histogram(x)) given dL/dp, scale held fixed.
std::vector<double> soft_histogram_backward(std::span<const double> x, double scale,
                                            int bits, double temperature,
                                            std::span<const double> grad_p);

}  // namespace bfq
