#include "bfq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bfq/error.hpp"

namespace bfq {

namespace {

void require_bits(int bits) {
  if (bits < 2 || bits > 8) {
    throw Error("bits", "bit width " + std::to_string(bits) + " outside 2..8");
  }
}

void require_scale(double scale) {
  if (!(scale > 0) || !std::isfinite(scale)) {
    throw Error("scale", "scale must be positive and finite");
  }
}

int qmin_of(int bits) { return -(1 << (bits - 1)); }
int qmax_of(int bits) { return (1 << (bits - 1)) - 1; }

// Softmax over the 2^b levels for one sample, written into w.
void soft_weights(double x, double scale, int bits, double temperature,
                  std::span<double> w) {
  const int lo = qmin_of(bits);
  const double u = x / scale;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double d = u - (lo + static_cast<int>(k));
    w[k] = -d * d / temperature;
    best = std::max(best, w[k]);
  }
  double z = 0.0;
  for (double& v : w) {
    v = std::exp(v - best);
    z += v;
  }
  for (double& v : w) v /= z;
}

}  // namespace

std::string Grouping::to_string() const {
  switch (kind) {
    case Kind::PerTensor:
      return "per-tensor";
    case Kind::PerRow:
      return "per-row";
    case Kind::PerGroup:
      return "per-group:" + std::to_string(group_size);
  }
  return "?";
}

Grouping Grouping::parse(const std::string& text) {
  if (text == "per-tensor") return per_tensor();
  if (text == "per-row") return per_row();
  const std::string prefix = "per-group:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string digits = text.substr(prefix.size());
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      const auto g = std::stoull(digits);
      if (g > 0) return per_group(g);
    }
  }
  throw Error("grouping", "unknown grouping '" + text +
                              "' (expected per-tensor, per-row or per-group:<g>)");
}

void QuantScheme::validate() const {
  require_bits(bits);
  if (grouping.kind == Grouping::Kind::PerGroup && grouping.group_size == 0) {
    throw Error("grouping", "group size must be positive");
  }
}

double compute_scale(std::span<const double> x, int bits) {
  if (x.empty()) throw Error("empty", "cannot compute a scale for no values");
  require_bits(bits);
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m == 0.0) return 1.0;
  return m / qmax_of(bits);
}

std::vector<std::int32_t> quantize(std::span<const double> x, double scale, int bits) {
  require_scale(scale);
  require_bits(bits);
  const double lo = qmin_of(bits);
  const double hi = qmax_of(bits);
  std::vector<std::int32_t> codes(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // std::round rounds halfway cases away from zero.
    codes[i] = static_cast<std::int32_t>(std::clamp(std::round(x[i] / scale), lo, hi));
  }
  return codes;
}

std::vector<double> dequantize(std::span<const std::int32_t> codes, double scale) {
  require_scale(scale);
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = scale * codes[i];
  return out;
}

QuantizedBlock quantize_block(std::span<const double> x, int bits) {
  QuantizedBlock b;
  b.scale = compute_scale(x, bits);
  b.codes = quantize(x, b.scale, bits);
  return b;
}

std::vector<std::uint8_t> ste_mask(std::span<const double> x, double scale, int bits) {
  require_scale(scale);
  const double lo = qmin_of(bits);
  const double hi = qmax_of(bits);
  std::vector<std::uint8_t> mask(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = x[i] / scale;
    mask[i] = (u >= lo && u <= hi) ? 1 : 0;
  }
  return mask;
}

namespace {

std::size_t group_length(std::span<const double> x, std::size_t rows, std::size_t cols,
                         const QuantScheme& scheme) {
  scheme.validate();
  if (x.size() != rows * cols) {
    throw Error("shape", "fake_quant block is not " + std::to_string(rows) + "x" +
                             std::to_string(cols));
  }
  std::size_t group = x.size();
  switch (scheme.grouping.kind) {
    case Grouping::Kind::PerTensor:
      break;
    case Grouping::Kind::PerRow:
      group = cols;
      break;
    case Grouping::Kind::PerGroup:
      if (cols % scheme.grouping.group_size != 0) {
        throw Error("grouping", "group size " + std::to_string(scheme.grouping.group_size) +
                                    " does not divide row length " + std::to_string(cols));
      }
      group = scheme.grouping.group_size;
      break;
  }
  return group;
}

}  // namespace

FakeQuantResult fake_quant(std::span<const double> x, std::size_t rows, std::size_t cols,
                           const QuantScheme& scheme) {
  const std::size_t group = group_length(x, rows, cols, scheme);
  FakeQuantResult out;
  out.values.resize(x.size());
  out.mask.resize(x.size());
  if (x.empty()) return out;
  for (std::size_t start = 0; start < x.size(); start += group) {
    const auto g = x.subspan(start, group);
    const QuantizedBlock block = quantize_block(g, scheme.bits);
    const auto values = dequantize(block.codes, block.scale);
    const auto mask = ste_mask(g, block.scale, scheme.bits);
    std::copy(values.begin(), values.end(), out.values.begin() + start);
    std::copy(mask.begin(), mask.end(), out.mask.begin() + start);
    out.scales.push_back(block.scale);
  }
  return out;
}

std::vector<double> fake_quant_backward(std::span<const double> x, std::size_t rows,
                                        std::size_t cols, const QuantScheme& scheme,
                                        std::span<const double> grad_out,
                                        bool scale_path) {
  const std::size_t group = group_length(x, rows, cols, scheme);
  if (grad_out.size() != x.size()) throw Error("shape", "gradient has wrong length");
  std::vector<double> grad(x.size(), 0.0);
  if (x.empty()) return grad;
  const double lo = scheme.qmin();
  const double hi = scheme.qmax();
  for (std::size_t start = 0; start < x.size(); start += group) {
    const auto g = x.subspan(start, group);
    const double scale = compute_scale(g, scheme.bits);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < g.size(); ++i) {
      if (std::abs(g[i]) > std::abs(g[arg])) arg = i;
    }
    double d_scale = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double u = g[i] / scale;
      const double q = std::clamp(std::round(u), lo, hi);
      const bool inside = u >= lo && u <= hi;
      grad[start + i] = inside ? grad_out[start + i] : 0.0;
      d_scale += grad_out[start + i] * (q - (inside ? u : 0.0));
    }
    // An all-zero group uses the constant sentinel scale.
    if (scale_path && g[arg] != 0.0) {
      grad[start + arg] += d_scale * (g[arg] > 0 ? 1.0 : -1.0) / hi;
    }
  }
  return grad;
}

std::vector<double> fake_quant(std::span<const double> x, const QuantScheme& scheme) {
  return fake_quant(x, 1, x.size(), scheme).values;
}

std::vector<double> hard_histogram(std::span<const std::int32_t> codes, int bits) {
  require_bits(bits);
  if (codes.empty()) throw Error("empty", "histogram of no codes");
  const int lo = qmin_of(bits);
  const int hi = qmax_of(bits);
  const std::size_t bins = std::size_t{1} << bits;
  std::vector<std::size_t> counts(bins, 0);
  for (std::int32_t c : codes) {
    if (c < lo || c > hi) {
      throw Error("range", "code " + std::to_string(c) + " outside the " +
                               std::to_string(bits) + "-bit range");
    }
    ++counts[static_cast<std::size_t>(c - lo)];
  }
  std::vector<double> p(bins);
  const double total = static_cast<double>(codes.size());
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < bins; ++k) {
    p[k] = static_cast<double>(counts[k]) / total;
    acc += p[k];
  }
  p[bins - 1] = 1.0 - acc;
  return p;
}

std::vector<double> soft_histogram(std::span<const double> x, double scale, int bits,
                                   double temperature) {
  require_bits(bits);
  require_scale(scale);
  if (!(temperature > 0)) throw Error("temperature", "temperature must be positive");
  if (x.empty()) throw Error("empty", "histogram of no values");
  const std::size_t bins = std::size_t{1} << bits;
  std::vector<double> p(bins, 0.0);
  std::vector<double> w(bins);
  for (double v : x) {
    soft_weights(v, scale, bits, temperature, w);
    for (std::size_t k = 0; k < bins; ++k) p[k] += w[k];
  }
  for (double& v : p) v /= static_cast<double>(x.size());
  return p;
}

std::vector<double> soft_histogram_backward(std::span<const double> x, double scale,
                                            int bits, double temperature,
                                            std::span<const double> grad_p) {
  require_bits(bits);
  require_scale(scale);
  if (!(temperature > 0)) throw Error("temperature", "temperature must be positive");
  const std::size_t bins = std::size_t{1} << bits;
  if (grad_p.size() != bins) throw Error("shape", "histogram gradient has wrong length");
  const int lo = qmin_of(bits);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  std::vector<double> grad_x(x.size());
  std::vector<double> w(bins);
  std::vector<double> dlogit(bins);
  for (std::size_t i = 0; i < x.size(); ++i) {
    soft_weights(x[i], scale, bits, temperature, w);
    const double u = x[i] / scale;
    double mean_dlogit = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      dlogit[k] = -2.0 * (u - (lo + static_cast<int>(k))) / (temperature * scale);
      mean_dlogit += w[k] * dlogit[k];
    }
    double g = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      g += grad_p[k] * w[k] * (dlogit[k] - mean_dlogit);
    }
    grad_x[i] = g * inv_n;
  }
  return grad_x;
}

}  // namespace bfq
