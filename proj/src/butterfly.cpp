#include "bfq/butterfly.hpp"

#include <cmath>
#include <numbers>

#include "bfq/error.hpp"
#include "bfq/rng.hpp"

namespace bfq {

namespace {

thread_local std::uint64_t tl_givens_ops = 0;

void require_pow2(std::size_t n) {
  if (!is_power_of_two(n)) {
    throw Error("dimension", std::to_string(n) + " is not a power of 2");
  }
}

void require_dim(const ButterflyParams& p, std::size_t dim) {
  if (dim != p.n) {
    throw Error("shape", "vector dim " + std::to_string(dim) +
                             " does not match butterfly n=" + std::to_string(p.n));
  }
}

ButterflyParams blank(std::size_t n) {
  require_pow2(n);
  ButterflyParams p;
  p.n = n;
  p.angles.assign(param_count(n), 0.0);
  p.signs.assign(2 * param_count(n), 1);
  return p;
}

// Calls fn(unit, lo, hi) for every unit of 0-based layer l in storage order.
template <typename Fn>
void for_each_unit(std::size_t n, std::size_t layer, Fn&& fn) {
  const std::size_t stride = std::size_t{1} << layer;
  std::size_t unit = layer * (n / 2);
  for (std::size_t block = 0; block < n; block += 2 * stride) {
    for (std::size_t k = 0; k < stride; ++k, ++unit) {
      fn(unit, block + k, block + k + stride);
    }
  }
}

void forward_layer(const ButterflyParams& p, std::size_t layer, std::span<double> x) {
  for_each_unit(p.n, layer, [&](std::size_t u, std::size_t lo, std::size_t hi) {
    const auto [a, b] =
        givens_apply(p.angles[u], p.signs[2 * u], p.signs[2 * u + 1], x[lo], x[hi]);
    x[lo] = a;
    x[hi] = b;
    ++tl_givens_ops;
  });
}

}  // namespace

void ButterflyParams::validate() const {
  require_pow2(n);
  const std::size_t count = param_count(n);
  if (angles.size() != count) {
    throw Error("format", "expected " + std::to_string(count) + " angles, got " +
                              std::to_string(angles.size()));
  }
  if (signs.size() != 2 * count) {
    throw Error("format", "expected " + std::to_string(2 * count) +
                              " signs, got " + std::to_string(signs.size()));
  }
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if (signs[i] != 1 && signs[i] != -1) {
      throw Error("format", "sign " + std::to_string(i) + " is not +-1");
    }
  }
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (!std::isfinite(angles[i])) {
      throw Error("non-finite", "angle " + std::to_string(i) + " is not finite");
    }
  }
  if (pairing_convention != kPairingConvention) {
    throw Error("format", "unknown pairing convention '" + pairing_convention + "'");
  }
}

PairList pairing(std::size_t n, int layer) {
  require_pow2(n);
  const int layers = log2_floor(n);
  if (layer < 1 || layer > layers) {
    throw Error("layer", "layer " + std::to_string(layer) + " outside 1.." +
                             std::to_string(layers));
  }
  PairList out;
  out.layer_index = layer;
  out.pairs.reserve(n / 2);
  for_each_unit(n, static_cast<std::size_t>(layer - 1),
                [&](std::size_t, std::size_t lo, std::size_t hi) {
                  out.pairs.emplace_back(lo, hi);
                });
  return out;
}

std::pair<double, double> givens_apply(double theta, int sign_lo, int sign_hi,
                                       double a, double b) noexcept {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {sign_lo * (a * c - b * s), sign_hi * (a * s + b * c)};
}

std::size_t param_count(std::size_t n) {
  require_pow2(n);
  return n * static_cast<std::size_t>(log2_floor(n)) / 2;
}

ButterflyParams init_identity(std::size_t n) { return blank(n); }

ButterflyParams init_hadamard(std::size_t n) {
  ButterflyParams p = blank(n);
  for (double& t : p.angles) t = -std::numbers::pi / 4;
  for (std::size_t u = 0; u < p.angles.size(); ++u) p.signs[2 * u + 1] = -1;
  return p;
}

ButterflyParams init_random(std::size_t n, std::uint64_t seed, double scale) {
  if (!(scale > 0)) throw Error("scale", "random init scale must be positive");
  ButterflyParams p = blank(n);
  Rng rng(seed);
  for (double& t : p.angles) t = rng.uniform(-scale, scale);
  return p;
}

void butterfly_forward_inplace(const ButterflyParams& params, std::span<double> x) {
  require_dim(params, x.size());
  const std::size_t layers = params.num_layers();
  for (std::size_t l = 0; l < layers; ++l) forward_layer(params, l, x);
}

void butterfly_transpose_inplace(const ButterflyParams& params, std::span<double> y) {
  require_dim(params, y.size());
  // Each unit's transpose is G(theta)^T D.
  for (std::size_t l = params.num_layers(); l-- > 0;) {
    for_each_unit(params.n, l, [&](std::size_t u, std::size_t lo, std::size_t hi) {
      const double c = std::cos(params.angles[u]);
      const double s = std::sin(params.angles[u]);
      const double a = params.signs[2 * u] * y[lo];
      const double b = params.signs[2 * u + 1] * y[hi];
      y[lo] = a * c + b * s;
      y[hi] = -a * s + b * c;
      ++tl_givens_ops;
    });
  }
}

DenseVector butterfly_forward(const ButterflyParams& params, const DenseVector& x) {
  DenseVector y = x;
  butterfly_forward_inplace(params, y.span());
  return y;
}

DenseVector butterfly_transpose(const ButterflyParams& params, const DenseVector& y) {
  DenseVector x = y;
  butterfly_transpose_inplace(params, x.span());
  return x;
}

void butterfly_backward_accumulate(const ButterflyParams& params,
                                   std::span<const double> x,
                                   std::span<const double> grad_out,
                                   std::span<double> grad_angles,
                                   std::span<double> grad_x) {
  require_dim(params, x.size());
  require_dim(params, grad_out.size());
  require_dim(params, grad_x.size());
  if (grad_angles.size() != params.angles.size()) {
    throw Error("shape", "angle gradient buffer has wrong length");
  }
  const std::size_t n = params.n;
  const std::size_t layers = params.num_layers();

  // inputs[l] is the input of 0-based layer l.
  std::vector<double> inputs(layers * n);
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    std::copy(cur.begin(), cur.end(), inputs.begin() + l * n);
    forward_layer(params, l, cur);
  }

  std::vector<double> g(grad_out.begin(), grad_out.end());
  for (std::size_t l = layers; l-- > 0;) {
    const double* in = inputs.data() + l * n;
    for_each_unit(n, l, [&](std::size_t u, std::size_t lo, std::size_t hi) {
      const double c = std::cos(params.angles[u]);
      const double s = std::sin(params.angles[u]);
      const double ga = params.signs[2 * u] * g[lo];
      const double gb = params.signs[2 * u + 1] * g[hi];
      const double a = in[lo];
      const double b = in[hi];
      // dG/dtheta = [[-s, -c], [c, -s]] applied to (a, b).
      grad_angles[u] += ga * (-a * s - b * c) + gb * (a * c - b * s);
      g[lo] = ga * c + gb * s;
      g[hi] = -ga * s + gb * c;
    });
  }
  std::copy(g.begin(), g.end(), grad_x.begin());
}

ButterflyGrad butterfly_backward(const ButterflyParams& params, const DenseVector& x,
                                 const DenseVector& grad_out) {
  ButterflyGrad out;
  out.angles.assign(params.angles.size(), 0.0);
  out.x = DenseVector(params.n);
  require_dim(params, x.dim());
  require_dim(params, grad_out.dim());
  butterfly_backward_accumulate(params, x.span(), grad_out.span(), out.angles,
                                out.x.span());
  return out;
}

DenseMatrix butterfly_materialize(const ButterflyParams& params) {
  return materialize(
      [&](const DenseVector& v) { return butterfly_forward(params, v); }, params.n);
}

std::uint64_t givens_op_count() noexcept { return tl_givens_ops; }
void reset_givens_op_count() noexcept { tl_givens_ops = 0; }

}  // namespace bfq
