#include "bfq/composite.hpp"

#include <cmath>
#include <string>

#include "bfq/error.hpp"

namespace bfq {

namespace {

void require_dim(const CompositeParams& c, std::size_t dim) {
  if (dim != c.dim()) {
    throw Error("shape", "vector dim " + std::to_string(dim) +
                             " does not match composite d=" + std::to_string(c.dim()));
  }
}

// Y = Q1 X where X is d1 x d2 row-major.
void left_multiply(const DenseMatrix& q1, std::span<double> x, std::size_t d2,
                   bool transpose) {
  const std::size_t d1 = q1.rows();
  if (d1 == 1) {
    const double s = q1(0, 0);
    for (double& v : x) v *= s;
    return;
  }
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i < d1; ++i) {
    double* orow = out.data() + i * d2;
    for (std::size_t k = 0; k < d1; ++k) {
      const double qik = transpose ? q1(k, i) : q1(i, k);
      const double* xrow = x.data() + k * d2;
      for (std::size_t j = 0; j < d2; ++j) orow[j] += qik * xrow[j];
    }
  }
  std::copy(out.begin(), out.end(), x.begin());
}

}  // namespace

CayleyParams CayleyParams::zero(std::size_t d) {
  if (d < 1) throw Error("dimension", "Cayley block needs d >= 1");
  CayleyParams p;
  p.d = d;
  p.skew.assign(count(d), 0.0);
  return p;
}

DenseMatrix CayleyParams::generator() const {
  validate();
  DenseMatrix a(d, d);
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j, ++k) {
      a(i, j) = skew[k];
      a(j, i) = -skew[k];
    }
  }
  return a;
}

void CayleyParams::validate() const {
  if (d < 1) throw Error("dimension", "Cayley block needs d >= 1");
  if (skew.size() != count(d)) {
    throw Error("format", "expected " + std::to_string(count(d)) +
                              " skew entries, got " + std::to_string(skew.size()));
  }
  for (std::size_t i = 0; i < skew.size(); ++i) {
    if (!std::isfinite(skew[i])) {
      throw Error("non-finite", "skew " + std::to_string(i) + " is not finite");
    }
  }
}

void CompositeParams::validate() const {
  if (q1.d != d1) throw Error("format", "Cayley block size does not match d1");
  if (b2.n != d2) throw Error("format", "butterfly size does not match d2");
  if (!is_power_of_two(d2)) {
    throw Error("dimension", "d2=" + std::to_string(d2) + " is not a power of 2");
  }
  q1.validate();
  b2.validate();
}

CompositeParams CompositeParams::identity(std::size_t d1, std::size_t d2) {
  CompositeParams c;
  c.d1 = d1;
  c.d2 = d2;
  c.q1 = CayleyParams::zero(d1);
  c.b2 = init_identity(d2);
  return c;
}

DenseMatrix cayley_materialize(const CayleyParams& p) {
  const DenseMatrix a = p.generator();
  DenseMatrix plus = DenseMatrix::identity(p.d);
  DenseMatrix minus = DenseMatrix::identity(p.d);
  for (std::size_t i = 0; i < a.span().size(); ++i) {
    plus.span()[i] += a.span()[i];
    minus.span()[i] -= a.span()[i];
  }
  try {
    return lu_solve(plus, minus);
  } catch (const Error& e) {
    // I + A is invertible for any real skew-symmetric A.
    throw Error("internal", std::string("Cayley solve failed: ") + e.what());
  }
}

std::vector<double> cayley_backward(const CayleyParams& p, const DenseMatrix& grad_q) {
  const std::size_t d = p.d;
  if (grad_q.rows() != d || grad_q.cols() != d) {
    throw Error("shape", "Cayley gradient must be " + std::to_string(d) + "x" +
                             std::to_string(d));
  }
  const DenseMatrix a = p.generator();
  const DenseMatrix q = cayley_materialize(p);

  // G M^T = (M G^T)^T with M G^T = solve(I + A, G^T).
  DenseMatrix plus = DenseMatrix::identity(d);
  for (std::size_t i = 0; i < a.span().size(); ++i) plus.span()[i] += a.span()[i];
  const DenseMatrix gmt = lu_solve(plus, grad_q.transpose()).transpose();

  DenseMatrix i_plus_q_t = q.transpose();
  for (std::size_t i = 0; i < d; ++i) i_plus_q_t(i, i) += 1.0;
  const DenseMatrix ga = mat_mul(i_plus_q_t, gmt);  // = -dL/dA

  std::vector<double> out(CayleyParams::count(d));
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j, ++k) out[k] = -(ga(i, j) - ga(j, i));
  return out;
}

CompositeWork::CompositeWork(const CompositeParams& c)
    : params(c), q1(cayley_materialize(c.q1)) {
  c.validate();
}

void kron_apply_inplace(const CompositeWork& w, std::span<double> x) {
  const auto& c = w.params;
  require_dim(c, x.size());
  for (std::size_t i = 0; i < c.d1; ++i) {
    butterfly_forward_inplace(c.b2, x.subspan(i * c.d2, c.d2));
  }
  left_multiply(w.q1, x, c.d2, false);
}

void kron_transpose_inplace(const CompositeWork& w, std::span<double> y) {
  const auto& c = w.params;
  require_dim(c, y.size());
  left_multiply(w.q1, y, c.d2, true);
  for (std::size_t i = 0; i < c.d1; ++i) {
    butterfly_transpose_inplace(c.b2, y.subspan(i * c.d2, c.d2));
  }
}

DenseVector kron_apply(const CompositeParams& c, const DenseVector& x) {
  const CompositeWork w(c);
  DenseVector y = x;
  kron_apply_inplace(w, y.span());
  return y;
}

DenseVector kron_transpose(const CompositeParams& c, const DenseVector& y) {
  const CompositeWork w(c);
  DenseVector x = y;
  kron_transpose_inplace(w, x.span());
  return x;
}

void kron_backward_accumulate(const CompositeWork& w, std::span<const double> x,
                              std::span<const double> grad_out, DenseMatrix& grad_q1,
                              std::span<double> grad_angles, std::span<double> grad_x) {
  const auto& c = w.params;
  require_dim(c, x.size());
  require_dim(c, grad_out.size());
  require_dim(c, grad_x.size());
  const std::size_t d1 = c.d1;
  const std::size_t d2 = c.d2;

  // Y = Q1 Z with Z = X B2^T (row i of Z is B2 x_i).
  std::vector<double> z(x.begin(), x.end());
  for (std::size_t i = 0; i < d1; ++i) {
    butterfly_forward_inplace(c.b2, std::span<double>(z).subspan(i * d2, d2));
  }
  // dL/dQ1 += G Z^T.
  for (std::size_t i = 0; i < d1; ++i) {
    for (std::size_t k = 0; k < d1; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d2; ++j) acc += grad_out[i * d2 + j] * z[k * d2 + j];
      grad_q1(i, k) += acc;
    }
  }
  // dL/dZ = Q1^T G, then back through each row's butterfly.
  std::vector<double> gz(grad_out.begin(), grad_out.end());
  left_multiply(w.q1, gz, d2, true);
  for (std::size_t i = 0; i < d1; ++i) {
    butterfly_backward_accumulate(c.b2, x.subspan(i * d2, d2),
                                  std::span<const double>(gz).subspan(i * d2, d2),
                                  grad_angles, grad_x.subspan(i * d2, d2));
  }
}

CompositeGrad kron_backward(const CompositeParams& c, const DenseVector& x,
                            const DenseVector& grad_out) {
  const CompositeWork w(c);
  require_dim(c, x.dim());
  require_dim(c, grad_out.dim());
  DenseMatrix grad_q1(c.d1, c.d1);
  CompositeGrad out;
  out.angles.assign(c.b2.angles.size(), 0.0);
  out.x = DenseVector(c.dim());
  kron_backward_accumulate(w, x.span(), grad_out.span(), grad_q1, out.angles,
                           out.x.span());
  out.skew = cayley_backward(c.q1, grad_q1);
  return out;
}

std::pair<std::size_t, std::size_t> choose_factorization(std::size_t d) {
  if (d < 1) throw Error("dimension", "dimension must be >= 1");
  if (is_power_of_two(d)) return {1, d};
  if (d % 2 == 1) {
    throw Error("no-pow2-factor",
                std::to_string(d) + " is odd; supply an explicit factorization");
  }
  for (std::size_t d2 = 2; d % d2 == 0; d2 *= 2) {
    if (d / d2 <= d2) return {d / d2, d2};
  }
  throw Error("no-pow2-factor", std::to_string(d) +
                                    " has no power-of-2 divisor d2 with d/d2 <= d2; "
                                    "supply an explicit factorization");
}

}  // namespace bfq
