#include "bfq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bfq/error.hpp"
#include "bfq/rng.hpp"

namespace bfq {

namespace {

void require_finite(std::span<const double> x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw Error("non-finite", "entry " + std::to_string(i) + " is not finite");
    }
  }
}

std::string dims(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

DenseVector::DenseVector(std::vector<double> entries) : data_(std::move(entries)) {
  require_finite(data_);
}

DenseVector DenseVector::basis(std::size_t dim, std::size_t index) {
  DenseVector e(dim);
  e[index] = 1.0;
  return e;
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows * cols) {
    throw Error("shape", "expected " + std::to_string(rows * cols) +
                             " entries for " + dims(rows, cols) + ", got " +
                             std::to_string(data_.size()));
  }
  require_finite(data_);
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error("shape", "ragged row list");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(data));
}

DenseVector DenseMatrix::column(std::size_t j) const {
  DenseVector v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

int log2_floor(std::size_t n) noexcept {
  int k = 0;
  while (n > 1) {
    n >>= 1;
    ++k;
  }
  return k;
}

DenseVector mat_vec(const DenseMatrix& a, const DenseVector& x) {
  if (a.cols() != x.dim()) {
    throw Error("shape", "mat_vec " + dims(a.rows(), a.cols()) + " by " +
                             std::to_string(x.dim()));
  }
  DenseVector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

DenseMatrix mat_mul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw Error("shape", "mat_mul " + dims(a.rows(), a.cols()) + " by " +
                             dims(b.rows(), b.cols()));
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

DenseMatrix lu_solve(const DenseMatrix& a, const DenseMatrix& b) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw Error("shape", "lu_solve needs a square matrix");
  if (b.rows() != n) {
    throw Error("shape", "lu_solve rhs has " + std::to_string(b.rows()) +
                             " rows, expected " + std::to_string(n));
  }
  DenseMatrix lu = a;
  DenseMatrix x = b;
  const std::size_t m = b.cols();

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu(i, k)) > best) {
        best = std::abs(lu(i, k));
        piv = i;
      }
    }
    if (best < 1e-12) {
      throw Error("singular", "pivot " + std::to_string(k) + " below 1e-12");
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
      for (std::size_t j = 0; j < m; ++j) std::swap(x(k, j), x(piv, j));
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      lu(i, k) = f;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
      for (std::size_t j = 0; j < m; ++j) x(i, j) -= f * x(k, j);
    }
  }
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = x(ii, j);
      for (std::size_t k = ii + 1; k < n; ++k) acc -= lu(ii, k) * x(k, j);
      x(ii, j) = acc / lu(ii, ii);
    }
  }
  return x;
}

DenseMatrix hadamard_direct(std::size_t n) {
  if (!is_power_of_two(n)) {
    throw Error("dimension", std::to_string(n) + " is not a power of 2");
  }
  DenseMatrix h = DenseMatrix::identity(1);
  const double c = 1.0 / std::sqrt(2.0);
  for (std::size_t m = 1; m < n; m *= 2) {
    DenseMatrix next(2 * m, 2 * m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double v = c * h(i, j);
        next(i, j) = v;
        next(i, j + m) = v;
        next(i + m, j) = v;
        next(i + m, j + m) = -v;
      }
    }
    h = std::move(next);
  }
  return h;
}

DenseMatrix haar_orthogonal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix a(n, n);
  for (double& v : a.span()) v = rng.normal();

  // Householder QR; R overwrites a, reflectors are kept for forming Q.
  std::vector<double> rdiag(n);
  std::vector<std::vector<double>> reflectors;
  reflectors.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    const double alpha = a(k, k) > 0 ? -norm : norm;
    std::vector<double> v(n - k);
    for (std::size_t i = k; i < n; ++i) v[i - k] = a(i, k);
    v[0] -= alpha;
    double vnorm2 = 0.0;
    for (double vi : v) vnorm2 += vi * vi;
    if (vnorm2 > 0.0) {
      for (std::size_t j = k; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t i = k; i < n; ++i) dot += v[i - k] * a(i, j);
        const double f = 2.0 * dot / vnorm2;
        for (std::size_t i = k; i < n; ++i) a(i, j) -= f * v[i - k];
      }
    }
    rdiag[k] = a(k, k);
    reflectors.push_back(std::move(v));
  }

  // Q = H_0 H_1 ... H_{n-1}, accumulated backwards onto the identity.
  DenseMatrix q = DenseMatrix::identity(n);
  for (std::size_t kk = n; kk-- > 0;) {
    const auto& v = reflectors[kk];
    double vnorm2 = 0.0;
    for (double vi : v) vnorm2 += vi * vi;
    if (vnorm2 == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = kk; i < n; ++i) dot += v[i - kk] * q(i, j);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = kk; i < n; ++i) q(i, j) -= f * v[i - kk];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (rdiag[j] < 0) {
      for (std::size_t i = 0; i < n; ++i) q(i, j) = -q(i, j);
    }
  }
  return q;
}

DenseMatrix materialize(const VectorMap& apply, std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const DenseVector col = apply(DenseVector::basis(n, j));
    if (col.dim() != n) {
      throw Error("shape", "transform returned dim " + std::to_string(col.dim()) +
                               ", expected " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) m(i, j) = col[i];
  }
  return m;
}

double orthogonality_deviation(const DenseMatrix& q) {
  const std::size_t n = q.cols();
  const std::size_t rows = q.rows();
  constexpr std::size_t kBlock = 64;
  double worst = 0.0;
  std::vector<double> gram(kBlock * n);
  // Row i of Q^T Q is sum_k Q[k,i] * Q[k,:]; a block of gram rows is built per
  // sweep over Q so the block stays cache resident.
  for (std::size_t i0 = 0; i0 < n; i0 += kBlock) {
    const std::size_t i1 = std::min(n, i0 + kBlock);
    std::fill(gram.begin(), gram.end(), 0.0);
    for (std::size_t k = 0; k < rows; ++k) {
      const auto qk = q.row(k);
      for (std::size_t i = i0; i < i1; ++i) {
        const double qki = qk[i];
        if (qki == 0.0) continue;
        double* g = gram.data() + (i - i0) * n;
        for (std::size_t j = 0; j < n; ++j) g[j] += qki * qk[j];
      }
    }
    for (std::size_t i = i0; i < i1; ++i) {
      const double* g = gram.data() + (i - i0) * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double target = (i == j) ? 1.0 : 0.0;
        worst = std::max(worst, std::abs(g[j] - target));
      }
    }
  }
  return worst;
}

double max_abs(std::span<const double> x) noexcept {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double norm2(std::span<const double> x) noexcept {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

double frobenius_norm(const DenseMatrix& a) noexcept { return norm2(a.span()); }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("shape", "max_abs_diff length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace bfq
