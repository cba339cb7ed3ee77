#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bfq {

/// Dense vector of 64-bit floats.
class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  // Throws Error("non-finite") if any entry is NaN or Inf.
  explicit DenseVector(std::vector<double> entries);
  DenseVector(std::initializer_list<double> entries)
      : DenseVector(std::vector<double>(entries)) {}

  std::size_t dim() const noexcept { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& entries() const noexcept { return data_; }

  static DenseVector basis(std::size_t dim, std::size_t index);

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 private:
  std::vector<double> data_;
};

/// Row-major dense matrix of 64-bit floats.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws Error("shape") on a length mismatch, Error("non-finite") on NaN/Inf.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static DenseMatrix identity(std::size_t n);
  // Rows given as nested initializer lists; all rows must have equal length.
  static DenseMatrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  DenseVector column(std::size_t j) const;

  std::span<const double> span() const noexcept { return data_; }
  std::span<double> span() noexcept { return data_; }
  const std::vector<double>& entries() const noexcept { return data_; }

  DenseMatrix transpose() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using VectorMap = std::function<DenseVector(const DenseVector&)>;

bool is_power_of_two(std::size_t n) noexcept;
// floor(log2 n) for n >= 1.
int log2_floor(std::size_t n) noexcept;

// y[i] = sum_j A[i,j] x[j], accumulated in ascending j.
DenseVector mat_vec(const DenseMatrix& a, const DenseVector& x);
DenseMatrix mat_mul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b);

// Solves A X = B by LU with partial pivoting. Error("singular") when a pivot
// falls below 1e-12 in magnitude.
DenseMatrix lu_solve(const DenseMatrix& a, const DenseMatrix& b);

// Orthonormal Sylvester-Hadamard matrix, H_{2n} = [[H, H], [H, -H]] / sqrt(2).
DenseMatrix hadamard_direct(std::size_t n);

// Haar-distributed orthogonal matrix: Householder QR of a Gaussian matrix with
// the columns of Q sign-corrected so that diag(R) > 0.
DenseMatrix haar_orthogonal(std::size_t n, std::uint64_t seed);

// Column j of the result is apply(e_j).
DenseMatrix materialize(const VectorMap& apply, std::size_t n);

// max |Q^T Q - I| computed exactly (blocked, O(n^3)).
double orthogonality_deviation(const DenseMatrix& q);

double max_abs(std::span<const double> x) noexcept;
double norm2(std::span<const double> x) noexcept;
double frobenius_norm(const DenseMatrix& a) noexcept;
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace bfq
