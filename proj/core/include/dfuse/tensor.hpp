#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dfuse {

// Dense row-major float64 matrix. Summations over its entries always run
// left to right so results are bit-reproducible.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(std::span<const std::vector<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// log(sum(exp(v))) evaluated as m + log(sum(exp(v - m))), m = max(v).
// Throws UsageError on an empty vector.
double logsumexp(std::span<const double> v);

// Row-wise softmax; each row is shifted by its max before exponentiation.
Matrix softmax_rows(const Matrix& m);

// Throws DegenerateEmbeddingError if a row has norm below kDegenerateNorm.
Matrix l2_normalize_rows(const Matrix& m);
std::vector<double> l2_normalize(std::span<const double> v);

inline constexpr double kDegenerateNorm = 1e-12;

// out(i, j) = dot(a_i, b_j) / sigma.
Matrix similarity_matrix(const Matrix& a, const Matrix& b, double sigma);

}  // namespace dfuse
