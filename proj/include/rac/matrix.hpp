#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace rac {

/// Dense row-major matrix. Rows are handed out as spans; no striding, no
/// views, no expression templates. Enough linear algebra for this library
/// lives in the free functions below.
template <typename T>
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<T> data_;
};

// The helpers below take anything indexable with a size(): spans and vectors
// of float or double mix freely. All accumulation is in doubles.

/// Inner product with a 64-bit accumulator regardless of element type.
inline double dot(const auto& a, const auto& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

inline double squared_distance(const auto& a, const auto& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return acc;
}

inline double squared_norm(const auto& a) { return dot(a, a); }

/// y = M x, computed row by row with double accumulation.
template <typename T>
inline std::vector<double> matvec(const Matrix<T>& m, const auto& x) {
  std::vector<double> y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    y[r] = dot(m.row(r), x);
  }
  return y;
}

}  // namespace rac
