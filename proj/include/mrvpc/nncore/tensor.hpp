#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrvpc::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

using Shape = std::vector<std::size_t>;

/// Storage aligned to Eigen's widest packet so that vectorized kernels take the
/// same code path (and produce the same rounding) for every buffer.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array. Rank 1 tensors view as a single row; higher ranks view
/// as shape[0] x (product of the remaining dims).
template <typename T>
struct Tensor {
  Shape shape;
  AlignedVector<T> values;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), values(shape_size(shape), T(0)) {}
  Tensor(Shape s, AlignedVector<T> v) : shape(std::move(s)), values(std::move(v)) {
    check_size();
  }
  Tensor(Shape s, const std::vector<T>& v) : shape(std::move(s)), values(v.begin(), v.end()) {
    check_size();
  }

  void check_size() const {
    if (values.size() != shape_size(shape))
      throw std::invalid_argument("tensor: value count does not match shape " +
                                  shape_string(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.size() <= 1 ? 1 : shape[0]; }
  std::size_t cols() const { return rows() == 0 ? 0 : size() / rows(); }

  MatMap<T> mat() {
    return MatMap<T>(values.data(), static_cast<Eigen::Index>(rows()),
                     static_cast<Eigen::Index>(cols()));
  }
  ConstMatMap<T> mat() const {
    return ConstMatMap<T>(values.data(), static_cast<Eigen::Index>(rows()),
                          static_cast<Eigen::Index>(cols()));
  }

  bool all_finite() const {
    for (T v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(T v) { std::fill(values.begin(), values.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape, AlignedVector<U>(values.begin(), values.end()));
  }
};

template <typename T>
Tensor<T> from_matrix(const Mat<T>& m) {
  Tensor<T> t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.mat() = m;
  return t;
}

}  // namespace mrvpc::nn
