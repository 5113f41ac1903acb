#ifndef UNETV2_TENSOR_HPP
#define UNETV2_TENSOR_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace unetv2 {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Dense row-major n-dimensional array. A rank-0 tensor holds one element.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() : Tensor(Shape{}) {}

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_size(shape_)) {
      throw std::invalid_argument("tensor: " + std::to_string(data_.size()) +
                                  " values do not fill shape " + to_string(shape_));
    }
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, value); }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor(Shape{values.size()}, std::vector<T>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  template <typename... I>
  T& operator()(I... index) {
    return data_[offset({static_cast<std::size_t>(index)...})];
  }
  template <typename... I>
  const T& operator()(I... index) const {
    return data_[offset({static_cast<std::size_t>(index)...})];
  }

  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw std::out_of_range("tensor: index rank does not match " + to_string(shape_));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape_[axis]) throw std::out_of_range("tensor: index out of range");
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return flat;
  }

  Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    return std::move(out).reshaped(std::move(shape));
  }
  Tensor reshaped(Shape shape) && {
    if (shape_size(shape) != data_.size()) {
      throw std::invalid_argument("reshape: cannot view " + to_string(shape_) + " as " + to_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  MatrixMap<T> matrix(std::size_t rows, std::size_t cols) {
    return MatrixMap<T>(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  ConstMatrixMap<T> matrix(std::size_t rows, std::size_t cols) const {
    return ConstMatrixMap<T>(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Same shape and identical bit patterns.
template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

/// Extents of an (N, C, H, W) tensor.
struct Dims4 {
  std::size_t n, c, h, w;

  static Dims4 of(const Shape& shape) {
    if (shape.size() != 4) {
      throw std::invalid_argument("expected an (N, C, H, W) tensor, got " + to_string(shape));
    }
    return {shape[0], shape[1], shape[2], shape[3]};
  }
  Shape shape() const { return {n, c, h, w}; }
  std::size_t plane() const { return h * w; }
};

}  // namespace unetv2

#endif  // UNETV2_TENSOR_HPP
