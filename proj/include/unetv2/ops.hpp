#ifndef UNETV2_OPS_HPP
#define UNETV2_OPS_HPP

#include "unetv2/autograd.hpp"

#include <span>
#include <vector>

namespace unetv2 {

// Elementwise arithmetic. Operands must have identical shapes; scalar
// operands are expressed through `scale` and `add_scalar`.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b);
template <typename T>
Var<T> divide(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
template <typename T>
Var<T> add_scalar(Var<T> x, T offset);

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) {
  return add(a, b);
}
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) {
  return sub(a, b);
}
template <typename T>
Var<T> operator*(T factor, Var<T> x) {
  return scale(x, factor);
}

/// (m x k) . (k x n)
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);

/// Elementwise binary cross-entropy on logits: max(x,0) - x*y + log(1 + e^-|x|).
/// Differentiable in `logits` only.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, Var<T> targets);

// Reductions over a set of distinct axes. Reduced extents are dropped unless
// `keep_dims`, in which case they stay as 1.
template <typename T>
Var<T> reduce_sum(Var<T> x, std::vector<std::size_t> axes, bool keep_dims = false);
template <typename T>
Var<T> reduce_mean(Var<T> x, std::vector<std::size_t> axes, bool keep_dims = false);
/// Gradient goes to the first (lowest flat index) maximizer of each reduced group.
template <typename T>
Var<T> reduce_max(Var<T> x, std::vector<std::size_t> axes, bool keep_dims = false);
template <typename T>
Var<T> sum_all(Var<T> x);
template <typename T>
Var<T> mean_all(Var<T> x);

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts, std::size_t axis) {
  std::vector<Var<T>> v(parts);
  return concat<T>(std::span<const Var<T>>(v), axis);
}
/// Half-open range [begin, end) along `axis`.
template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T>
std::vector<Var<T>> split(Var<T> x, std::size_t axis, std::span<const std::size_t> sizes);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
/// Repeats extents of size 1 up to `shape` (same rank). Backward sums over the copies.
template <typename T>
Var<T> expand(Var<T> x, Shape shape);

}  // namespace unetv2

#endif  // UNETV2_OPS_HPP
