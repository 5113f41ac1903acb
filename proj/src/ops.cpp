#include "unetv2/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace unetv2 {
namespace {

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
  }
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(a[k], b[k]);
  return out;
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(a[k]);
  return out;
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

struct Reduction {
  Shape kept;      // output shape with reduced axes set to 1
  Shape dropped;   // output shape without reduced axes
  std::vector<std::size_t> out_index;  // flat output index for each input element
  std::size_t group = 1;               // elements per reduced group
};

Reduction plan_reduction(const char* op, const Shape& in, std::vector<std::size_t> axes) {
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
    throw std::invalid_argument(std::string(op) + ": repeated axis");
  }
  Reduction r;
  r.kept = in;
  for (std::size_t axis : axes) {
    if (axis >= in.size()) {
      throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                                  to_string(in));
    }
    r.group *= in[axis];
    r.kept[axis] = 1;
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!std::binary_search(axes.begin(), axes.end(), i)) r.dropped.push_back(in[i]);
  }
  // output strides in input coordinates, zero along reduced axes
  auto out_strides = strides_of(r.kept);
  for (std::size_t axis : axes) out_strides[axis] = 0;

  const std::size_t total = shape_size(in);
  r.out_index.resize(total);
  std::vector<std::size_t> idx(in.size(), 0);
  std::size_t flat_out = 0;
  for (std::size_t k = 0; k < total; ++k) {
    r.out_index[k] = flat_out;
    for (std::size_t d = in.size(); d-- > 0;) {
      ++idx[d];
      flat_out += out_strides[d];
      if (idx[d] < in[d]) break;
      flat_out -= out_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  return r;
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  auto out = zip(a.value(), b.value(), [](T x, T y) { return x + y; });
  return a.graph().record("add", std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& grad) {
    for (Var<T> v : {a, b}) {
      if (auto* t = g.grad_target(v)) {
        for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += grad[k];
      }
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  auto out = zip(a.value(), b.value(), [](T x, T y) { return x - y; });
  return a.graph().record("sub", std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(a)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += grad[k];
    }
    if (auto* t = g.grad_target(b)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] -= grad[k];
    }
  });
}

template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  require_same_shape("hadamard", a, b);
  auto out = zip(a.value(), b.value(), [](T x, T y) { return x * y; });
  return a.graph().record("hadamard", std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& grad) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    if (auto* t = g.grad_target(a)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += grad[k] * bv[k];
    }
    if (auto* t = g.grad_target(b)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += grad[k] * av[k];
    }
  });
}

template <typename T>
Var<T> divide(Var<T> a, Var<T> b) {
  require_same_shape("divide", a, b);
  auto out = zip(a.value(), b.value(), [](T x, T y) { return x / y; });
  return a.graph().record("divide", std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& grad) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    if (auto* t = g.grad_target(a)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += grad[k] / bv[k];
    }
    if (auto* t = g.grad_target(b)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] -= grad[k] * av[k] / (bv[k] * bv[k]);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  auto out = map(x.value(), [factor](T v) { return factor * v; });
  return x.graph().record("scale", std::move(out), {x}, [x, factor](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += factor * grad[k];
    }
  });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T offset) {
  auto out = map(x.value(), [offset](T v) { return v + offset; });
  return x.graph().record("add_scalar", std::move(out), {x}, [x](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += grad[k];
    }
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + to_string(as) + " and " + to_string(bs));
  }
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor<T> out({m, n});
  out.matrix(m, n).noalias() = a.value().matrix(m, k) * b.value().matrix(k, n);
  return a.graph().record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Graph<T>& g, const Tensor<T>& grad) {
    const auto go = grad.matrix(m, n);
    if (auto* t = g.grad_target(a)) {
      t->matrix(m, k).noalias() += go * g.value(b).matrix(k, n).transpose();
    }
    if (auto* t = g.grad_target(b)) {
      t->matrix(k, n).noalias() += g.value(a).matrix(m, k).transpose() * go;
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  auto out = map(x.value(), [](T v) { return v > T{0} ? v : T{0}; });
  return x.graph().record("relu", std::move(out), {x}, [x](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      const auto& xv = g.value(x);
      for (std::size_t k = 0; k < grad.size(); ++k) {
        if (xv[k] > T{0}) (*t)[k] += grad[k];
      }
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  auto out = map(x.value(), [](T v) { return T{1} / (T{1} + std::exp(-v)); });
  const std::size_t self = x.graph().size();
  return x.graph().record("sigmoid", std::move(out), {x}, [x, self](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      const auto& s = g.value(Var<T>(&g, self));
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += grad[k] * s[k] * (T{1} - s[k]);
    }
  });
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, Var<T> targets) {
  require_same_shape("bce_with_logits", logits, targets);
  auto out = zip(logits.value(), targets.value(), [](T x, T y) {
    return std::max(x, T{0}) - x * y + std::log1p(std::exp(-std::abs(x)));
  });
  return logits.graph().record("bce_with_logits", std::move(out), {logits, targets},
                               [logits, targets](Graph<T>& g, const Tensor<T>& grad) {
                                 if (auto* t = g.grad_target(logits)) {
                                   const auto& xv = g.value(logits);
                                   const auto& yv = g.value(targets);
                                   for (std::size_t k = 0; k < grad.size(); ++k) {
                                     const T s = T{1} / (T{1} + std::exp(-xv[k]));
                                     (*t)[k] += grad[k] * (s - yv[k]);
                                   }
                                 }
                               });
}

template <typename T>
Var<T> reduce_sum(Var<T> x, std::vector<std::size_t> axes, bool keep_dims) {
  auto plan = std::make_shared<Reduction>(plan_reduction("reduce_sum", x.shape(), std::move(axes)));
  const auto& xv = x.value();
  Tensor<T> out(keep_dims ? plan->kept : plan->dropped);
  for (std::size_t k = 0; k < xv.size(); ++k) out[plan->out_index[k]] += xv[k];
  return x.graph().record("reduce_sum", std::move(out), {x}, [x, plan](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t k = 0; k < t->size(); ++k) (*t)[k] += grad[plan->out_index[k]];
    }
  });
}

template <typename T>
Var<T> reduce_mean(Var<T> x, std::vector<std::size_t> axes, bool keep_dims) {
  auto plan = std::make_shared<Reduction>(plan_reduction("reduce_mean", x.shape(), std::move(axes)));
  const auto& xv = x.value();
  Tensor<T> out(keep_dims ? plan->kept : plan->dropped);
  for (std::size_t k = 0; k < xv.size(); ++k) out[plan->out_index[k]] += xv[k];
  const T count = static_cast<T>(plan->group);
  for (auto& v : out.values()) v /= count;
  return x.graph().record("reduce_mean", std::move(out), {x}, [x, plan, count](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t k = 0; k < t->size(); ++k) (*t)[k] += grad[plan->out_index[k]] / count;
    }
  });
}

template <typename T>
Var<T> reduce_max(Var<T> x, std::vector<std::size_t> axes, bool keep_dims) {
  auto plan = plan_reduction("reduce_max", x.shape(), std::move(axes));
  const auto& xv = x.value();
  Tensor<T> out(keep_dims ? plan.kept : plan.dropped);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size(), xv.size());
  for (std::size_t k = 0; k < xv.size(); ++k) {
    const std::size_t o = plan.out_index[k];
    // first maximizer wins ties
    if ((*argmax)[o] == xv.size() || xv[k] > out[o]) {
      out[o] = xv[k];
      (*argmax)[o] = k;
    }
  }
  return x.graph().record("reduce_max", std::move(out), {x}, [x, argmax](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t o = 0; o < grad.size(); ++o) (*t)[(*argmax)[o]] += grad[o];
    }
  });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
  T total{0};
  for (T v : x.value().values()) total += v;
  return x.graph().record("sum_all", Tensor<T>::scalar(total), {x}, [x](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (auto& v : t->values()) v += grad[0];
    }
  });
}

template <typename T>
Var<T> mean_all(Var<T> x) {
  T total{0};
  for (T v : x.value().values()) total += v;
  const T count = static_cast<T>(x.value().size());
  return x.graph().record("mean_all", Tensor<T>::scalar(total / count), {x},
                          [x, count](Graph<T>& g, const Tensor<T>& grad) {
                            if (auto* t = g.grad_target(x)) {
                              for (auto& v : t->values()) v += grad[0] / count;
                            }
                          });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw std::invalid_argument("concat: axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw std::invalid_argument("concat: incompatible shapes " + to_string(first) + " and " + to_string(s) +
                                  " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  Tensor<T> out(out_shape);
  const AxisSplit os = split_at(out_shape, axis);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto& v = p.value();
    const std::size_t block = p.shape()[axis] * os.inner;
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy_n(v.data() + o * block, block, out.data() + o * os.extent * os.inner + offset * os.inner);
    }
    offset += p.shape()[axis];
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].graph().record(
      "concat", std::move(out), inputs, [inputs, offsets, os, axis](Graph<T>& g, const Tensor<T>& grad) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          auto* t = g.grad_target(inputs[i]);
          if (!t) continue;
          const std::size_t block = t->shape()[axis] * os.inner;
          for (std::size_t o = 0; o < os.outer; ++o) {
            const T* src = grad.data() + o * os.extent * os.inner + offsets[i] * os.inner;
            T* dst = t->data() + o * block;
            for (std::size_t k = 0; k < block; ++k) dst[k] += src[k];
          }
        }
      });
}

template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& in = x.shape();
  if (axis >= in.size() || begin >= end || end > in[axis]) {
    throw std::invalid_argument("slice: invalid range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") on axis " + std::to_string(axis) + " of " + to_string(in));
  }
  Shape out_shape = in;
  out_shape[axis] = end - begin;
  const AxisSplit is = split_at(in, axis);
  const std::size_t block = (end - begin) * is.inner;
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < is.outer; ++o) {
    std::copy_n(xv.data() + o * is.extent * is.inner + begin * is.inner, block, out.data() + o * block);
  }
  return x.graph().record("slice", std::move(out), {x}, [x, is, begin, block](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t o = 0; o < is.outer; ++o) {
        T* dst = t->data() + o * is.extent * is.inner + begin * is.inner;
        const T* src = grad.data() + o * block;
        for (std::size_t k = 0; k < block; ++k) dst[k] += src[k];
      }
    }
  });
}

template <typename T>
std::vector<Var<T>> split(Var<T> x, std::size_t axis, std::span<const std::size_t> sizes) {
  if (axis >= x.shape().size()) throw std::invalid_argument("split: axis out of range");
  if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != x.shape()[axis]) {
    throw std::invalid_argument("split: sizes do not cover axis extent of " + to_string(x.shape()));
  }
  std::vector<Var<T>> out;
  std::size_t begin = 0;
  for (std::size_t s : sizes) {
    out.push_back(slice(x, axis, begin, begin + s));
    begin += s;
  }
  return out;
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  auto out = x.value().reshaped(std::move(shape));
  return x.graph().record("reshape", std::move(out), {x}, [x](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[k] += grad[k];
    }
  });
}

template <typename T>
Var<T> expand(Var<T> x, Shape shape) {
  const Shape& in = x.shape();
  bool ok = in.size() == shape.size();
  for (std::size_t i = 0; ok && i < in.size(); ++i) ok = in[i] == shape[i] || in[i] == 1;
  if (!ok) throw std::invalid_argument("expand: cannot expand " + to_string(in) + " to " + to_string(shape));

  auto in_strides = strides_of(in);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != shape[i]) in_strides[i] = 0;
  }
  const std::size_t total = shape_size(shape);
  auto source = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> idx(shape.size(), 0);
  std::size_t flat_in = 0;
  for (std::size_t k = 0; k < total; ++k) {
    (*source)[k] = flat_in;
    for (std::size_t d = shape.size(); d-- > 0;) {
      ++idx[d];
      flat_in += in_strides[d];
      if (idx[d] < shape[d]) break;
      flat_in -= in_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  Tensor<T> out(shape);
  const auto& xv = x.value();
  for (std::size_t k = 0; k < total; ++k) out[k] = xv[(*source)[k]];
  return x.graph().record("expand", std::move(out), {x}, [x, source](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[(*source)[k]] += grad[k];
    }
  });
}

#define UNETV2_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add(Var<T>, Var<T>);                                                         \
  template Var<T> sub(Var<T>, Var<T>);                                                         \
  template Var<T> hadamard(Var<T>, Var<T>);                                                    \
  template Var<T> divide(Var<T>, Var<T>);                                                      \
  template Var<T> scale(Var<T>, T);                                                            \
  template Var<T> add_scalar(Var<T>, T);                                                       \
  template Var<T> matmul(Var<T>, Var<T>);                                                      \
  template Var<T> relu(Var<T>);                                                                \
  template Var<T> sigmoid(Var<T>);                                                             \
  template Var<T> bce_with_logits(Var<T>, Var<T>);                                             \
  template Var<T> reduce_sum(Var<T>, std::vector<std::size_t>, bool);                          \
  template Var<T> reduce_mean(Var<T>, std::vector<std::size_t>, bool);                         \
  template Var<T> reduce_max(Var<T>, std::vector<std::size_t>, bool);                          \
  template Var<T> sum_all(Var<T>);                                                             \
  template Var<T> mean_all(Var<T>);                                                            \
  template Var<T> concat(std::span<const Var<T>>, std::size_t);                                \
  template Var<T> slice(Var<T>, std::size_t, std::size_t, std::size_t);                        \
  template std::vector<Var<T>> split(Var<T>, std::size_t, std::span<const std::size_t>);       \
  template Var<T> reshape(Var<T>, Shape);                                                      \
  template Var<T> expand(Var<T>, Shape);

UNETV2_INSTANTIATE_OPS(float)
UNETV2_INSTANTIATE_OPS(double)

}  // namespace unetv2
