#ifndef UNETV2_AUTOGRAD_HPP
#define UNETV2_AUTOGRAD_HPP

#include "unetv2/tensor.hpp"

#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace unetv2 {

/// Raised when a forward operation produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A named learnable tensor together with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph is alive and not cleared.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<T>& graph() const {
    if (!graph_) throw std::logic_error("var: detached handle");
    return *graph_;
  }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const { return graph().value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return graph().requires_grad(*this); }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only tape for reverse-mode differentiation. One graph per forward pass;
/// `backward` may run once, after which the graph must be cleared and re-recorded.
template <typename T>
class Graph {
 public:
  /// Receives the gradient of the node's output and accumulates into its inputs
  /// through `grad_target`.
  using Backward = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, {}, nullptr); }

  Var<T> variable(Tensor<T> value) { return push("variable", std::move(value), true, {}, nullptr); }

  /// Leaf bound to `p`; backward adds into `p.grad`.
  Var<T> parameter(Parameter<T>& p) { return push("parameter", p.value, true, {}, &p); }

  /// Records a computed node. The output requires grad iff any input does;
  /// otherwise `backward` is dropped.
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
  }

  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs, Backward backward) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) {
      check_owned(in);
      ids.push_back(in.id());
      needs = needs || nodes_[in.id()].requires_grad;
    }
    Var<T> out = push(op, std::move(value), needs, std::move(ids), nullptr);
    if (needs) nodes_.back().backward = std::move(backward);
    return out;
  }

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }
  std::string_view op(Var<T> v) const { return node(v).op; }

  /// Gradient of the last backward pass with respect to `v`, if one reached it.
  const Tensor<T>* grad(Var<T> v) const {
    const auto& n = node(v);
    return n.grad ? &*n.grad : nullptr;
  }

  /// Buffer an operation's backward rule accumulates into; nullptr if `v` needs no gradient.
  Tensor<T>* grad_target(Var<T> v) {
    auto& n = nodes_[v.id()];
    if (!n.requires_grad) return nullptr;
    if (!n.grad) n.grad.emplace(n.value.shape());
    return &*n.grad;
  }

  void backward(Var<T> loss) {
    check_owned(loss);
    if (backward_done_) {
      throw std::logic_error("backward: graph was already differentiated; record a new forward pass");
    }
    if (node(loss).value.size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar, got shape " + to_string(node(loss).value.shape()));
    }
    backward_done_ = true;
    if (Tensor<T>* seed = grad_target(loss)) seed->fill(T{1});
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (!n.grad) continue;
      if (n.backward) n.backward(*this, *n.grad);
      if (n.param) {
        auto& dst = n.param->grad;
        if (dst.shape() != n.value.shape()) dst = Tensor<T>(n.value.shape());
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += (*n.grad)[k];
      }
    }
  }

  void clear() {
    nodes_.clear();
    backward_done_ = false;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    Backward backward;
    Parameter<T>* param = nullptr;
    std::optional<Tensor<T>> grad;
  };

  Var<T> push(std::string_view op, Tensor<T> value, bool requires_grad, std::vector<std::size_t> inputs,
              Parameter<T>* param) {
    if (backward_done_) {
      throw std::logic_error("graph: cannot record after backward; call clear() first");
    }
    if (!value.all_finite()) {
      throw NonFiniteError(std::string(op) + ": non-finite value" + (param ? " in " + param->name : std::string()));
    }
    nodes_.push_back(Node{std::string(op), std::move(value), requires_grad, std::move(inputs), {}, param, {}});
    return Var<T>(this, nodes_.size() - 1);
  }

  void check_owned(Var<T> v) const {
    if (&v.graph() != this || v.id() >= nodes_.size()) {
      throw std::logic_error("graph: variable belongs to a different graph");
    }
  }

  const Node& node(Var<T> v) const {
    check_owned(v);
    return nodes_[v.id()];
  }

  // deque keeps node references stable while new nodes are appended
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace unetv2

#endif  // UNETV2_AUTOGRAD_HPP
