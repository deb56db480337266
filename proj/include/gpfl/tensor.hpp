#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gpfl/errors.hpp"

namespace gpfl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_to_string(const Shape& s);

namespace detail {

// One node of the dynamic differentiation graph. Nodes are recorded on
// forward; `backprop` reads this node's grad and accumulates into the
// tracked parents. Parents are held by shared_ptr so intermediate values
// survive until backward runs.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // lazily allocated, zero-filled
  bool tracked = false;
  bool frozen = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

struct Access;

}  // namespace detail

// Dense 64-bit float tensor handle. Copying copies the handle, not the
// buffer; a tensor and all views of it share one graph node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool tracked = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool tracked = false);
  static Tensor scalar(double v, bool tracked = false);

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }

  double item() const;

  std::span<const double> values() const { return node_->value; }
  // In-place mutation of the raw buffer (optimizer steps, broadcast installs).
  std::span<double> values_mut() { return node_->value; }

  std::span<const double> grad() const { return node_->ensure_grad(); }
  void zero_grad() const;

  bool tracked() const { return node_->tracked; }
  bool frozen() const { return node_->frozen; }
  // Frozen tensors never participate in a graph and never accumulate grad.
  void freeze();

  // Deep copy with no graph participation.
  Tensor detached() const;

  // Reverse pass from this scalar; visits the graph in reverse topological
  // order exactly once, accumulating additively at fan-in points.
  void backward() const;

  std::uint64_t id() const { return node_->id; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
  friend struct detail::Access;
};

// While a guard is alive on a thread, newly created tensors are untracked;
// evaluation paths use it to skip graph recording entirely.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

struct Access {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
  static std::shared_ptr<Node> make(Shape shape, bool tracked);
};

}  // namespace detail

}  // namespace gpfl
