#include "gpfl/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace gpfl {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

namespace {
std::atomic<std::uint64_t> g_next_id{1};
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

namespace detail {

std::shared_ptr<Node> Access::make(Shape shape, bool tracked) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_numel(shape), 0.0);
  n->shape = std::move(shape);
  n->tracked = tracked && grad_enabled();
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool tracked) {
  return detail::Access::wrap(detail::Access::make(std::move(shape), tracked));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool tracked) {
  if (values.size() != shape_numel(shape))
    throw DimensionError("tensor data size " + std::to_string(values.size()) +
                         " does not match shape " + shape_to_string(shape));
  auto n = detail::Access::make(std::move(shape), tracked);
  n->value = std::move(values);
  return detail::Access::wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool tracked) {
  auto n = detail::Access::make({}, tracked);
  n->value[0] = v;
  return detail::Access::wrap(std::move(n));
}

double Tensor::item() const {
  if (size() != 1)
    throw DimensionError("item() called on non-scalar tensor of shape " +
                         shape_to_string(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() const {
  auto& g = node_->ensure_grad();
  std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::freeze() {
  node_->frozen = true;
  node_->tracked = false;
  node_->parents.clear();
  node_->backprop = nullptr;
}

Tensor Tensor::detached() const {
  auto n = detail::Access::make(node_->shape, false);
  n->value = node_->value;
  return detail::Access::wrap(std::move(n));
}

void Tensor::backward() const {
  if (size() != 1)
    throw DimensionError("backward() requires a scalar loss, got shape " +
                         shape_to_string(shape()));
  if (!node_->tracked) return;

  // Iterative post-order DFS: parents land before consumers, so walking the
  // list in reverse propagates each node's grad after all of its consumers
  // contributed.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* n;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next_parent++].get();
      if (p->tracked && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace gpfl
