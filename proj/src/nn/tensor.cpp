#include "litevsr/nn/tensor.hpp"

#include <unordered_set>

#include <fmt/format.h>

#include "litevsr/errors.hpp"

namespace litevsr::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

size_t numel(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

std::string shape_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, ", "));
}

Var Var::constant(Shape shape, std::vector<double> value) {
  if (nn::numel(shape) != value.size()) {
    throw DimensionError(fmt::format("constant: shape {} does not hold {} values",
                                     shape_string(shape), value.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::zeros(Shape shape) {
  const size_t n = nn::numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Var Var::leaf(Shape shape, std::vector<double> value, bool requires_grad) {
  Var v = constant(std::move(shape), std::move(value));
  v.node_->requires_grad = requires_grad;
  return v;
}

int Var::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError(fmt::format("axis {} out of range for rank {}", axis, r));
  }
  return node_->shape[axis];
}

double Var::item() const {
  if (numel() != 1) {
    throw DimensionError(fmt::format("item() on tensor of shape {}", shape_string(shape())));
  }
  return node_->value[0];
}

void Var::backward() const {
  if (numel() != 1) throw DimensionError("backward() without seed requires a scalar");
  const double one = 1.0;
  backward(std::span<const double>(&one, 1));
}

void Var::backward(std::span<const double> seed) const {
  if (seed.size() != numel()) throw DimensionError("backward seed size mismatch");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  auto& g = node_->ensure_grad();
  for (size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are not needed after the sweep; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward_fn) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_result(Shape shape, std::vector<double> value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.shared());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

}  // namespace litevsr::nn
