#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace litevsr::nn {

using Shape = std::vector<int>;

size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

// Handle to a node of the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<double> value);
  static Var zeros(Shape shape);
  // Leaf whose gradient is accumulated by backward().
  static Var leaf(Shape shape, std::vector<double> value, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  size_t numel() const { return node_->value.size(); }

  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() const { node_->grad.clear(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) const { node_->requires_grad = flag; }
  double item() const;

  // Reverse-mode sweep from a scalar; d(self)/d(self) = 1.
  void backward() const;
  // Reverse-mode sweep with an explicit upstream gradient.
  void backward(std::span<const double> seed) const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph construction on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds an op result. The backward closure and parent links are kept only
// when some input requires a gradient and grad mode is on.
Var make_result(Shape shape, std::vector<double> value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn);

}  // namespace litevsr::nn
