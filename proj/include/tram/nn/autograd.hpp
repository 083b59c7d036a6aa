#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tram/nn/tensor.hpp"

namespace tram::nn {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents

  /// Grad buffer shaped like value, zero-initialised on first use.
  Tensor& grad_buffer();
};

/// Handle to a node of the computation graph. Graphs are rebuilt for every
/// forward pass; parameters are long-lived leaf nodes shared between passes.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  [[nodiscard]] const Tensor& value() const { return node_->value; }
  [[nodiscard]] Tensor& value() { return node_->value; }
  [[nodiscard]] const Tensor& grad() const { return node_->grad; }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  [[nodiscard]] const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf without gradient.
[[nodiscard]] Var constant(Tensor value);
/// Leaf that accumulates gradient.
[[nodiscard]] Var leaf(Tensor value);

/// Interior node; parents are recorded and `requires_grad` is inherited.
[[nodiscard]] Var make_node(Tensor value, std::vector<Var> parents,
                            std::function<void(Node&)> backward);

/// Reverse-mode sweep from a scalar. Gradients accumulate into every
/// reachable node that requires them.
void backward(const Var& scalar);

struct Parameter {
  std::string name;
  Var var;

  Parameter() = default;
  Parameter(std::string n, Tensor init) : name(std::move(n)), var(leaf(std::move(init))) {}
  // Copies are deep: a copied model never shares weights with its source.
  Parameter(const Parameter& other)
      : name(other.name), var(other.var ? leaf(other.value()) : Var()) {}
  Parameter& operator=(const Parameter& other) {
    if (this != &other) {
      name = other.name;
      var = other.var ? leaf(other.value()) : Var();
    }
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  [[nodiscard]] Tensor& value() { return var.value(); }
  [[nodiscard]] const Tensor& value() const { return var.value(); }
  [[nodiscard]] Tensor& grad() { return var.node()->grad_buffer(); }
  void zero_grad() { grad().fill(0.0); }
};

}  // namespace tram::nn
